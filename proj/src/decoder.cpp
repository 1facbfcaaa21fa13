#include "resicap/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "resicap/data.hpp"

namespace resicap::decoder {

std::vector<std::pair<std::string, Tensor>> DecoderParams::parameters(
    const std::string& prefix) const {
  return {
      {prefix + ".embedding", embedding},
      {prefix + ".lstm_w", lstm_w},
      {prefix + ".lstm_b", lstm_b},
      {prefix + ".out_w", out_w},
      {prefix + ".out_b", out_b},
  };
}

DecoderParams make_decoder_params(const DecoderConfig& cfg, std::mt19937_64& rng) {
  if (cfg.vocab_size < 2) throw ConfigError("decoder vocabulary must include the begin and end tokens");
  if (cfg.embed_dim < 1 || cfg.hidden_dim < 1 || cfg.rep_dim < 1 || cfg.max_len < 1) {
    throw ConfigError("decoder dimensions must be >= 1");
  }
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0,1)");
  }

  // Weight matrices use the uniform bound sqrt(6 / fan_in) so activations keep
  // their scale across the input->gates and hidden->vocab projections; biases
  // start at zero and embeddings at a modest 1/sqrt(embed_dim) half-width.
  auto init = [&rng](const std::vector<int>& shape, int fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    return Tensor::uniform(shape, -bound, bound, rng, true);
  };
  const int in_dim = cfg.rep_dim + cfg.embed_dim + cfg.hidden_dim;
  DecoderParams p;
  p.embedding = Tensor::uniform({cfg.vocab_size, cfg.embed_dim},
                                -1.0 / std::sqrt(static_cast<double>(cfg.embed_dim)),
                                1.0 / std::sqrt(static_cast<double>(cfg.embed_dim)), rng, true);
  p.lstm_w = init({in_dim, 4 * cfg.hidden_dim}, in_dim);
  p.lstm_b = Tensor::zeros({4 * cfg.hidden_dim}, true);
  p.out_w = init({cfg.hidden_dim, cfg.vocab_size}, cfg.hidden_dim);
  p.out_b = Tensor::zeros({cfg.vocab_size}, true);
  return p;
}

DecoderState make_state(int hidden_dim) {
  if (hidden_dim < 1) throw ConfigError("hidden size must be >= 1");
  return {Tensor::zeros({hidden_dim}), Tensor::zeros({hidden_dim}), 0};
}

DecoderState lstm_cell(const DecoderParams& params, const Tensor& f_g_att, int x_prev,
                       const DecoderState& state) {
  if (x_prev < 0 || x_prev >= params.embedding.shape()[0]) {
    throw InputError("token id out of range: " + std::to_string(x_prev));
  }
  const int hidden = state.h.shape()[0];
  const Tensor input = concat({f_g_att, select_row(params.embedding, x_prev), state.h}, 0);
  if (input.shape()[0] != params.lstm_w.shape()[0]) {
    throw DimensionError("LSTM input size does not match the gate weights");
  }
  const Tensor z = add(
      reshape(matmul(reshape(input, {1, input.shape()[0]}), params.lstm_w), {4 * hidden}),
      params.lstm_b);
  const Tensor gi = sigmoid(narrow(z, 0, 0, hidden));
  const Tensor gf = sigmoid(narrow(z, 0, hidden, hidden));
  const Tensor gg = tanh(narrow(z, 0, 2 * hidden, hidden));
  const Tensor go = sigmoid(narrow(z, 0, 3 * hidden, hidden));

  DecoderState next;
  next.c = add(hadamard(gf, state.c), hadamard(gi, gg));
  next.h = hadamard(go, tanh(next.c));
  next.t = state.t + 1;
  return next;
}

Tensor output_logits(const DecoderParams& params, const Tensor& h) {
  const int vocab = params.out_w.shape()[1];
  return add(reshape(matmul(reshape(h, {1, h.shape()[0]}), params.out_w), {vocab}),
             params.out_b);
}

StepResult lstm_step(const DecoderParams& params, const Tensor& f_g_att, int x_prev,
                     const DecoderState& state) {
  DecoderState next = lstm_cell(params, f_g_att, x_prev, state);
  Tensor logits = output_logits(params, next.h);
  return {std::move(next), std::move(logits)};
}

Tensor teacher_forced_loss(const features::FeatureMaps& fm, const std::vector<int>& caption,
                           const CaptionModel& model, bool training, std::mt19937_64& rng) {
  const int len = static_cast<int>(caption.size());
  if (len < 2 || caption.front() != data::kBosId) {
    throw InputError("caption must start with the begin token and contain a prediction step");
  }
  if (len > model.dec_cfg.max_len) {
    throw InputError("caption exceeds the configured maximum length");
  }
  if (caption.back() != data::kEosId && len != model.dec_cfg.max_len) {
    throw InputError("caption must end with the end token unless truncated at max length");
  }
  for (int id : caption) {
    if (id < 0 || id >= model.dec_cfg.vocab_size) {
      throw InputError("token id out of range: " + std::to_string(id));
    }
  }

  DecoderState state = make_state(model.dec_cfg.hidden_dim);
  Tensor total = Tensor::scalar(0.0);
  for (int t = 1; t < len; ++t) {
    const Tensor f = rae_step(fm, state.h, model.rae_params, model.rae_cfg, model.variant,
                              training, rng);
    state = lstm_cell(model.dec_params, f, caption[static_cast<std::size_t>(t - 1)], state);
    const Tensor h = dropout(state.h, model.dec_cfg.dropout_rate, training, rng);
    const Tensor logp = log_softmax(output_logits(model.dec_params, h));
    total = sub(total, pick(logp, caption[static_cast<std::size_t>(t)]));
  }
  return total;
}

namespace {

// One decoding step from a hypothesis: per-token log probabilities plus the
// successor state.
std::pair<Tensor, DecoderState> advance(const features::FeatureMaps& fm,
                                        const CaptionModel& model,
                                        const CaptionHypothesis& hyp) {
  std::mt19937_64 rng(0);  // inference: dropout is inert, rng unused
  const Tensor f = rae_step(fm, hyp.state.h, model.rae_params, model.rae_cfg, model.variant,
                            false, rng);
  StepResult step = lstm_step(model.dec_params, f, hyp.tokens.back(), hyp.state);
  return {log_softmax(step.logits), std::move(step.state)};
}

CaptionHypothesis start_hypothesis(const CaptionModel& model) {
  CaptionHypothesis hyp;
  hyp.tokens = {data::kBosId};
  hyp.log_prob = 0.0;
  hyp.state = make_state(model.dec_cfg.hidden_dim);
  hyp.finished = model.dec_cfg.max_len <= 1;
  return hyp;
}

}  // namespace

CaptionHypothesis greedy_decode(const features::FeatureMaps& fm, const CaptionModel& model) {
  CaptionHypothesis hyp = start_hypothesis(model);
  while (!hyp.finished) {
    auto [logp, state] = advance(fm, model, hyp);
    int best = 0;
    for (int id = 1; id < model.dec_cfg.vocab_size; ++id) {
      if (logp.values()[static_cast<std::size_t>(id)] >
          logp.values()[static_cast<std::size_t>(best)]) {
        best = id;
      }
    }
    hyp.tokens.push_back(best);
    hyp.log_prob += logp.values()[static_cast<std::size_t>(best)];
    hyp.state = std::move(state);
    hyp.finished = best == data::kEosId ||
                   static_cast<int>(hyp.tokens.size()) >= model.dec_cfg.max_len;
  }
  return hyp;
}

std::vector<CaptionHypothesis> beam_search(const features::FeatureMaps& fm,
                                           const CaptionModel& model, int beam_size) {
  if (beam_size < 1) throw ConfigError("beam size must be >= 1");

  const auto better = [](const CaptionHypothesis& a, const CaptionHypothesis& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.tokens < b.tokens;
  };

  std::vector<CaptionHypothesis> live{start_hypothesis(model)};
  std::vector<CaptionHypothesis> completed;
  if (live.front().finished) {
    return {live.front()};
  }

  while (!live.empty()) {
    std::vector<CaptionHypothesis> candidates;
    for (const auto& hyp : live) {
      auto [logp, state] = advance(fm, model, hyp);
      for (int id = 0; id < model.dec_cfg.vocab_size; ++id) {
        CaptionHypothesis next;
        next.tokens = hyp.tokens;
        next.tokens.push_back(id);
        next.log_prob = hyp.log_prob + logp.values()[static_cast<std::size_t>(id)];
        next.state = state;
        next.finished = id == data::kEosId ||
                        static_cast<int>(next.tokens.size()) >= model.dec_cfg.max_len;
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), better);
    if (static_cast<int>(candidates.size()) > beam_size) {
      candidates.resize(static_cast<std::size_t>(beam_size));
    }
    live.clear();
    for (auto& cand : candidates) {
      if (cand.finished) {
        completed.push_back(std::move(cand));
      } else {
        live.push_back(std::move(cand));
      }
    }
  }

  std::sort(completed.begin(), completed.end(), better);
  if (static_cast<int>(completed.size()) > beam_size) {
    completed.resize(static_cast<std::size_t>(beam_size));
  }
  return completed;
}

}  // namespace resicap::decoder
