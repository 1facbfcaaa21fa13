#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "resicap/data.hpp"
#include "resicap/decoder.hpp"
#include "support/gradcheck.hpp"

using namespace resicap;
using namespace resicap::decoder;

namespace {

features::FeatureMaps tiny_maps(std::uint64_t seed, int n = 2, int h = 2, int w = 2, int d_i = 4,
                                int d_r = 2) {
  std::mt19937_64 rng(seed);
  return features::make_feature_maps(Tensor::uniform({n, h, w, d_i}, 0.0, 1.0, rng),
                                     Tensor::uniform({n, h, w, d_r}, 0.0, 1.0, rng));
}

CaptionModel tiny_model(int vocab, std::uint64_t seed, int hidden = 3) {
  CaptionModel m;
  m.rae_cfg.d_i = 4;
  m.rae_cfg.d_r = 2;
  m.rae_cfg.grid_h = 2;
  m.rae_cfg.grid_w = 2;
  m.rae_cfg.hidden_dim = hidden;
  m.rae_cfg.d_gate = hidden;
  m.rae_cfg.rep_dim = 5;
  m.rae_cfg.dropout_rate = 0.0;
  m.dec_cfg.vocab_size = vocab;
  m.dec_cfg.embed_dim = 3;
  m.dec_cfg.hidden_dim = hidden;
  m.dec_cfg.rep_dim = 5;
  m.dec_cfg.max_len = 6;
  m.dec_cfg.dropout_rate = 0.0;
  std::mt19937_64 rng(seed);
  m.rae_params = rae::make_rae_params(m.rae_cfg, rng);
  m.dec_params = make_decoder_params(m.dec_cfg, rng);
  return m;
}

void zero_params(DecoderParams& p) {
  for (auto& [name, t] : p.parameters("dec")) {
    for (double& v : t.mutable_values()) v = 0.0;
  }
}

std::vector<Tensor> all_params(CaptionModel& m) {
  std::vector<Tensor> out;
  for (auto& [name, t] : m.rae_params.parameters("rae")) out.push_back(t);
  for (auto& [name, t] : m.dec_params.parameters("dec")) out.push_back(t);
  return out;
}

// Replays a token sequence through the model, returning the summed log
// probability of tokens[1..] under teacher forcing on the sequence itself.
double replay_log_prob(const features::FeatureMaps& fm, const CaptionModel& m,
                       const std::vector<int>& tokens) {
  std::mt19937_64 rng(0);
  DecoderState state = make_state(m.dec_cfg.hidden_dim);
  double total = 0.0;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    const Tensor f = rae_step(fm, state.h, m.rae_params, m.rae_cfg, m.variant, false, rng);
    const StepResult step = lstm_step(m.dec_params, f, tokens[t - 1], state);
    state = step.state;
    total += log_softmax(step.logits).values()[static_cast<std::size_t>(tokens[t])];
  }
  return total;
}

}  // namespace

TEST_CASE("fresh decoder state is zero at step zero") {
  const DecoderState s = make_state(4);
  CHECK(s.t == 0);
  CHECK(s.h.shape() == std::vector<int>{4});
  for (double v : s.h.values()) CHECK(v == 0.0);
  for (double v : s.c.values()) CHECK(v == 0.0);
}

TEST_CASE("zero parameters give a zero fixed point and bias logits") {
  CaptionModel m = tiny_model(4, 3);
  zero_params(m.dec_params);
  m.dec_params.out_b.mutable_values() = {0.1, 0.2, 0.3, -0.4};

  const Tensor f = Tensor::full({5}, 0.5);
  const StepResult r = lstm_step(m.dec_params, f, data::kBosId, make_state(3));
  CHECK(r.state.t == 1);
  for (double v : r.state.h.values()) CHECK(v == 0.0);
  for (double v : r.state.c.values()) CHECK(v == 0.0);
  CHECK(r.logits.values()[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(r.logits.values()[3] == doctest::Approx(-0.4).epsilon(1e-12));
}

TEST_CASE("open forget gate with shut input gate copies the cell state") {
  DecoderConfig cfg;
  cfg.vocab_size = 4;
  cfg.embed_dim = 2;
  cfg.hidden_dim = 2;
  cfg.rep_dim = 1;
  std::mt19937_64 rng(5);
  DecoderParams p = make_decoder_params(cfg, rng);
  zero_params(p);
  auto& b = p.lstm_b.mutable_values();
  b[0] = b[1] = -1000.0;  // input gate shut
  b[2] = b[3] = 1000.0;   // forget gate open

  DecoderState s = make_state(2);
  s.c = Tensor::from_values({2}, {0.3, -0.7});
  s.h = Tensor::from_values({2}, {0.1, 0.2});
  const StepResult r = lstm_step(p, Tensor::from_values({1}, {0.9}), 2, s);
  CHECK(r.state.c.values()[0] == 0.3);
  CHECK(r.state.c.values()[1] == -0.7);
  CHECK(r.state.h.values()[0] == doctest::Approx(0.5 * std::tanh(0.3)).epsilon(1e-12));
  CHECK(r.state.h.values()[1] == doctest::Approx(0.5 * std::tanh(-0.7)).epsilon(1e-12));
}

TEST_CASE("one step matches a hand-evaluated recurrence") {
  DecoderConfig cfg;
  cfg.vocab_size = 4;
  cfg.embed_dim = 2;
  cfg.hidden_dim = 2;
  cfg.rep_dim = 1;
  std::mt19937_64 rng(7);
  DecoderParams p = make_decoder_params(cfg, rng);
  // lstm_w is (5, 8): rows are [f; embed; h], columns the i,f,g,o slices.
  for (int k = 0; k < 5; ++k) {
    for (int j = 0; j < 8; ++j) {
      p.lstm_w.mutable_values()[static_cast<std::size_t>(k) * 8 + j] = 0.1 * (k + 1) - 0.05 * j;
    }
  }
  for (int j = 0; j < 8; ++j) p.lstm_b.mutable_values()[static_cast<std::size_t>(j)] = 0.02 * j;
  p.embedding.mutable_values() = {0.0, 0.0, 0.0, 0.0, 0.3, -0.1, 0.0, 0.0};  // row 2 = [.3,-.1]
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < 4; ++j) {
      p.out_w.mutable_values()[static_cast<std::size_t>(k) * 4 + j] = 0.2 * k - 0.1 * j;
    }
  }
  p.out_b.mutable_values() = {0.05, -0.05, 0.15, 0.0};

  DecoderState s = make_state(2);
  s.h = Tensor::from_values({2}, {0.05, -0.02});
  s.c = Tensor::from_values({2}, {0.1, 0.2});
  const StepResult r = lstm_step(p, Tensor::from_values({1}, {0.4}), 2, s);

  const double in[5] = {0.4, 0.3, -0.1, 0.05, -0.02};
  double z[8];
  for (int j = 0; j < 8; ++j) {
    z[j] = 0.02 * j;
    for (int k = 0; k < 5; ++k) z[j] += in[k] * (0.1 * (k + 1) - 0.05 * j);
  }
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double c_prev[2] = {0.1, 0.2};
  double c_new[2], h_new[2];
  for (int u = 0; u < 2; ++u) {
    c_new[u] = sig(z[2 + u]) * c_prev[u] + sig(z[u]) * std::tanh(z[4 + u]);
    h_new[u] = sig(z[6 + u]) * std::tanh(c_new[u]);
    CHECK(r.state.c.values()[u] == doctest::Approx(c_new[u]).epsilon(1e-12));
    CHECK(r.state.h.values()[u] == doctest::Approx(h_new[u]).epsilon(1e-12));
  }
  for (int j = 0; j < 4; ++j) {
    const double logit = h_new[0] * (0.0 - 0.1 * j) + h_new[1] * (0.2 - 0.1 * j) +
                         (j == 0 ? 0.05 : j == 1 ? -0.05 : j == 2 ? 0.15 : 0.0);
    CHECK(r.logits.values()[static_cast<std::size_t>(j)] ==
          doctest::Approx(logit).epsilon(1e-12));
  }
}

TEST_CASE("uniform logits make the loss the caption cross-entropy") {
  CaptionModel m = tiny_model(5, 11);
  zero_params(m.dec_params);
  auto fm = tiny_maps(13);
  std::mt19937_64 rng(1);
  const Tensor l2 = teacher_forced_loss(fm, {data::kBosId, 4, data::kEosId}, m, false, rng);
  CHECK(l2.item() == doctest::Approx(2.0 * std::log(5.0)).epsilon(1e-9));
  const Tensor l3 = teacher_forced_loss(fm, {data::kBosId, 4, 4, data::kEosId}, m, false, rng);
  CHECK(l3.item() == doctest::Approx(3.0 * std::log(5.0)).epsilon(1e-9));
}

TEST_CASE("loss is strictly positive and probabilities normalize") {
  CaptionModel m = tiny_model(6, 17);
  auto fm = tiny_maps(19);
  std::mt19937_64 rng(1);
  const Tensor loss = teacher_forced_loss(fm, {data::kBosId, 4, 5, data::kEosId}, m, false, rng);
  CHECK(loss.item() > 0.0);

  const Tensor f = rae_step(fm, Tensor::zeros({3}), m.rae_params, m.rae_cfg, m.variant, false,
                            rng);
  const StepResult r = lstm_step(m.dec_params, f, data::kBosId, make_state(3));
  const Tensor lp = log_softmax(r.logits);
  double sum = 0.0;
  for (double v : lp.values()) sum += std::exp(v);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("malformed captions and bad token ids are rejected") {
  CaptionModel m = tiny_model(5, 23);
  auto fm = tiny_maps(29);
  std::mt19937_64 rng(1);
  auto loss = [&](std::vector<int> ids) {
    return teacher_forced_loss(fm, ids, m, false, rng);
  };
  CHECK_THROWS_AS(loss({4, data::kEosId}), InputError);            // missing BOS
  CHECK_THROWS_AS(loss({data::kBosId}), InputError);               // no prediction steps
  CHECK_THROWS_AS(loss({}), InputError);                           // empty
  CHECK_THROWS_AS(loss({data::kBosId, 4, 4}), InputError);         // unterminated, short
  CHECK_THROWS_AS(loss({data::kBosId, 9, data::kEosId}), InputError);   // id out of range
  CHECK_THROWS_AS(loss({data::kBosId, -1, data::kEosId}), InputError);  // negative id
  CHECK_THROWS_AS(loss({data::kBosId, 4, 4, 4, 4, 4, data::kEosId}), InputError);  // > max_len
  // Truncated exactly at max_len: legal without EOS.
  CHECK_NOTHROW(loss({data::kBosId, 4, 4, 4, 4, 4}));
  CHECK_THROWS_AS(lstm_cell(m.dec_params, Tensor::zeros({5}), 7, make_state(3)), InputError);
}

TEST_CASE("overfitting one caption reproduces it exactly") {
  data::Vocabulary vocab = data::build_vocabulary({"a red square moves left"}, 1);
  CHECK(vocab.size() == 9);
  const std::vector<int> caption = data::encode_caption("a red square moves left", vocab, 12);
  CHECK(caption.size() == 7);

  CaptionModel m = tiny_model(vocab.size(), 31, 8);
  m.rae_cfg.rep_dim = 8;
  m.dec_cfg.rep_dim = 8;
  m.dec_cfg.embed_dim = 6;
  m.dec_cfg.max_len = 12;
  std::mt19937_64 prng(37);
  m.rae_params = rae::make_rae_params(m.rae_cfg, prng);
  m.dec_params = make_decoder_params(m.dec_cfg, prng);

  auto fm = tiny_maps(41);
  AdamOptimizer opt(all_params(m), 0.1);
  std::mt19937_64 rng(1);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    opt.zero_grad();
    Tensor loss = teacher_forced_loss(fm, caption, m, true, rng);
    if (i == 0) first = loss.item();
    last = loss.item();
    loss.backward();
    opt.step();
  }
  CHECK(last < 0.5 * first);

  const CaptionHypothesis greedy = greedy_decode(fm, m);
  CHECK(greedy.tokens == caption);
  CHECK(greedy.finished);

  const auto beams = beam_search(fm, m, 5);
  REQUIRE(!beams.empty());
  CHECK(beams.front().tokens == caption);
  CHECK(beams.front().log_prob >= greedy.log_prob - 1e-9);
}

TEST_CASE("greedy decoding respects the tie rule and length caps") {
  CaptionModel m = tiny_model(5, 43);
  zero_params(m.dec_params);  // all logits zero: argmax ties resolve to id 0
  auto fm = tiny_maps(47);

  m.dec_cfg.max_len = 4;
  const CaptionHypothesis hyp = greedy_decode(fm, m);
  CHECK(hyp.tokens == std::vector<int>{0, 0, 0, 0});
  CHECK(hyp.finished);
  CHECK(hyp.log_prob == doctest::Approx(-3.0 * std::log(5.0)).epsilon(1e-9));

  m.dec_cfg.max_len = 1;
  const CaptionHypothesis one = greedy_decode(fm, m);
  CHECK(one.tokens == std::vector<int>{data::kBosId});
  CHECK(one.finished);
  CHECK(one.log_prob == 0.0);
}

TEST_CASE("beam width one matches greedy decoding") {
  for (std::uint64_t seed : {53u, 59u, 61u}) {
    CaptionModel m = tiny_model(6, seed);
    auto fm = tiny_maps(seed + 1);
    const CaptionHypothesis greedy = greedy_decode(fm, m);
    const auto beams = beam_search(fm, m, 1);
    REQUIRE(beams.size() == 1);
    CHECK(beams[0].tokens == greedy.tokens);
    CHECK(beams[0].log_prob == doctest::Approx(greedy.log_prob).epsilon(1e-9));
  }
}

TEST_CASE("beam search matches exhaustive enumeration on a toy model") {
  CaptionModel m = tiny_model(3, 67);
  m.dec_cfg.max_len = 3;
  auto fm = tiny_maps(71);

  // Enumerate every sequence: BOS, then free tokens until EOS or length 3.
  struct Leaf {
    std::vector<int> tokens;
    double log_prob;
  };
  std::vector<Leaf> leaves;
  std::mt19937_64 rng(0);
  auto expand = [&](auto&& self, std::vector<int> tokens, double lp,
                    const DecoderState& state) -> void {
    if ((!tokens.empty() && tokens.back() == data::kEosId) ||
        static_cast<int>(tokens.size()) >= m.dec_cfg.max_len) {
      leaves.push_back({tokens, lp});
      return;
    }
    const Tensor f = rae_step(fm, state.h, m.rae_params, m.rae_cfg, m.variant, false, rng);
    const StepResult r = lstm_step(m.dec_params, f, tokens.back(), state);
    const Tensor logp = log_softmax(r.logits);
    for (int id = 0; id < 3; ++id) {
      auto next = tokens;
      next.push_back(id);
      self(self, next, lp + logp.values()[static_cast<std::size_t>(id)], r.state);
    }
  };
  expand(expand, {data::kBosId}, 0.0, make_state(3));
  CHECK(leaves.size() == 7);  // [BOS,EOS] plus 2*3 depth-two leaves
  std::sort(leaves.begin(), leaves.end(), [](const Leaf& a, const Leaf& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.tokens < b.tokens;
  });

  const auto beams = beam_search(fm, m, 27);
  REQUIRE(beams.size() == leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    CHECK(beams[i].tokens == leaves[i].tokens);
    CHECK(beams[i].log_prob == doctest::Approx(leaves[i].log_prob).epsilon(1e-9));
  }
}

TEST_CASE("wider beams never score below greedy") {
  for (std::uint64_t seed : {73u, 79u, 83u, 89u, 97u}) {
    CaptionModel m = tiny_model(6, seed);
    auto fm = tiny_maps(seed + 2);
    const CaptionHypothesis greedy = greedy_decode(fm, m);
    const auto beams = beam_search(fm, m, 3);
    REQUIRE(!beams.empty());
    CHECK(beams.front().log_prob >= greedy.log_prob - 1e-12);
  }
}

TEST_CASE("returned hypotheses are finished and carry exact scores") {
  CaptionModel m = tiny_model(5, 101);
  auto fm = tiny_maps(103);
  const auto beams = beam_search(fm, m, 3);
  REQUIRE(!beams.empty());
  for (const auto& hyp : beams) {
    CHECK(hyp.finished);
    CHECK(hyp.tokens.front() == data::kBosId);
    const bool eos_ended = hyp.tokens.back() == data::kEosId;
    const bool capped = static_cast<int>(hyp.tokens.size()) == m.dec_cfg.max_len;
    CHECK((eos_ended || capped));
    CHECK(hyp.log_prob == doctest::Approx(replay_log_prob(fm, m, hyp.tokens)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(beam_search(fm, m, 0), ConfigError);
  CHECK_THROWS_AS(beam_search(fm, m, -2), ConfigError);
}

TEST_CASE("decoding is deterministic") {
  CaptionModel m = tiny_model(6, 107);
  auto fm = tiny_maps(109);
  const auto a = beam_search(fm, m, 3);
  const auto b = beam_search(fm, m, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].log_prob == b[i].log_prob);
  }
  CHECK(greedy_decode(fm, m).tokens == greedy_decode(fm, m).tokens);
}

TEST_CASE("loss gradients match finite differences through the whole stack") {
  CaptionModel m = tiny_model(6, 113);
  auto fm = tiny_maps(127);
  const std::vector<int> caption{data::kBosId, 4, 5, data::kEosId};

  std::vector<Tensor> inputs = all_params(m);
  CHECK(inputs.size() == 17);
  const double err = resicap::testing::max_grad_rel_err(inputs, [&] {
    std::mt19937_64 rng(1);
    return teacher_forced_loss(fm, caption, m, false, rng);
  });
  CHECK(err < 1e-4);
}
