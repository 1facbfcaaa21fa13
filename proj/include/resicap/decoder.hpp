#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "resicap/errors.hpp"
#include "resicap/features.hpp"
#include "resicap/rae.hpp"
#include "resicap/tensor.hpp"

namespace resicap::decoder {

struct DecoderConfig {
  int vocab_size = 0;
  int embed_dim = 24;
  int hidden_dim = 32;
  int rep_dim = 64;
  int max_len = 12;
  double dropout_rate = 0.5;  // applied to h_t before the output projection
};

struct DecoderParams {
  Tensor embedding;  // (vocab_size, embed_dim)
  Tensor lstm_w;     // (rep_dim + embed_dim + hidden_dim, 4*hidden_dim)
  Tensor lstm_b;     // (4*hidden_dim)
  Tensor out_w;      // (hidden_dim, vocab_size)
  Tensor out_b;      // (vocab_size)

  // Named learnable parameters, e.g. "dec.lstm_w".
  std::vector<std::pair<std::string, Tensor>> parameters(const std::string& prefix) const;
};

DecoderParams make_decoder_params(const DecoderConfig& cfg, std::mt19937_64& rng);

struct DecoderState {
  Tensor h;  // (hidden_dim)
  Tensor c;  // (hidden_dim)
  int t = 0;
};

DecoderState make_state(int hidden_dim);  // zeros at t = 0

// One LSTM cell update on input [f_g_att ; embed(x_prev)].
DecoderState lstm_cell(const DecoderParams& params, const Tensor& f_g_att, int x_prev,
                       const DecoderState& state);

// Vocabulary logits from a hidden state.
Tensor output_logits(const DecoderParams& params, const Tensor& h);

struct StepResult {
  DecoderState state;
  Tensor logits;  // (vocab_size)
};

// lstm_cell followed by output_logits (the no-dropout inference path).
StepResult lstm_step(const DecoderParams& params, const Tensor& f_g_att, int x_prev,
                     const DecoderState& state);

// Everything downstream of the feature extractors, bundled for the ops that
// need the encoder and decoder together. Tensor members share storage with
// the originals, so optimizer updates stay visible.
struct CaptionModel {
  rae::RaeConfig rae_cfg;
  rae::RaeParams rae_params;
  rae::AblationVariant variant = rae::AblationVariant::FULL;
  DecoderConfig dec_cfg;
  DecoderParams dec_params;
};

// Negative log-likelihood summed over the caption's prediction steps; the
// encoder is re-run with h_{t-1} before every step. The caption must start
// with BOS, fit max_len, and end with EOS unless truncated at max_len.
Tensor teacher_forced_loss(const features::FeatureMaps& fm, const std::vector<int>& caption,
                           const CaptionModel& model, bool training, std::mt19937_64& rng);

struct CaptionHypothesis {
  std::vector<int> tokens;  // starts with BOS
  double log_prob = 0.0;
  DecoderState state;
  bool finished = false;
};

// Argmax decoding from BOS; ties go to the lowest token id; stops at EOS or
// max_len. Deterministic.
CaptionHypothesis greedy_decode(const features::FeatureMaps& fm, const CaptionModel& model);

// Beam search without length normalization; candidates are ranked by total
// log probability with token-lexicographic tie-breaking; returns the top
// beam_size completed (or length-capped) hypotheses, best first.
std::vector<CaptionHypothesis> beam_search(const features::FeatureMaps& fm,
                                           const CaptionModel& model, int beam_size);

}  // namespace resicap::decoder
