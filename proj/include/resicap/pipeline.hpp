#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "resicap/codec.hpp"
#include "resicap/config.hpp"
#include "resicap/data.hpp"
#include "resicap/decoder.hpp"
#include "resicap/errors.hpp"
#include "resicap/features.hpp"
#include "resicap/metrics.hpp"
#include "resicap/rae.hpp"
#include "resicap/tensor.hpp"

namespace resicap::pipeline {

// One video with its bitstream location and every reference caption, grouped
// from the flat manifest rows in first-appearance order.
struct VideoSample {
  std::string video_id;
  std::string stream_path;  // resolved against the manifest's directory
  std::vector<std::string> captions;
};

std::vector<VideoSample> load_samples(const std::string& manifest_path);

// Vocabulary over every reference caption in `samples`.
data::Vocabulary corpus_vocabulary(const std::vector<VideoSample>& samples, int min_count);

// The full trainable stack: the two pixel conv streams plus the bundled
// encoder/decoder.
struct Model {
  features::Extractor cnn_i;
  features::Extractor cnn_r;
  decoder::CaptionModel caption;
};

// Draws all parameters from `rng` in a fixed order (cnn_i, cnn_r, encoder,
// decoder), so one seeded generator reproduces the whole model.
Model build_model(const config::ExperimentConfig& cfg, int vocab_size, std::mt19937_64& rng);

// Checkpoint order: "cnn_i.*", "cnn_r.*", "rae.*", "dec.*".
std::vector<std::pair<std::string, Tensor>> named_parameters(const Model& model);

// The subset the optimizer may move; frozen extractor weights drop out.
std::vector<Tensor> trainable_parameters(const Model& model);

// Whether the variant's forward pass reads residual features at all.
bool uses_residual_features(rae::AblationVariant variant);

// Samples the (I-frame, residual) pairs from the bitstream and runs the conv
// streams. Variants that never read residual features skip the residual conv
// entirely and receive an all-zero a_r of the right shape.
features::FeatureMaps compute_features(const Model& model, const codec::CompressedVideo& cv,
                                       const config::ExperimentConfig& cfg);

struct TrainResult {
  double initial_batch_loss = 0.0;   // first batch, before any update
  std::vector<double> epoch_losses;  // step-weighted mean loss per epoch
};

// Teacher-forced Adam training over all (video, caption) pairs. Batches share
// feature maps between captions of the same video; frozen extractors are
// evaluated once per video for the whole run. Writes "epoch k/E loss L" lines
// to `log` when given.
TrainResult train_model(Model& model, const std::vector<VideoSample>& samples,
                        const data::Vocabulary& vocab, const config::ExperimentConfig& cfg,
                        std::ostream* log);

// Writes model.ckpt, model.vocab and config.fingerprint into `dir`.
void save_model(const std::string& dir, const Model& model, const data::Vocabulary& vocab,
                const config::ExperimentConfig& cfg);

struct LoadedModel {
  Model model;
  data::Vocabulary vocab;
};

// Rebuilds the model skeleton from (cfg, stored vocabulary) and fills it from
// model.ckpt. Any name or shape mismatch (including a vocabulary whose size
// contradicts the embedding matrix) raises ConfigError naming the parameter.
LoadedModel load_model(const std::string& dir, const config::ExperimentConfig& cfg);

struct CaptionOutput {
  std::string video_id;
  std::string caption;
  double log_prob = 0.0;
};

struct EvalResult {
  std::vector<CaptionOutput> outputs;                  // sample order
  std::vector<std::pair<std::string, double>> scores;  // BLEU@1..4, CIDEr, ROUGE-L
};

// Beam-search decoding of every sample (width cfg.beam_size) plus corpus
// metrics against the reference captions. RAE_THREADS caps the worker thread
// count; the result is identical for any thread count.
EvalResult evaluate_model(const Model& model, const data::Vocabulary& vocab,
                          const std::vector<VideoSample>& samples,
                          const config::ExperimentConfig& cfg);

// "video_id TAB caption TAB log_prob" lines in sample order.
std::string captions_tsv(const std::vector<CaptionOutput>& outputs);

struct AblationCell {
  rae::AblationVariant variant = rae::AblationVariant::FULL;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> scores;
};

struct AblationRow {
  rae::AblationVariant variant = rae::AblationVariant::FULL;
  std::vector<std::pair<std::string, double>> means;    // over seeds
  std::vector<std::pair<std::string, double>> stddevs;  // sample stddev, 0 for one seed
};

struct AblationResult {
  std::vector<AblationCell> cells;  // variant-major, seed-minor
  std::vector<AblationRow> rows;    // iframe_only, no_gate_no_residuals, no_gate, full
  std::string table;                // contents of ablation.tsv
};

// Trains and evaluates every variant for every seed on the corpus under
// cfg.data_dir. Appends one line per finished cell to
// out_dir/ablation.partial.tsv (flushed immediately, so an aborted run keeps
// its finished cells) and finally writes out_dir/ablation.tsv with
// mean+-stddev percentage cells; the METEOR column is "-".
AblationResult run_ablation(const config::ExperimentConfig& cfg,
                            const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
                            std::ostream* log);

}  // namespace resicap::pipeline
