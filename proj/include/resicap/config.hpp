#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resicap/codec.hpp"
#include "resicap/data.hpp"
#include "resicap/errors.hpp"
#include "resicap/features.hpp"
#include "resicap/rae.hpp"

namespace resicap::config {

// Full experiment description, read from a flat key=value file. Field
// defaults are the reference training setup; configs/desk.cfg scales the
// model down to something a single CPU core can train.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string data_dir = "data/desk";

  // dataset
  int train_videos = 500;
  int test_videos = 100;
  int frames = 16;
  int height = 56;
  int width = 56;

  // codec
  int gop_size = 8;
  int block_size = 8;
  int search_range = 4;

  // feature extraction
  int sampled_frames = 2;  // (I-frame, residual) pairs fed to the encoder
  codec::ResidualMode residual_mode = codec::ResidualMode::first_pframe;
  std::vector<int> cnn_i_channels = {8, 16, 32, 32};
  std::vector<int> cnn_r_channels = {4, 8, 16, 16};
  bool freeze_extractors = false;

  // model dims
  int hidden_dim = 512;
  int embed_dim = 500;
  int rep_dim = 2048;
  int d_gate = 512;
  double dropout = 0.5;
  int max_len = 20;
  int min_count = 1;

  // optimization
  double lr = 1e-4;
  int batch_size = 8;
  int epochs = 30;

  // decoding
  int beam_size = 5;
  rae::AblationVariant variant = rae::AblationVariant::FULL;

  int d_i() const { return cnn_i_channels.back(); }
  int d_r() const { return cnn_r_channels.back(); }

  // Four-layer stacks: three stride-2 k4 p1 halvings plus one k3 s1 p1
  // refinement, channel widths taken from the config lists.
  features::ExtractorConfig cnn_i_cfg() const;
  features::ExtractorConfig cnn_r_cfg() const;

  int grid_h() const;  // feature-map extent for `height`
  int grid_w() const;

  data::CorpusParams corpus_params() const;
  rae::RaeConfig rae_cfg() const;
};

// Parses and validates. Unknown keys, duplicates, type errors, and range
// violations all raise ConfigError naming the offending key; `origin` (the
// file path for parse_config_file) is included in messages.
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin = "<config>");
ExperimentConfig parse_config_file(const std::string& path);  // InputError if unreadable

// Range and consistency checks, also invoked by the parsers.
void validate(const ExperimentConfig& cfg);

// Every key in schema order as "key = value" lines; parsing it back yields an
// equivalent config.
std::string canonical_text(const ExperimentConfig& cfg);

// 16 lowercase hex chars: FNV-1a 64 of the canonical text.
std::string fingerprint(const ExperimentConfig& cfg);

}  // namespace resicap::config
