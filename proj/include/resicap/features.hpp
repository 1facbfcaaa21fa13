#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "resicap/errors.hpp"
#include "resicap/tensor.hpp"

namespace resicap::features {

// One convolution layer of an extractor stack.
struct ConvLayerCfg {
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  int out_channels = 1;
  bool relu = true;
};

struct ExtractorConfig {
  std::vector<ConvLayerCfg> layers;
  bool frozen = false;

  int out_channels() const;
};

// Desk-scale stacks: 56x56 inputs reduce to a 7x7 grid.
ExtractorConfig desk_cnn_i();  // 32 output channels (appearance stream)
ExtractorConfig desk_cnn_r();  // 16 output channels (residual stream)

// Spatial extent after the full stack; throws ConfigError if some layer
// cannot consume the incoming extent exactly.
int spatial_out(const ExtractorConfig& cfg, int in_extent);

// A conv stack with its parameters. Built by make_extractor; parameters are
// trainable unless the config is frozen.
struct Extractor {
  ExtractorConfig cfg;
  int in_channels = 0;
  std::vector<Tensor> kernels;  // per layer: (k, k, C_in, C_out)
  std::vector<Tensor> biases;   // per layer: (C_out)

  // Named parameters as "<prefix>.conv<i>.kernel" / "<prefix>.conv<i>.bias".
  std::vector<std::pair<std::string, Tensor>> parameters(const std::string& prefix) const;
};

Extractor make_extractor(const ExtractorConfig& cfg, int in_channels, std::mt19937_64& rng);

// Runs the stack on pixels (N, H, W, C) with values in [0,1].
Tensor extractor_forward(const Extractor& ex, const Tensor& pixels);

// Joint output of the two extractors on one sampled frame stack.
struct FeatureMaps {
  Tensor v_i;  // (N, H, W, D_I)
  Tensor a_r;  // (N, H, W, D_r)
};

// Validates that both maps share (N, H, W) and that D_I > D_r.
FeatureMaps make_feature_maps(Tensor v_i, Tensor a_r);

void save_feature_maps(const std::string& path, const FeatureMaps& fm);
FeatureMaps load_feature_maps(const std::string& path);

}  // namespace resicap::features
