#include "resicap/features.hpp"

#include <cmath>

#include "resicap/checkpoint.hpp"

namespace resicap::features {

int ExtractorConfig::out_channels() const {
  if (layers.empty()) throw ConfigError("extractor config has no layers");
  return layers.back().out_channels;
}

ExtractorConfig desk_cnn_i() {
  ExtractorConfig cfg;
  cfg.layers = {{4, 2, 1, 8, true}, {4, 2, 1, 16, true}, {4, 2, 1, 32, true}, {3, 1, 1, 32, true}};
  return cfg;
}

ExtractorConfig desk_cnn_r() {
  ExtractorConfig cfg;
  cfg.layers = {{4, 2, 1, 4, true}, {4, 2, 1, 8, true}, {4, 2, 1, 16, true}, {3, 1, 1, 16, true}};
  return cfg;
}

namespace {

void validate_config(const ExtractorConfig& cfg) {
  if (cfg.layers.empty()) throw ConfigError("extractor config has no layers");
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const auto& l = cfg.layers[i];
    if (l.kernel < 1 || l.stride < 1 || l.padding < 0 || l.out_channels < 1) {
      throw ConfigError("bad conv layer " + std::to_string(i) + ": kernel/stride/out_channels" +
                        " must be >= 1 and padding >= 0");
    }
  }
}

int layer_out_extent(const ConvLayerCfg& l, int in, std::size_t index) {
  const int padded = in + 2 * l.padding;
  if (padded < l.kernel || (padded - l.kernel) % l.stride != 0) {
    throw ConfigError("conv layer " + std::to_string(index) + " cannot consume spatial extent " +
                      std::to_string(in));
  }
  return (padded - l.kernel) / l.stride + 1;
}

}  // namespace

int spatial_out(const ExtractorConfig& cfg, int in_extent) {
  validate_config(cfg);
  int extent = in_extent;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    extent = layer_out_extent(cfg.layers[i], extent, i);
  }
  return extent;
}

Extractor make_extractor(const ExtractorConfig& cfg, int in_channels, std::mt19937_64& rng) {
  validate_config(cfg);
  if (in_channels < 1) throw ConfigError("extractor needs at least one input channel");

  Extractor ex;
  ex.cfg = cfg;
  ex.in_channels = in_channels;
  int cin = in_channels;
  const bool trainable = !cfg.frozen;
  for (const auto& l : cfg.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.kernel) * l.kernel * cin);
    ex.kernels.push_back(Tensor::uniform({l.kernel, l.kernel, cin, l.out_channels}, -bound, bound,
                                         rng, trainable));
    // Biases start at zero so zero input regions stay silent through the stack:
    // feature responses are then driven by scene content, not by the draw of
    // constant offsets shared across every video.
    ex.biases.push_back(Tensor::zeros({l.out_channels}, trainable));
    cin = l.out_channels;
  }
  return ex;
}

std::vector<std::pair<std::string, Tensor>> Extractor::parameters(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".kernel", kernels[i]);
    out.emplace_back(prefix + ".conv" + std::to_string(i) + ".bias", biases[i]);
  }
  return out;
}

Tensor extractor_forward(const Extractor& ex, const Tensor& pixels) {
  if (pixels.rank() != 4) {
    throw DimensionError("extractor input must be (N, H, W, C), got rank " +
                         std::to_string(pixels.rank()));
  }
  if (pixels.shape()[3] != ex.in_channels) {
    throw DimensionError("extractor expects " + std::to_string(ex.in_channels) +
                         " input channels, got " + std::to_string(pixels.shape()[3]));
  }
  for (double v : pixels.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("extractor input pixels must lie in [0,1]");
  }
  // Fail before any work if some layer cannot consume the spatial extent.
  spatial_out(ex.cfg, pixels.shape()[1]);
  spatial_out(ex.cfg, pixels.shape()[2]);

  Tensor x = pixels;
  for (std::size_t i = 0; i < ex.cfg.layers.size(); ++i) {
    const auto& l = ex.cfg.layers[i];
    Tensor y = conv2d(x, ex.kernels[i], l.stride, l.padding);
    y = y + expand(ex.biases[i], y.shape());
    x = l.relu ? relu(y) : y;
  }
  return x;
}

FeatureMaps make_feature_maps(Tensor v_i, Tensor a_r) {
  if (v_i.rank() != 4 || a_r.rank() != 4) {
    throw DimensionError("feature maps must be rank-4 (N, H, W, D)");
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (v_i.shape()[axis] != a_r.shape()[axis]) {
      throw DimensionError("feature maps must share (N, H, W); axis " + std::to_string(axis) +
                           " differs");
    }
  }
  if (v_i.shape()[3] <= a_r.shape()[3]) {
    throw DimensionError("appearance features must have more channels than residual features");
  }
  return {std::move(v_i), std::move(a_r)};
}

void save_feature_maps(const std::string& path, const FeatureMaps& fm) {
  save_checkpoint(path, {{"v_i", fm.v_i}, {"a_r", fm.a_r}});
}

FeatureMaps load_feature_maps(const std::string& path) {
  auto entries = load_checkpoint(path);
  if (entries.size() != 2 || entries[0].first != "v_i" || entries[1].first != "a_r") {
    throw FormatError(path + ": expected exactly the entries v_i and a_r");
  }
  return make_feature_maps(std::move(entries[0].second), std::move(entries[1].second));
}

}  // namespace resicap::features
