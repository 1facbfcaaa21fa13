#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "doctest.h"
#include "resicap/features.hpp"
#include "resicap/tensor.hpp"

using namespace resicap;
using namespace resicap::features;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("resicap_feat_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Tensor uniform_pixels(const std::vector<int>& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform(shape, 0.0, 1.0, rng);
}

// L2 norm over the channel axis at one grid cell of a (1,H,W,C) tensor.
double cell_norm(const Tensor& t, int y, int x) {
  const int w = t.shape()[2], c = t.shape()[3];
  double acc = 0.0;
  for (int k = 0; k < c; ++k) {
    const double v = t.values()[(static_cast<std::size_t>(y) * w + x) * c + k];
    acc += v * v;
  }
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("desk stacks map 56x56 pixels to a 7x7 grid") {
  std::mt19937_64 rng(11);
  const Extractor ci = make_extractor(desk_cnn_i(), 3, rng);
  const Extractor cr = make_extractor(desk_cnn_r(), 3, rng);

  CHECK(desk_cnn_i().out_channels() == 32);
  CHECK(desk_cnn_r().out_channels() == 16);
  CHECK(spatial_out(desk_cnn_i(), 56) == 7);
  CHECK(spatial_out(desk_cnn_r(), 56) == 7);

  const Tensor pixels = uniform_pixels({4, 56, 56, 3}, 21);
  const Tensor vi = extractor_forward(ci, pixels);
  const Tensor ar = extractor_forward(cr, pixels);
  CHECK(vi.shape() == std::vector<int>{4, 7, 7, 32});
  CHECK(ar.shape() == std::vector<int>{4, 7, 7, 16});

  const FeatureMaps fm = make_feature_maps(vi, ar);
  CHECK(fm.v_i.shape()[3] > fm.a_r.shape()[3]);
}

TEST_CASE("single conv layer matches hand-computed values") {
  // Input 2x2 ramp [0, .1, .2, .3], kernel of ones, k=2 s=1 p=0.
  ExtractorConfig cfg;
  cfg.layers = {{2, 1, 0, 1, true}};
  std::mt19937_64 rng(3);
  Extractor ex = make_extractor(cfg, 1, rng);
  for (double& v : ex.kernels[0].mutable_values()) v = 1.0;
  const Tensor x = Tensor::from_values({1, 2, 2, 1}, {0.0, 0.1, 0.2, 0.3});

  ex.biases[0].mutable_values()[0] = 0.5;
  Tensor y = extractor_forward(ex, x);
  CHECK(y.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(1.1).epsilon(1e-12));

  ex.biases[0].mutable_values()[0] = -1.0;
  CHECK(extractor_forward(ex, x).item() == doctest::Approx(0.0).epsilon(1e-12));  // relu clamps

  cfg.layers[0].relu = false;
  Extractor lin = make_extractor(cfg, 1, rng);
  for (double& v : lin.kernels[0].mutable_values()) v = 1.0;
  lin.biases[0].mutable_values()[0] = -1.0;
  CHECK(extractor_forward(lin, x).item() == doctest::Approx(-0.4).epsilon(1e-12));
}

TEST_CASE("zero input with zero biases yields zero features") {
  std::mt19937_64 rng(5);
  Extractor ex = make_extractor(desk_cnn_i(), 3, rng);
  for (auto& b : ex.biases) {
    for (double& v : b.mutable_values()) v = 0.0;
  }
  const Tensor y = extractor_forward(ex, Tensor::zeros({1, 56, 56, 3}));
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("identical frames produce identical per-frame features") {
  std::mt19937_64 rng(7);
  const Extractor ex = make_extractor(desk_cnn_r(), 3, rng);
  const Tensor frame = uniform_pixels({1, 56, 56, 3}, 9);
  std::vector<double> two = frame.values();
  two.insert(two.end(), frame.values().begin(), frame.values().end());
  const Tensor y = extractor_forward(ex, Tensor::from_values({2, 56, 56, 3}, two));

  const std::size_t half = y.values().size() / 2;
  for (std::size_t i = 0; i < half; ++i) {
    CHECK(y.values()[i] == y.values()[half + i]);
  }
}

TEST_CASE("uniform input gives constant features away from padding") {
  std::mt19937_64 rng(13);
  const Extractor ex = make_extractor(desk_cnn_r(), 3, rng);
  const Tensor y = extractor_forward(ex, Tensor::full({1, 56, 56, 3}, 0.5));

  // Cells whose receptive field stays off the zero padding: central 3x3 block.
  const int c = y.shape()[3];
  for (int k = 0; k < c; ++k) {
    const double ref = y.values()[(static_cast<std::size_t>(3) * 7 + 3) * c + k];
    for (int gy = 2; gy <= 4; ++gy) {
      for (int gx = 2; gx <= 4; ++gx) {
        CHECK(y.values()[(static_cast<std::size_t>(gy) * 7 + gx) * c + k] ==
              doctest::Approx(ref).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("feature deviation concentrates on the deviating block") {
  // One k=8 s=8 layer tiles the frame into disjoint receptive fields, so a
  // deviating 8x8 block must move exactly one grid cell away from background.
  ExtractorConfig cfg;
  cfg.layers = {{8, 8, 0, 4, false}};
  std::mt19937_64 rng(17);
  const Extractor ex = make_extractor(cfg, 1, rng);

  std::vector<double> px(56 * 56, 0.5);
  for (int y = 24; y < 32; ++y) {
    for (int x = 24; x < 32; ++x) px[static_cast<std::size_t>(y) * 56 + x] = 1.0;
  }
  const Tensor f = extractor_forward(ex, Tensor::from_values({1, 56, 56, 1}, px));
  CHECK(f.shape() == std::vector<int>{1, 7, 7, 4});

  const Tensor bg = extractor_forward(ex, Tensor::full({1, 56, 56, 1}, 0.5));
  int best_y = -1, best_x = -1;
  double best = -1.0;
  for (int gy = 0; gy < 7; ++gy) {
    for (int gx = 0; gx < 7; ++gx) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) {
        const std::size_t off = (static_cast<std::size_t>(gy) * 7 + gx) * 4 + k;
        const double d = f.values()[off] - bg.values()[off];
        acc += d * d;
      }
      if (acc > best) {
        best = acc;
        best_y = gy;
        best_x = gx;
      }
      if (gy != 3 || gx != 3) CHECK(acc == doctest::Approx(0.0).epsilon(1e-18));
    }
  }
  CHECK(best_y == 3);
  CHECK(best_x == 3);
  CHECK(best > 1e-6);
}

TEST_CASE("trainable extractors receive gradients, frozen ones do not") {
  ExtractorConfig cfg;
  cfg.layers = {{3, 2, 1, 2, true}, {3, 1, 1, 2, true}};

  std::mt19937_64 rng(19);
  Extractor ex = make_extractor(cfg, 1, rng);
  const Tensor x = uniform_pixels({1, 9, 9, 1}, 23);
  Tensor loss = reduce_mean(extractor_forward(ex, x), {0, 1, 2, 3});
  loss.backward();
  double total = 0.0;
  for (double g : ex.kernels[0].grad()) total += std::abs(g);
  for (double g : ex.kernels[1].grad()) total += std::abs(g);
  CHECK(total > 0.0);

  cfg.frozen = true;
  std::mt19937_64 rng2(19);
  const Extractor fz = make_extractor(cfg, 1, rng2);
  CHECK_FALSE(fz.kernels[0].requires_grad());
  CHECK_FALSE(fz.biases[1].requires_grad());
  const Tensor a = extractor_forward(fz, x);
  const Tensor b = extractor_forward(fz, x);
  for (std::size_t i = 0; i < a.values().size(); ++i) CHECK(a.values()[i] == b.values()[i]);
  // Same seed, same config -> same weights regardless of the frozen flag.
  for (std::size_t i = 0; i < ex.kernels[0].values().size(); ++i) {
    CHECK(ex.kernels[0].values()[i] == fz.kernels[0].values()[i]);
  }
}

TEST_CASE("initialization is bounded by the fan-in rule") {
  std::mt19937_64 rng(29);
  const Extractor ex = make_extractor(desk_cnn_i(), 3, rng);
  const double bound0 = 1.0 / std::sqrt(4.0 * 4.0 * 3.0);
  double max_abs = 0.0;
  for (double v : ex.kernels[0].values()) {
    CHECK(std::abs(v) <= bound0);
    max_abs = std::max(max_abs, std::abs(v));
  }
  CHECK(max_abs > 0.0);
  // Biases start at zero: all-black regions must stay silent through the stack.
  for (double v : ex.biases[0].values()) CHECK(v == 0.0);
  for (double v : ex.biases[3].values()) CHECK(v == 0.0);

  const double bound3 = 1.0 / std::sqrt(3.0 * 3.0 * 32.0);
  for (double v : ex.kernels[3].values()) CHECK(std::abs(v) <= bound3);
}

TEST_CASE("invalid inputs and configs are rejected") {
  std::mt19937_64 rng(31);
  const Extractor ex = make_extractor(desk_cnn_r(), 3, rng);

  CHECK_THROWS_AS(extractor_forward(ex, Tensor::zeros({56, 56, 3})), DimensionError);
  CHECK_THROWS_AS(extractor_forward(ex, Tensor::zeros({1, 56, 56, 1})), DimensionError);
  CHECK_THROWS_AS(extractor_forward(ex, Tensor::full({1, 56, 56, 3}, 1.5)), InputError);
  CHECK_THROWS_AS(extractor_forward(ex, Tensor::full({1, 56, 56, 3}, -0.5)), InputError);
  // (13 + 2 - 4) is not divisible by the stride of 2.
  CHECK_THROWS_AS(extractor_forward(ex, Tensor::zeros({1, 13, 13, 3})), ConfigError);
  CHECK_THROWS_AS(spatial_out(desk_cnn_r(), 13), ConfigError);

  ExtractorConfig empty;
  CHECK_THROWS_AS(make_extractor(empty, 3, rng), ConfigError);
  ExtractorConfig bad;
  bad.layers = {{0, 1, 0, 4, true}};
  CHECK_THROWS_AS(make_extractor(bad, 3, rng), ConfigError);
  bad.layers = {{3, 1, 0, 0, true}};
  CHECK_THROWS_AS(make_extractor(bad, 3, rng), ConfigError);
  CHECK_THROWS_AS(make_extractor(desk_cnn_i(), 0, rng), ConfigError);
}

TEST_CASE("feature map invariants are enforced") {
  CHECK_THROWS_AS(make_feature_maps(Tensor::zeros({2, 7, 7, 32}), Tensor::zeros({3, 7, 7, 16})),
                  DimensionError);
  CHECK_THROWS_AS(make_feature_maps(Tensor::zeros({2, 7, 7, 32}), Tensor::zeros({2, 6, 7, 16})),
                  DimensionError);
  CHECK_THROWS_AS(make_feature_maps(Tensor::zeros({2, 7, 7, 16}), Tensor::zeros({2, 7, 7, 16})),
                  DimensionError);
  CHECK_THROWS_AS(make_feature_maps(Tensor::zeros({2, 7, 7}), Tensor::zeros({2, 7, 7, 16})),
                  DimensionError);
}

TEST_CASE("feature maps survive a cache round trip") {
  TempDir tmp;
  std::mt19937_64 rng(37);
  const FeatureMaps fm = make_feature_maps(Tensor::uniform({2, 7, 7, 32}, -1.0, 1.0, rng),
                                           Tensor::uniform({2, 7, 7, 16}, -1.0, 1.0, rng));
  const std::string path = tmp.file("v00042.feat");
  save_feature_maps(path, fm);
  const FeatureMaps back = load_feature_maps(path);
  CHECK(back.v_i.shape() == fm.v_i.shape());
  CHECK(back.a_r.shape() == fm.a_r.shape());
  for (std::size_t i = 0; i < fm.v_i.values().size(); ++i) {
    CHECK(back.v_i.values()[i] == fm.v_i.values()[i]);
  }
  for (std::size_t i = 0; i < fm.a_r.values().size(); ++i) {
    CHECK(back.a_r.values()[i] == fm.a_r.values()[i]);
  }
}
