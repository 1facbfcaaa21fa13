#include "resicap/rae.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "resicap/image_io.hpp"

namespace resicap::rae {

std::vector<std::pair<std::string, Tensor>> RaeParams::parameters(
    const std::string& prefix) const {
  return {
      {prefix + ".reduce_kernel", reduce_kernel},
      {prefix + ".sam.w_t", sam.w_t},
      {prefix + ".sam.w_i", sam.w_i},
      {prefix + ".sam.w_r", sam.w_r},
      {prefix + ".tgm.w_g", tgm.w_g},
      {prefix + ".tgm.w_gt", tgm.w_gt},
      {prefix + ".tgm.w_gr", tgm.w_gr},
      {prefix + ".tgm.w_gi_gate", tgm.w_gi_gate},
      {prefix + ".tgm.w_gi_fuse", tgm.w_gi_fuse},
      {prefix + ".tgm.w_gr_fuse", tgm.w_gr_fuse},
      {prefix + ".post.w", post_w},
      {prefix + ".post.b", post_b},
  };
}

namespace {

// Projection weights use the relu-preserving uniform bound sqrt(6 / fan_in) so
// repeated matmul+relu hops keep the (small) visual activations at a usable
// magnitude instead of shrinking them a constant factor per hop.
Tensor init_param(const std::vector<int>& shape, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return Tensor::uniform(shape, -bound, bound, rng, true);
}

}  // namespace

RaeParams make_rae_params(const RaeConfig& cfg, std::mt19937_64& rng) {
  if (cfg.d_i < 2 || cfg.d_r < 1 || cfg.d_i <= cfg.d_r) {
    throw ConfigError("encoder needs d_i > d_r >= 1");
  }
  if (cfg.grid_h < 1 || cfg.grid_w < 1 || cfg.hidden_dim < 1 || cfg.d_gate < 1 ||
      cfg.rep_dim < 1) {
    throw ConfigError("encoder dimensions must be >= 1");
  }
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0,1)");
  }

  const int hw = cfg.grid_h * cfg.grid_w;
  RaeParams p;
  p.reduce_kernel = init_param({1, 1, cfg.d_i, cfg.d_r}, cfg.d_i, rng);
  p.sam.w_t = init_param({cfg.hidden_dim, hw}, cfg.hidden_dim, rng);
  // The residual map acts as a rough saliency prior, so its mixing scalar
  // starts positive and dominant over the I-frame map's: attention begins
  // aligned with the prior instead of drowned by appearance noise, and
  // training rebalances both freely.
  p.sam.w_i = Tensor::scalar(0.5, true);
  p.sam.w_r = Tensor::scalar(2.0, true);
  p.tgm.w_g = init_param({cfg.d_gate, 1}, cfg.d_gate, rng);
  p.tgm.w_gt = init_param({cfg.hidden_dim, cfg.d_gate}, cfg.hidden_dim, rng);
  p.tgm.w_gr = init_param({cfg.d_r, cfg.d_gate}, cfg.d_r, rng);
  p.tgm.w_gi_gate = init_param({cfg.d_i, cfg.d_gate}, cfg.d_i, rng);
  // The attended feature is attenuated by the fixed 1/(H*W) factor just before
  // this matrix; widening its init bound by H*W cancels that constant at the
  // start so the attended arm competes with the appearance arm from step one.
  {
    const double bound = std::sqrt(6.0 / static_cast<double>(cfg.d_r)) * hw;
    p.tgm.w_gr_fuse = Tensor::uniform({cfg.d_r, cfg.d_i}, -bound, bound, rng, true);
  }
  p.tgm.w_gi_fuse = init_param({cfg.d_i, cfg.d_i}, cfg.d_i, rng);
  p.post_w = init_param({cfg.d_i, cfg.rep_dim}, cfg.d_i, rng);
  p.post_b = Tensor::zeros({cfg.rep_dim}, true);
  return p;
}

std::string to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::FULL: return "full";
    case AblationVariant::NO_GATE: return "no_gate";
    case AblationVariant::NO_GATE_NO_RESIDUALS: return "no_gate_no_residuals";
    case AblationVariant::IFRAME_ONLY: return "iframe_only";
  }
  throw UsageError("bad AblationVariant enum value");
}

AblationVariant variant_from_string(const std::string& name) {
  if (name == "full") return AblationVariant::FULL;
  if (name == "no_gate") return AblationVariant::NO_GATE;
  if (name == "no_gate_no_residuals") return AblationVariant::NO_GATE_NO_RESIDUALS;
  if (name == "iframe_only") return AblationVariant::IFRAME_ONLY;
  throw ConfigError("unknown ablation variant: " + name);
}

PooledViews pool_views(const features::FeatureMaps& fm, const Tensor& reduce_kernel) {
  if (reduce_kernel.rank() != 4 || reduce_kernel.shape()[0] != 1 ||
      reduce_kernel.shape()[1] != 1 || reduce_kernel.shape()[2] != fm.v_i.shape()[3] ||
      reduce_kernel.shape()[3] != fm.a_r.shape()[3]) {
    throw DimensionError("channel-reduction kernel must be (1, 1, D_I, D_r)");
  }
  PooledViews pv;
  pv.v_i_c = reduce_mean(fm.v_i, {1, 2});
  pv.a_r_c = reduce_mean(fm.a_r, {1, 2});
  pv.v_i_conv = conv2d(fm.v_i, reduce_kernel, 1, 0);
  pv.v_i_s = reduce_mean(pv.v_i_conv, {3});
  pv.a_r_s = reduce_mean(fm.a_r, {3});
  return pv;
}

namespace {

// h (hidden) times W (hidden, out) -> rank-1 (out).
Tensor context_project(const Tensor& h_prev, const Tensor& w) {
  if (h_prev.rank() != 1 || h_prev.shape()[0] != w.shape()[0]) {
    throw DimensionError("decoder context size does not match the projection");
  }
  const Tensor row = reshape(h_prev, {1, h_prev.shape()[0]});
  return reshape(matmul(row, w), {w.shape()[1]});
}

}  // namespace

AttentionState sam_forward(const PooledViews& pv, const Tensor& h_prev, const SamParams& params,
                           bool ablate_residuals) {
  const int n = pv.v_i_s.shape()[0];
  const int h = pv.v_i_s.shape()[1];
  const int w = pv.v_i_s.shape()[2];

  const Tensor ctx = reshape(context_project(h_prev, params.w_t), {h, w});
  Tensor pre = add(expand(ctx, {n, h, w}, {0}), scale(pv.v_i_s, params.w_i));
  if (!ablate_residuals) pre = add(pre, scale(pv.a_r_s, params.w_r));

  AttentionState att;
  att.alpha_r = tanh(pre);
  att.a_big_r = softmax(att.alpha_r, {1, 2});
  const Tensor weighted = hadamard(expand(att.a_big_r, pv.v_i_conv.shape(), {3}), pv.v_i_conv);
  att.f_r_att = mul_scalar(reduce_sum(weighted, {1, 2}), 1.0 / (h * w));
  return att;
}

Tensor tgm_gate(const PooledViews& pv, const Tensor& h_prev, const TgmParams& params) {
  const int n = pv.v_i_c.shape()[0];
  const int d_gate = params.w_g.shape()[0];
  const Tensor ctx = expand(context_project(h_prev, params.w_gt), {n, d_gate}, {0});
  const Tensor inner = add(add(ctx, matmul(pv.a_r_c, params.w_gr)),
                           matmul(pv.v_i_c, params.w_gi_gate));
  const Tensor logit = reshape(matmul(inner, params.w_g), {n});
  return sigmoid(add_scalar(logit, params.gate_logit_shift));
}

Tensor tgm_forward(const PooledViews& pv, const AttentionState& att, const Tensor& h_prev,
                   const TgmParams& params) {
  const Tensor g = tgm_gate(pv, h_prev, params);
  const Tensor attended = matmul(att.f_r_att, params.w_gr_fuse);
  const Tensor appearance = matmul(pv.v_i_c, params.w_gi_fuse);
  const Tensor g_e = expand(g, attended.shape(), {1});
  const Tensor inv_e = expand(add_scalar(mul_scalar(g, -1.0), 1.0), appearance.shape(), {1});
  return add(hadamard(g_e, attended), hadamard(inv_e, appearance));
}

Tensor rae_step(const features::FeatureMaps& fm, const Tensor& h_prev, const RaeParams& params,
                const RaeConfig& cfg, AblationVariant variant, bool training,
                std::mt19937_64& rng) {
  if (fm.v_i.shape()[1] != cfg.grid_h || fm.v_i.shape()[2] != cfg.grid_w ||
      fm.v_i.shape()[3] != cfg.d_i || fm.a_r.shape()[3] != cfg.d_r) {
    throw DimensionError("feature maps do not match the configured encoder geometry");
  }
  if (h_prev.rank() != 1 || h_prev.shape()[0] != cfg.hidden_dim) {
    throw DimensionError("decoder context must be a 1-d tensor of the hidden size");
  }

  Tensor fused;  // (N, D_I)
  switch (variant) {
    case AblationVariant::FULL: {
      const PooledViews pv = pool_views(fm, params.reduce_kernel);
      const AttentionState att = sam_forward(pv, h_prev, params.sam, false);
      fused = tgm_forward(pv, att, h_prev, params.tgm);
      break;
    }
    case AblationVariant::NO_GATE:
    case AblationVariant::NO_GATE_NO_RESIDUALS: {
      const PooledViews pv = pool_views(fm, params.reduce_kernel);
      const bool ablate = variant == AblationVariant::NO_GATE_NO_RESIDUALS;
      const AttentionState att = sam_forward(pv, h_prev, params.sam, ablate);
      fused = matmul(att.f_r_att, params.tgm.w_gr_fuse);
      break;
    }
    case AblationVariant::IFRAME_ONLY: {
      fused = reduce_mean(fm.v_i, {1, 2});
      break;
    }
    default:
      throw ConfigError("unknown ablation variant");
  }

  const Tensor frame_mean = reduce_mean(fused, {0});  // (D_I)
  const Tensor projected =
      add(reshape(matmul(reshape(frame_mean, {1, cfg.d_i}), params.post_w), {cfg.rep_dim}),
          params.post_b);
  return dropout(relu(projected), cfg.dropout_rate, training, rng);
}

void write_attention_maps(const std::string& dir, const Tensor& a_big_r, int factor) {
  if (a_big_r.rank() != 3) throw DimensionError("attention maps must be (N, H, W)");
  if (factor < 1) throw ConfigError("upsampling factor must be >= 1");

  const int n = a_big_r.shape()[0];
  const int h = a_big_r.shape()[1];
  const int w = a_big_r.shape()[2];
  std::filesystem::create_directories(dir);
  for (int k = 0; k < n; ++k) {
    const std::size_t base = static_cast<std::size_t>(k) * h * w;
    double mx = 0.0;
    for (int p = 0; p < h * w; ++p) mx = std::max(mx, a_big_r.values()[base + p]);
    imageio::Image img;
    img.height = h;
    img.width = w;
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(h) * w);
    for (int p = 0; p < h * w; ++p) {
      img.pixels[static_cast<std::size_t>(p)] = mx > 0.0 ? a_big_r.values()[base + p] / mx : 0.0;
    }
    char name[24];
    std::snprintf(name, sizeof(name), "attn_%02d.pgm", k);
    imageio::write_pnm((std::filesystem::path(dir) / name).string(),
                       imageio::upsample_nearest(img, factor));
  }
}

}  // namespace resicap::rae
