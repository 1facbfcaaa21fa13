#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "resicap/errors.hpp"
#include "resicap/features.hpp"
#include "resicap/tensor.hpp"

namespace resicap::rae {

// Pooled views of one video's feature maps: spatial means, channel means, and
// the channel-reduced appearance map that attention is applied to.
struct PooledViews {
  Tensor v_i_c;     // (N, D_I)  spatial mean of v_i
  Tensor a_r_c;     // (N, D_r)  spatial mean of a_r
  Tensor v_i_conv;  // (N, H, W, D_r)  1x1-conv reduction of v_i
  Tensor v_i_s;     // (N, H, W)  channel mean of v_i_conv
  Tensor a_r_s;     // (N, H, W)  channel mean of a_r
};

// Spatial attention state for one step.
struct AttentionState {
  Tensor alpha_r;  // (N, H, W) in (-1, 1)
  Tensor a_big_r;  // (N, H, W), each frame sums to 1
  Tensor f_r_att;  // (N, D_r) attended appearance feature
};

struct SamParams {
  Tensor w_t;  // (hidden_dim, H*W)
  Tensor w_i;  // scalar
  Tensor w_r;  // scalar
};

struct TgmParams {
  Tensor w_g;        // (d_gate, 1)
  Tensor w_gt;       // (hidden_dim, d_gate)
  Tensor w_gr;       // (D_r, d_gate)
  Tensor w_gi_gate;  // (D_I, d_gate)
  Tensor w_gr_fuse;  // (D_r, D_I)
  Tensor w_gi_fuse;  // (D_I, D_I)
  // Added to the pre-sigmoid gate logit; lets tests pin the gate open/shut.
  double gate_logit_shift = 0.0;
};

struct RaeConfig {
  int d_i = 32;
  int d_r = 16;
  int grid_h = 7;
  int grid_w = 7;
  int hidden_dim = 32;
  int d_gate = 32;
  int rep_dim = 64;
  double dropout_rate = 0.5;
};

struct RaeParams {
  Tensor reduce_kernel;  // (1, 1, D_I, D_r)
  SamParams sam;
  TgmParams tgm;
  Tensor post_w;  // (D_I, rep_dim)
  Tensor post_b;  // (rep_dim)

  // Named learnable parameters, e.g. "rae.sam.w_t".
  std::vector<std::pair<std::string, Tensor>> parameters(const std::string& prefix) const;
};

RaeParams make_rae_params(const RaeConfig& cfg, std::mt19937_64& rng);

enum class AblationVariant { FULL, NO_GATE, NO_GATE_NO_RESIDUALS, IFRAME_ONLY };

std::string to_string(AblationVariant v);
AblationVariant variant_from_string(const std::string& name);  // ConfigError on unknown

PooledViews pool_views(const features::FeatureMaps& fm, const Tensor& reduce_kernel);

// Refined spatial attention from the decoder context and the pooled views;
// with ablate_residuals the residual-map term is dropped.
AttentionState sam_forward(const PooledViews& pv, const Tensor& h_prev, const SamParams& params,
                           bool ablate_residuals);

// Per-frame confidence scores in (0,1), shape (N).
Tensor tgm_gate(const PooledViews& pv, const Tensor& h_prev, const TgmParams& params);

// Gated per-frame blend of the attended feature and the appearance feature.
Tensor tgm_forward(const PooledViews& pv, const AttentionState& att, const Tensor& h_prev,
                   const TgmParams& params);

// One encoder step: variant-selected module stack followed by frame mean,
// linear projection, relu, and dropout; returns the (rep_dim) representation
// consumed by the caption decoder at this step.
Tensor rae_step(const features::FeatureMaps& fm, const Tensor& h_prev, const RaeParams& params,
                const RaeConfig& cfg, AblationVariant variant, bool training,
                std::mt19937_64& rng);

// Writes one grayscale PGM per frame ("attn_00.pgm", ...) with each frame's
// attention scaled so its maximum maps to 255, upsampled by `factor`.
void write_attention_maps(const std::string& dir, const Tensor& a_big_r, int factor);

}  // namespace resicap::rae
