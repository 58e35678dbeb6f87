#pragma once

#include "diffkpt/heatmap.hpp"
#include "diffkpt/priors.hpp"
#include "diffkpt/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace diffkpt {

struct ModelConfig {
    std::size_t channels = 32;     // C, feature width; divisible by heads, even
    std::size_t prior_d = 64;      // d, conditioning width
    std::size_t heads = 4;
    std::size_t n_keypoints = 17;  // N
    int T = 100;
    std::size_t img_h = 64, img_w = 64;  // divisible by 8
    double stride = 4.0;                 // image pixels per heatmap cell

    std::size_t map_h() const { return img_h / 4; }
    std::size_t map_w() const { return img_w / 4; }
    void validate() const;  // throws ConfigError
};

// Parameter names and their checkpoint order are fixed:
// enc0_w enc0_b enc1_w enc1_b enc2_w enc2_b enc3_w enc3_b
// attn_wq attn_wt attn_wk attn_wv attn_wo
// head_c0_w head_c0_b head_c1_w head_c1_b head_w head_scale head_bias
struct DenoiserParams {
    Tensor enc_w[4];
    Tensor enc_b[4];
    Tensor attn_wq;  // [N, C]
    Tensor attn_wt;  // [C, C] timestep embedding projection
    Tensor attn_wk;  // [C+d, C]
    Tensor attn_wv;  // [C+d, C]
    Tensor attn_wo;  // [C, C]
    Tensor head_cw[2];  // [C, C, 3, 3] refinement convs; head_cw[1] starts at zero
    Tensor head_cb[2];  // [C]
    Tensor head_w;   // [C, d]
    Tensor head_scale;  // [N]
    Tensor head_bias;   // [N]

    std::vector<std::pair<std::string, Tensor>> named() const;
};

DenoiserParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Sinusoidal position code for the timestep; dim must be even.
Tensor timestep_embedding(int t, std::size_t dim);

// Three stride-2 stages plus one stride-1 stage, SiLU between, then a 2x
// bilinear upsample: [3,H,W] -> [C,H/4,W/4].
Tensor encode_image(const Tensor& x, const DenoiserParams& params, const ModelConfig& cfg);

// [C,H',W'] + [d] -> [(C+d),H',W'], prior broadcast to every cell.
Tensor fuse_condition(const Tensor& F, const Tensor& F_g);

// Queries: per-cell projection of y_t channels plus a projected timestep
// code. Keys/values: per-cell projections of F_fuse. Full spatial
// attention over H'*W' cells. attn_out, when given, receives one [S,S]
// weight matrix per head.
Tensor cross_attend(const HeatmapStack& y_t, const Tensor& F_fuse, int t,
                    const DenoiserParams& params, const ModelConfig& cfg,
                    std::vector<Tensor>* attn_out = nullptr);

// F_D = F_CA + F, refined by a residual conv pair (identity at init);
// 1x1 projection to d channels; channel i is the inner product with
// F_l row i, then a per-keypoint scale and bias.
HeatmapStack decode_keypoints(const Tensor& F_CA, const Tensor& F, const Tensor& F_l,
                              const DenoiserParams& params, const ModelConfig& cfg);

// Full denoiser f(y_t, x, priors, t) -> y0_hat, composing the four stages.
HeatmapStack denoise(const HeatmapStack& y_t, const Tensor& image,
                     const SemanticPrior& prior, int t, const DenoiserParams& params,
                     const ModelConfig& cfg);

// Same, reusing precomputed F and F_fuse (inference runs many steps on
// one image).
HeatmapStack denoise_with_features(const HeatmapStack& y_t, const Tensor& F,
                                   const Tensor& F_fuse, const Tensor& F_l, int t,
                                   const DenoiserParams& params, const ModelConfig& cfg);

} // namespace diffkpt
