#include "diffkpt/model.hpp"

#include "diffkpt/error.hpp"
#include "diffkpt/rng.hpp"

#include <cmath>

namespace diffkpt {

void ModelConfig::validate() const {
    if (channels == 0 || heads == 0 || channels % heads != 0 || channels % 2 != 0) {
        throw ConfigError("channels must be even, positive, and divisible by heads");
    }
    if (prior_d == 0) throw ConfigError("prior width must be positive");
    if (n_keypoints == 0) throw ConfigError("keypoint count must be positive");
    if (T < 1) throw ConfigError("T must be at least 1");
    if (img_h == 0 || img_w == 0 || img_h % 8 != 0 || img_w % 8 != 0) {
        throw ConfigError("image extents must be positive multiples of 8");
    }
    if (stride != 4.0) throw ConfigError("encoder topology fixes stride at 4");
}

std::vector<std::pair<std::string, Tensor>> DenoiserParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    const char* enc_names[4][2] = {{"enc0_w", "enc0_b"},
                                   {"enc1_w", "enc1_b"},
                                   {"enc2_w", "enc2_b"},
                                   {"enc3_w", "enc3_b"}};
    for (int i = 0; i < 4; ++i) {
        out.emplace_back(enc_names[i][0], enc_w[i]);
        out.emplace_back(enc_names[i][1], enc_b[i]);
    }
    out.emplace_back("attn_wq", attn_wq);
    out.emplace_back("attn_wt", attn_wt);
    out.emplace_back("attn_wk", attn_wk);
    out.emplace_back("attn_wv", attn_wv);
    out.emplace_back("attn_wo", attn_wo);
    out.emplace_back("head_c0_w", head_cw[0]);
    out.emplace_back("head_c0_b", head_cb[0]);
    out.emplace_back("head_c1_w", head_cw[1]);
    out.emplace_back("head_c1_b", head_cb[1]);
    out.emplace_back("head_w", head_w);
    out.emplace_back("head_scale", head_scale);
    out.emplace_back("head_bias", head_bias);
    return out;
}

namespace {

Tensor uniform_init(Shape shape, double bound, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / double(fan_in + fan_out));
}

// Encoder stages use 5x5 kernels; the refinement pair in the head uses 3x3.
constexpr std::size_t kEncK = 5;
constexpr int kEncPad = 2;

} // namespace

DenoiserParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const std::size_t C = cfg.channels, d = cfg.prior_d, N = cfg.n_keypoints;
    Rng rng(seed, /*stream=*/3);
    DenoiserParams p;
    const std::size_t k = kEncK;
    for (int i = 0; i < 4; ++i) {
        const std::size_t cin = i == 0 ? 3 : C;
        p.enc_w[i] = uniform_init({C, cin, k, k}, glorot_bound(cin * k * k, C * k * k), rng);
        p.enc_b[i] = Tensor::zeros({C}, true);
    }
    p.attn_wq = uniform_init({N, C}, glorot_bound(N, C), rng);
    p.attn_wt = uniform_init({C, C}, glorot_bound(C, C), rng);
    p.attn_wk = uniform_init({C + d, C}, glorot_bound(C + d, C), rng);
    p.attn_wv = uniform_init({C + d, C}, glorot_bound(C + d, C), rng);
    p.attn_wo = uniform_init({C, C}, glorot_bound(C, C), rng);
    // The second refinement conv starts at zero so the residual branch is
    // inert until training turns it on.
    p.head_cw[0] = uniform_init({C, C, 3, 3}, glorot_bound(C * 9, C * 9), rng);
    p.head_cb[0] = Tensor::zeros({C}, true);
    p.head_cw[1] = Tensor::zeros({C, C, 3, 3}, true);
    p.head_cb[1] = Tensor::zeros({C}, true);
    p.head_w = uniform_init({C, d}, glorot_bound(C, d), rng);
    // Output calibration starts at identity: scale 1, bias 0.
    p.head_scale = Tensor::full({N}, 1.0, true);
    p.head_bias = Tensor::zeros({N}, true);
    return p;
}

Tensor timestep_embedding(int t, std::size_t dim) {
    if (dim % 2 != 0) throw ConfigError("timestep embedding dim must be even");
    Tensor e = Tensor::zeros({dim});
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -double(2 * i) / double(dim));
        e[2 * i] = std::sin(double(t) * freq);
        e[2 * i + 1] = std::cos(double(t) * freq);
    }
    return e;
}

Tensor encode_image(const Tensor& x, const DenoiserParams& params, const ModelConfig& cfg) {
    if (x.rank() != 3 || x.extent(0) != 3 || x.extent(1) != cfg.img_h ||
        x.extent(2) != cfg.img_w) {
        throw ShapeError("encode_image: expected [3x" + std::to_string(cfg.img_h) + "x" +
                         std::to_string(cfg.img_w) + "], got " + shape_str(x.shape()));
    }
    Tensor h = x;
    for (int i = 0; i < 4; ++i) {
        const int stride = i < 3 ? 2 : 1;
        h = conv2d(h, params.enc_w[i], stride, kEncPad);
        h = add(h, broadcast_spatial(params.enc_b[i], h.extent(1), h.extent(2)));
        h = silu(h);
    }
    return upsample2x(h);
}

Tensor fuse_condition(const Tensor& F, const Tensor& F_g) {
    if (F.rank() != 3) throw ShapeError("fuse_condition: features must be [C,H',W']");
    if (F_g.rank() != 1) throw ShapeError("fuse_condition: prior must be rank 1");
    return concat_axis0(F, broadcast_spatial(F_g, F.extent(1), F.extent(2)));
}

namespace {

// [c,h,w] -> [h*w, c] per-cell rows
Tensor cells_of(const Tensor& fm) {
    return transpose(reshape(fm, {fm.extent(0), fm.extent(1) * fm.extent(2)}));
}

} // namespace

Tensor cross_attend(const HeatmapStack& y_t, const Tensor& F_fuse, int t,
                    const DenoiserParams& params, const ModelConfig& cfg,
                    std::vector<Tensor>* attn_out) {
    if (t < 1 || t > cfg.T) {
        throw ConfigError("cross_attend: timestep " + std::to_string(t) + " outside 1.." +
                          std::to_string(cfg.T));
    }
    const std::size_t C = cfg.channels;
    if (y_t.values.extent(1) != F_fuse.extent(1) || y_t.values.extent(2) != F_fuse.extent(2)) {
        throw ShapeError("cross_attend: spatial extents disagree, " +
                         shape_str(y_t.values.shape()) + " vs " + shape_str(F_fuse.shape()));
    }
    const std::size_t hh = F_fuse.extent(1), ww = F_fuse.extent(2);

    Tensor q_cells = cells_of(y_t.values);             // [S, N]
    Tensor kv_cells = cells_of(F_fuse);                // [S, C+d]
    Tensor emb = timestep_embedding(t, C);
    Tensor t_row = reshape(matmul(reshape(emb, {1, C}), params.attn_wt), {C});
    Tensor Q = add_row_broadcast(matmul(q_cells, params.attn_wq), t_row);  // [S, C]
    Tensor K = matmul(kv_cells, params.attn_wk);                           // [S, C]
    Tensor V = matmul(kv_cells, params.attn_wv);                           // [S, C]

    const std::size_t dh = C / cfg.heads;
    const double inv_sqrt = 1.0 / std::sqrt(double(dh));
    std::vector<Tensor> head_outs;
    head_outs.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        Tensor qh = slice_cols(Q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(K, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(V, h * dh, (h + 1) * dh);
        Tensor attn = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);  // [S, S]
        if (attn_out) attn_out->push_back(attn);
        head_outs.push_back(matmul(attn, vh));
    }
    Tensor merged = matmul(concat_cols(head_outs), params.attn_wo);  // [S, C]
    return reshape(transpose(merged), {C, hh, ww});
}

HeatmapStack decode_keypoints(const Tensor& F_CA, const Tensor& F, const Tensor& F_l,
                              const DenoiserParams& params, const ModelConfig& cfg) {
    if (F_CA.shape() != F.shape()) {
        throw ShapeError("decode_keypoints: F_CA " + shape_str(F_CA.shape()) + " vs F " +
                         shape_str(F.shape()));
    }
    if (F_l.rank() != 2 || F_l.extent(0) != cfg.n_keypoints || F_l.extent(1) != cfg.prior_d) {
        throw ShapeError("decode_keypoints: F_l " + shape_str(F_l.shape()) + " does not match N=" +
                         std::to_string(cfg.n_keypoints) + ", d=" + std::to_string(cfg.prior_d));
    }
    const std::size_t hh = F.extent(1), ww = F.extent(2);
    Tensor fd = add(F_CA, F);
    Tensor r = conv2d(fd, params.head_cw[0], 1, 1);
    r = silu(add(r, broadcast_spatial(params.head_cb[0], hh, ww)));
    r = conv2d(r, params.head_cw[1], 1, 1);
    r = add(r, broadcast_spatial(params.head_cb[1], hh, ww));
    fd = add(fd, r);
    Tensor cells = cells_of(fd);                      // [S, C]
    Tensor proj = matmul(cells, params.head_w);       // [S, d]
    Tensor maps = transpose(matmul(proj, transpose(F_l)));  // [N, S]
    Tensor out = rows_affine(maps, params.head_scale, params.head_bias);
    HeatmapStack hm;
    hm.stride = cfg.stride;
    hm.values = reshape(out, {cfg.n_keypoints, hh, ww});
    return hm;
}

HeatmapStack denoise_with_features(const HeatmapStack& y_t, const Tensor& F,
                                   const Tensor& F_fuse, const Tensor& F_l, int t,
                                   const DenoiserParams& params, const ModelConfig& cfg) {
    Tensor F_CA = cross_attend(y_t, F_fuse, t, params, cfg);
    return decode_keypoints(F_CA, F, F_l, params, cfg);
}

HeatmapStack denoise(const HeatmapStack& y_t, const Tensor& image, const SemanticPrior& prior,
                     int t, const DenoiserParams& params, const ModelConfig& cfg) {
    check_prior_count(prior, cfg.n_keypoints);
    if (prior.d != cfg.prior_d) {
        throw ConfigError("prior width " + std::to_string(prior.d) +
                          " does not match model width " + std::to_string(cfg.prior_d));
    }
    Tensor F = encode_image(image, params, cfg);
    Tensor F_fuse = fuse_condition(F, prior.F_g);
    return denoise_with_features(y_t, F, F_fuse, prior.F_l, t, params, cfg);
}

} // namespace diffkpt
