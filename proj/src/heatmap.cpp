#include "diffkpt/heatmap.hpp"

#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"

#include <algorithm>
#include <cmath>

namespace diffkpt {

void KeypointSet::validate() const {
    const std::size_t n = x.size();
    if (y.size() != n || visibility.size() != n) {
        throw ValidationError("keypoint arrays disagree on count");
    }
    if (!score.empty() && score.size() != n) {
        throw ValidationError("score array disagrees on keypoint count");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw ValidationError("non-finite keypoint coordinate at index " + std::to_string(i));
        }
        if (visibility[i] < 0 || visibility[i] > 2) {
            throw ValidationError("visibility flag out of {0,1,2} at index " + std::to_string(i));
        }
        if (!score.empty() && (score[i] < 0.0 || score[i] > 1.0)) {
            throw ValidationError("score outside [0,1] at index " + std::to_string(i));
        }
    }
    if (bbox_w <= 0.0 || bbox_h <= 0.0) {
        throw ValidationError("bbox extents must be positive");
    }
}

EncodeResult encode(const KeypointSet& kps, std::size_t height, std::size_t width,
                    double stride, double sigma) {
    if (sigma <= 0.0) throw ConfigError("encode: sigma must be positive");
    if (stride <= 0.0) throw ConfigError("encode: stride must be positive");
    if (height == 0 || width == 0) throw ConfigError("encode: map extents must be positive");
    const std::size_t n = kps.count();
    EncodeResult res;
    res.stack.stride = stride;
    res.stack.values = Tensor::zeros({n, height, width});
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < n; ++i) {
        if (kps.visibility[i] == 0) continue;
        const double u = kps.x[i] / stride;
        const double v = kps.y[i] / stride;
        if (u < 0.0 || u > double(width - 1) || v < 0.0 || v > double(height - 1)) {
            res.out_of_bounds.push_back(i);
        }
        for (std::size_t r = 0; r < height; ++r) {
            for (std::size_t c = 0; c < width; ++c) {
                const double du = double(c) - u;
                const double dv = double(r) - v;
                res.stack.values.at(i, r, c) = std::exp(-(du * du + dv * dv) * inv);
            }
        }
    }
    return res;
}

KeypointSet decode(const HeatmapStack& hm, const DecodeOptions& opts) {
    const std::size_t n = hm.channels(), h = hm.height(), w = hm.width();
    KeypointSet out;
    out.x.resize(n);
    out.y.resize(n);
    out.visibility.resize(n);
    out.score.resize(n);
    out.bbox_x = 0.0;
    out.bbox_y = 0.0;
    out.bbox_w = double(w) * hm.stride;
    out.bbox_h = double(h) * hm.stride;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best_r = 0, best_c = 0;
        double best = hm.values.at(i, 0, 0);
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                const double v = hm.values.at(i, r, c);
                if (v > best) {  // strict: ties keep the smallest row-major index
                    best = v;
                    best_r = r;
                    best_c = c;
                }
            }
        }
        double dx = 0.0, dy = 0.0;
        if (best_c > 0 && best_c + 1 < w) {
            const double left = hm.values.at(i, best_r, best_c - 1);
            const double right = hm.values.at(i, best_r, best_c + 1);
            if (right > left) dx = 0.25;
            else if (left > right) dx = -0.25;
        }
        if (best_r > 0 && best_r + 1 < h) {
            const double up = hm.values.at(i, best_r - 1, best_c);
            const double down = hm.values.at(i, best_r + 1, best_c);
            if (down > up) dy = 0.25;
            else if (up > down) dy = -0.25;
        }
        out.x[i] = (double(best_c) + dx) * hm.stride;
        out.y[i] = (double(best_r) + dy) * hm.stride;
        const double s = std::clamp(best, 0.0, 1.0);
        out.score[i] = s;
        out.visibility[i] = s >= opts.vis_threshold ? 2 : 1;
    }
    return out;
}

std::vector<std::string> dump_pgm_channels(const HeatmapStack& hm) {
    const std::size_t n = hm.channels(), h = hm.height(), w = hm.width();
    std::vector<std::string> out;
    out.reserve(n);
    std::vector<std::uint8_t> gray(h * w);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                const double v = std::clamp(hm.values.at(i, r, c), 0.0, 1.0);
                gray[r * w + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
        out.push_back(encode_pgm(int(w), int(h), gray));
    }
    return out;
}

} // namespace diffkpt
