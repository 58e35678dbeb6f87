#pragma once

#include "diffkpt/tensor.hpp"

#include <string>
#include <vector>

namespace diffkpt {

// Visibility follows the COCO-style convention:
// 0 not labeled, 1 labeled but not visible, 2 visible.
struct KeypointSet {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<int> visibility;
    double bbox_x = 0, bbox_y = 0, bbox_w = 0, bbox_h = 0;
    std::string species;
    std::vector<double> score;  // optional, per keypoint, in [0,1]

    std::size_t count() const { return x.size(); }
    void validate() const;  // throws ValidationError
};

struct HeatmapStack {
    Tensor values;   // [N, H', W']
    double stride = 4.0;

    std::size_t channels() const { return values.extent(0); }
    std::size_t height() const { return values.extent(1); }
    std::size_t width() const { return values.extent(2); }
};

struct EncodeResult {
    HeatmapStack stack;
    std::vector<std::size_t> out_of_bounds;  // channels whose center left the map
};

// Gaussian targets: channel i carries exp(-((u-u_i)^2+(v-v_i)^2)/(2 sigma^2))
// at cell centers, (u_i,v_i) = coords_i / stride, no renormalization.
// visibility 0 leaves the channel all zero.
EncodeResult encode(const KeypointSet& kps, std::size_t height, std::size_t width,
                    double stride, double sigma);

struct DecodeOptions {
    double vis_threshold = 0.3;
};

// Argmax per channel (row-major-first tie-break) plus a quarter-cell shift
// toward the larger axis neighbor, scaled back to pixels by stride.
KeypointSet decode(const HeatmapStack& hm, const DecodeOptions& opts = {});

// One P2 graymap per channel, values clamped to [0,1] then scaled to 0..255.
std::vector<std::string> dump_pgm_channels(const HeatmapStack& hm);

} // namespace diffkpt
