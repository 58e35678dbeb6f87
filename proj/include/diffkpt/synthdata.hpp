#pragma once

#include "diffkpt/heatmap.hpp"
#include "diffkpt/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace diffkpt {

struct SkeletonSpec {
    std::string name;
    std::vector<std::string> keypoint_names;
    std::vector<int> parent;  // -1 for the single root
    std::vector<std::array<double, 2>> rest_offsets;  // pixels at unit scale
    std::vector<std::array<double, 2>> angle_ranges;  // radians, per joint
    std::vector<std::pair<int, int>> limb_pairs;      // bones to rasterize

    std::size_t count() const { return keypoint_names.size(); }
    void validate() const;
};

// 17-keypoint side-view quadruped. Offsets are deliberately left/right
// asymmetric so the two sides stay geometrically distinguishable after
// arbitrary global rotation.
SkeletonSpec builtin_quadruped();

// Joint positions of the rest pose (zero jitter, zero rotation) at unit
// scale, root at the origin.
std::vector<std::array<double, 2>> rest_positions(const SkeletonSpec& spec);

struct OccluderRect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct Sample {
    Tensor image;  // [3,H,W] in [0,1]
    KeypointSet kps;
    std::uint64_t seed = 0;
    double scale = 1.0;
    std::vector<OccluderRect> occluders;
};

struct RenderOptions {
    std::size_t canvas_h = 64, canvas_w = 64;
    double p_occ = 0.3;
};

// Uniform joint-angle jitter, forward kinematics accumulating parent
// rotation, global rotation in [0,2pi), translation keeping the padded
// bbox >= 2 px inside the canvas.
KeypointSet sample_pose(const SkeletonSpec& spec, double scale, std::uint64_t seed,
                        std::size_t canvas_w = 64, std::size_t canvas_h = 64);

// Anti-aliased bones over low-amplitude value noise; an occluder rect
// (probability p_occ) flips covered keypoints from visibility 2 to 1.
Sample render(const KeypointSet& kps, const SkeletonSpec& spec, std::uint64_t seed,
              const RenderOptions& opts = {});

struct SplitManifest {
    std::string annotation_path;
    std::vector<std::string> image_paths;
    std::vector<std::uint64_t> sample_seeds;
};

SplitManifest generate_split(const SkeletonSpec& spec, std::size_t n, std::uint64_t seed,
                             const std::string& out_dir, const RenderOptions& opts = {});

// A loaded split: eager images plus their ground-truth keypoints.
struct Dataset {
    std::vector<Tensor> images;
    std::vector<KeypointSet> kps;
    std::vector<int> image_ids;
    std::vector<std::string> keypoint_names;
    std::string species;
    std::size_t width = 0, height = 0;

    std::size_t size() const { return images.size(); }
};

Dataset load_split(const std::string& annotation_path);

Tensor image_from_ppm(const std::string& text);

} // namespace diffkpt
