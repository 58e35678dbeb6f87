#include "diffkpt/synthdata.hpp"

#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"
#include "diffkpt/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numbers>

namespace diffkpt {

void SkeletonSpec::validate() const {
    const std::size_t n = keypoint_names.size();
    if (parent.size() != n || rest_offsets.size() != n || angle_ranges.size() != n) {
        throw ValidationError("skeleton arrays disagree on joint count");
    }
    int roots = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (parent[i] == -1) ++roots;
        else if (parent[i] < 0 || parent[i] >= int(n)) {
            throw ValidationError("joint " + std::to_string(i) + " has invalid parent");
        }
        if (angle_ranges[i][0] > angle_ranges[i][1]) {
            throw ValidationError("joint " + std::to_string(i) + " has inverted angle range");
        }
    }
    if (roots != 1) throw ValidationError("skeleton must have exactly one root");
    for (const auto& [a, b] : limb_pairs) {
        if (a < 0 || b < 0 || a >= int(n) || b >= int(n)) {
            throw ValidationError("limb pair references invalid joint");
        }
    }
    const auto rest = rest_positions(*this);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = rest[i][0] - rest[j][0], dy = rest[i][1] - rest[j][1];
            if (dx * dx + dy * dy < 1.0) {
                throw ValidationError("rest-pose joints " + std::to_string(i) + " and " +
                                      std::to_string(j) + " are closer than 1 pixel");
            }
        }
    }
}

std::vector<std::array<double, 2>> rest_positions(const SkeletonSpec& spec) {
    const std::size_t n = spec.count();
    std::vector<std::array<double, 2>> pos(n);
    std::vector<char> done(n, 0);
    // Parents can appear after their children, so fixpoint-iterate.
    std::size_t placed = 0;
    while (placed < n) {
        const std::size_t before = placed;
        for (std::size_t i = 0; i < n; ++i) {
            if (done[i]) continue;
            if (spec.parent[i] == -1) {
                pos[i] = {0.0, 0.0};
            } else if (done[static_cast<std::size_t>(spec.parent[i])]) {
                const auto& p = pos[static_cast<std::size_t>(spec.parent[i])];
                pos[i] = {p[0] + spec.rest_offsets[i][0], p[1] + spec.rest_offsets[i][1]};
            } else {
                continue;
            }
            done[i] = 1;
            ++placed;
        }
        if (placed == before) throw ValidationError("skeleton parent graph has a cycle");
    }
    return pos;
}

SkeletonSpec builtin_quadruped() {
    SkeletonSpec s;
    s.name = "quadruped";
    s.keypoint_names = {"left_eye",       "right_eye",      "nose",
                        "neck",           "tail_root",      "left_shoulder",
                        "left_elbow",     "left_front_paw", "right_shoulder",
                        "right_elbow",    "right_front_paw", "left_hip",
                        "left_knee",      "left_back_paw",  "right_hip",
                        "right_knee",     "right_back_paw"};
    //                 eyeL eyeR nose neck tail shL elbL pawL shR elbR pawR hipL kneL bpwL hipR kneR bpwR
    s.parent        = {2,   2,   3,   -1,  3,   3,  5,   6,   3,  8,   9,   4,   11,  12,  4,   14,  15};
    s.rest_offsets = {{{-5, -6}},  {{-9, -9}},  {{18, -3}}, {{0, 0}},   {{-34, 1}},
                      {{-1, 10}},  {{1, 12}},   {{0, 14}},  {{-7, 8}},  {{-1, 12}},
                      {{-2, 13}},  {{0, 9}},    {{3, 12}},  {{0, 14}},  {{-5, 8}},
                      {{0, 12}},   {{-3, 13}}};
    const std::array<double, 2> head = {-0.08, 0.08};
    const std::array<double, 2> limb = {-0.18, 0.18};
    const std::array<double, 2> girdle = {-0.12, 0.12};
    s.angle_ranges = {head,   head,   head,   {{0, 0}}, girdle, girdle, limb, limb, girdle,
                      limb,   limb,   girdle, limb,     limb,   girdle, limb, limb};
    s.limb_pairs = {{2, 3},  {0, 2},  {1, 2},   {3, 4},   {3, 5},  {5, 6},
                    {6, 7},  {3, 8},  {8, 9},   {9, 10},  {4, 11}, {11, 12},
                    {12, 13}, {4, 14}, {14, 15}, {15, 16}};
    s.validate();
    return s;
}

KeypointSet sample_pose(const SkeletonSpec& spec, double scale, std::uint64_t seed,
                        std::size_t canvas_w, std::size_t canvas_h) {
    if (scale <= 0.0) throw ConfigError("sample_pose: scale must be positive");
    spec.validate();
    const std::size_t n = spec.count();
    Rng rng(seed, /*stream=*/0);

    std::vector<double> jitter(n);
    for (std::size_t i = 0; i < n; ++i) {
        jitter[i] = rng.uniform(spec.angle_ranges[i][0], spec.angle_ranges[i][1]);
    }
    const double global_rot = rng.uniform(0.0, 2.0 * std::numbers::pi);

    // FK by depth-first walk; child angle = parent angle + its own jitter.
    std::vector<std::vector<int>> children(n);
    int root = -1;
    for (std::size_t i = 0; i < n; ++i) {
        if (spec.parent[i] == -1) root = int(i);
        else children[static_cast<std::size_t>(spec.parent[i])].push_back(int(i));
    }
    std::vector<double> px(n), py(n), ang(n);
    std::vector<int> stack = {root};
    ang[static_cast<std::size_t>(root)] = global_rot + jitter[static_cast<std::size_t>(root)];
    px[static_cast<std::size_t>(root)] = 0.0;
    py[static_cast<std::size_t>(root)] = 0.0;
    while (!stack.empty()) {
        const std::size_t j = static_cast<std::size_t>(stack.back());
        stack.pop_back();
        for (int c : children[j]) {
            const std::size_t ci = static_cast<std::size_t>(c);
            ang[ci] = ang[j] + jitter[ci];
            const double ox = spec.rest_offsets[ci][0] * scale;
            const double oy = spec.rest_offsets[ci][1] * scale;
            px[ci] = px[j] + std::cos(ang[ci]) * ox - std::sin(ang[ci]) * oy;
            py[ci] = py[j] + std::sin(ang[ci]) * ox + std::cos(ang[ci]) * oy;
            stack.push_back(c);
        }
    }

    double minx = px[0], maxx = px[0], miny = py[0], maxy = py[0];
    for (std::size_t i = 1; i < n; ++i) {
        minx = std::min(minx, px[i]);
        maxx = std::max(maxx, px[i]);
        miny = std::min(miny, py[i]);
        maxy = std::max(maxy, py[i]);
    }
    const double pad_x = (maxx - minx) * 0.05, pad_y = (maxy - miny) * 0.05;
    const double bw = (maxx - minx) + 2 * pad_x, bh = (maxy - miny) + 2 * pad_y;
    const double margin = 2.0;
    const double lo_x = margin + pad_x - minx, hi_x = double(canvas_w) - margin - pad_x - maxx;
    const double lo_y = margin + pad_y - miny, hi_y = double(canvas_h) - margin - pad_y - maxy;
    if (lo_x > hi_x || lo_y > hi_y) {
        throw ValidationError("canvas " + std::to_string(canvas_w) + "x" + std::to_string(canvas_h) +
                              " too small for pose of extent " + std::to_string(bw) + "x" +
                              std::to_string(bh));
    }
    const double tx = rng.uniform(lo_x, hi_x);
    const double ty = rng.uniform(lo_y, hi_y);

    KeypointSet out;
    out.species = spec.name;
    out.x.resize(n);
    out.y.resize(n);
    out.visibility.assign(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.x[i] = px[i] + tx;
        out.y[i] = py[i] + ty;
    }
    out.bbox_x = minx + tx - pad_x;
    out.bbox_y = miny + ty - pad_y;
    out.bbox_w = bw;
    out.bbox_h = bh;
    out.validate();
    return out;
}

namespace {

double dist_to_segment(double x, double y, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((x - ax) * vx + (y - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = x - (ax + t * vx), dy = y - (ay + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

// Bilinear value noise on a coarse lattice, one sample per pixel.
std::vector<double> value_noise(std::size_t h, std::size_t w, Rng& rng) {
    const std::size_t gh = 9, gw = 9;
    std::vector<double> grid(gh * gw);
    for (auto& v : grid) v = rng.uniform(0.10, 0.35);
    std::vector<double> out(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        const double gy = double(r) / double(h - 1) * double(gh - 1);
        const std::size_t y0 = std::min(std::size_t(gy), gh - 2);
        const double fy = gy - double(y0);
        for (std::size_t c = 0; c < w; ++c) {
            const double gx = double(c) / double(w - 1) * double(gw - 1);
            const std::size_t x0 = std::min(std::size_t(gx), gw - 2);
            const double fx = gx - double(x0);
            const double v00 = grid[y0 * gw + x0], v01 = grid[y0 * gw + x0 + 1];
            const double v10 = grid[(y0 + 1) * gw + x0], v11 = grid[(y0 + 1) * gw + x0 + 1];
            out[r * w + c] = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                             fy * ((1 - fx) * v10 + fx * v11);
        }
    }
    return out;
}

} // namespace

Sample render(const KeypointSet& kps, const SkeletonSpec& spec, std::uint64_t seed,
              const RenderOptions& opts) {
    const std::size_t h = opts.canvas_h, w = opts.canvas_w;
    Rng rng(seed, /*stream=*/1);
    Sample s;
    s.seed = seed;
    s.kps = kps;
    s.image = Tensor::zeros({3, h, w});

    const std::vector<double> noise = value_noise(h, w, rng);
    double tint[3];
    for (double& t : tint) t = rng.uniform(0.9, 1.1);
    for (std::size_t ch = 0; ch < 3; ++ch) {
        for (std::size_t i = 0; i < h * w; ++i) {
            s.image[ch * h * w + i] = noise[i] * tint[ch];
        }
    }

    const double radius = 1.6;
    for (const auto& [a, b] : spec.limb_pairs) {
        const std::size_t ia = static_cast<std::size_t>(a), ib = static_cast<std::size_t>(b);
        double color[3];
        for (double& c : color) c = rng.uniform(0.45, 0.95);
        const double ax = kps.x[ia], ay = kps.y[ia], bx = kps.x[ib], by = kps.y[ib];
        const long r0 = std::max(0L, long(std::floor(std::min(ay, by) - radius - 1)));
        const long r1 = std::min(long(h) - 1, long(std::ceil(std::max(ay, by) + radius + 1)));
        const long c0 = std::max(0L, long(std::floor(std::min(ax, bx) - radius - 1)));
        const long c1 = std::min(long(w) - 1, long(std::ceil(std::max(ax, bx) + radius + 1)));
        for (long r = r0; r <= r1; ++r) {
            for (long c = c0; c <= c1; ++c) {
                const double d = dist_to_segment(double(c) + 0.5, double(r) + 0.5, ax, ay, bx, by);
                const double cov = std::clamp(radius + 0.5 - d, 0.0, 1.0);
                if (cov <= 0.0) continue;
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    double& px = s.image[(ch * h + std::size_t(r)) * w + std::size_t(c)];
                    px = px * (1.0 - cov) + color[ch] * cov;
                }
            }
        }
    }

    if (rng.uniform() < opts.p_occ) {
        OccluderRect rect;
        const double ow = rng.uniform(8.0, 20.0), oh = rng.uniform(8.0, 20.0);
        rect.x0 = rng.uniform(0.0, double(w) - ow);
        rect.y0 = rng.uniform(0.0, double(h) - oh);
        rect.x1 = rect.x0 + ow;
        rect.y1 = rect.y0 + oh;
        double color[3];
        for (double& c : color) c = rng.uniform(0.0, 1.0);
        const long rr0 = long(std::floor(rect.y0)), rr1 = std::min(long(h) - 1, long(std::ceil(rect.y1)));
        const long cc0 = long(std::floor(rect.x0)), cc1 = std::min(long(w) - 1, long(std::ceil(rect.x1)));
        for (long r = std::max(0L, rr0); r <= rr1; ++r) {
            for (long c = std::max(0L, cc0); c <= cc1; ++c) {
                if (!rect.contains(double(c) + 0.5, double(r) + 0.5)) continue;
                for (std::size_t ch = 0; ch < 3; ++ch) {
                    s.image[(ch * h + std::size_t(r)) * w + std::size_t(c)] = color[ch];
                }
            }
        }
        for (std::size_t i = 0; i < s.kps.count(); ++i) {
            if (s.kps.visibility[i] == 2 && rect.contains(s.kps.x[i], s.kps.y[i])) {
                s.kps.visibility[i] = 1;  // coords stay put, only the flag drops
            }
        }
        s.occluders.push_back(rect);
    }

    for (std::size_t i = 0; i < s.image.size(); ++i) {
        s.image[i] = std::clamp(s.image[i], 0.0, 1.0);
    }
    return s;
}

namespace {

std::string image_file_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%06zu.ppm", i);
    return buf;
}

Image to_u8_image(const Tensor& t) {
    const std::size_t h = t.extent(1), w = t.extent(2);
    Image img;
    img.width = int(w);
    img.height = int(h);
    img.rgb.resize(h * w * 3);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double v = std::clamp(t[(ch * h + r) * w + c], 0.0, 1.0);
                img.rgb[(r * w + c) * 3 + ch] = std::uint8_t(std::lround(v * 255.0));
            }
        }
    }
    return img;
}

} // namespace

Tensor image_from_ppm(const std::string& text) {
    const Image img = decode_ppm(text);
    const std::size_t h = std::size_t(img.height), w = std::size_t(img.width);
    Tensor t = Tensor::zeros({3, h, w});
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                t[(ch * h + r) * w + c] = double(img.rgb[(r * w + c) * 3 + ch]) / 255.0;
            }
        }
    }
    return t;
}

SplitManifest generate_split(const SkeletonSpec& spec, std::size_t n, std::uint64_t seed,
                             const std::string& out_dir, const RenderOptions& opts) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir);

    SplitManifest manifest;
    nlohmann::ordered_json ann;
    ann["images"] = nlohmann::ordered_json::array();
    ann["annotations"] = nlohmann::ordered_json::array();

    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t sample_seed = (seed << 20) | std::uint64_t(i);
        Rng scale_rng(sample_seed, /*stream=*/2);
        const double frac = scale_rng.uniform(0.5, 0.9);
        // FK is linear in scale and the jitter draws do not depend on it, so a
        // unit-scale probe gives the exact multiplier that makes the padded
        // bbox span frac of the canvas.
        const KeypointSet probe = sample_pose(spec, 1.0, sample_seed, 1u << 14, 1u << 14);
        const double unit_extent = std::max(probe.bbox_w, probe.bbox_h);
        const double scale =
            frac * double(std::min(opts.canvas_w, opts.canvas_h)) / unit_extent;
        KeypointSet pose = sample_pose(spec, scale, sample_seed, opts.canvas_w, opts.canvas_h);
        Sample s = render(pose, spec, sample_seed, opts);
        s.scale = scale;

        const std::string file = image_file_name(i);
        const std::string path = (std::filesystem::path(out_dir) / file).string();
        write_file_atomic(path, encode_ppm(to_u8_image(s.image)));
        manifest.image_paths.push_back(path);
        manifest.sample_seeds.push_back(sample_seed);

        nlohmann::ordered_json im;
        im["id"] = i;
        im["file"] = file;
        im["width"] = opts.canvas_w;
        im["height"] = opts.canvas_h;
        ann["images"].push_back(im);

        nlohmann::ordered_json a;
        a["id"] = i;
        a["image_id"] = i;
        a["bbox"] = {s.kps.bbox_x, s.kps.bbox_y, s.kps.bbox_w, s.kps.bbox_h};
        nlohmann::ordered_json flat = nlohmann::ordered_json::array();
        int labeled = 0;
        for (std::size_t k = 0; k < s.kps.count(); ++k) {
            flat.push_back(s.kps.x[k]);
            flat.push_back(s.kps.y[k]);
            flat.push_back(s.kps.visibility[k]);
            if (s.kps.visibility[k] > 0) ++labeled;
        }
        a["keypoints"] = flat;
        a["num_keypoints"] = labeled;
        a["area"] = s.kps.bbox_w * s.kps.bbox_h;
        ann["annotations"].push_back(a);
    }

    nlohmann::ordered_json cat;
    cat["id"] = 1;
    cat["name"] = spec.name;
    cat["keypoints"] = spec.keypoint_names;
    nlohmann::ordered_json skel = nlohmann::ordered_json::array();
    for (const auto& [a, b] : spec.limb_pairs) skel.push_back({a + 1, b + 1});
    cat["skeleton"] = skel;
    ann["categories"] = nlohmann::ordered_json::array({cat});

    manifest.annotation_path = (std::filesystem::path(out_dir) / "annotations.json").string();
    write_file_atomic(manifest.annotation_path, ann.dump(2) + "\n");

    nlohmann::ordered_json mf;
    mf["skeleton"] = spec.name;
    mf["n"] = n;
    mf["seed"] = seed;
    mf["canvas"] = {{"width", opts.canvas_w}, {"height", opts.canvas_h}};
    mf["p_occ"] = opts.p_occ;
    mf["scale_range"] = {0.5, 0.9};
    mf["sample_seeds"] = manifest.sample_seeds;
    write_file_atomic((std::filesystem::path(out_dir) / "split_manifest.json").string(),
                      mf.dump(2) + "\n");
    return manifest;
}

Dataset load_split(const std::string& annotation_path) {
    nlohmann::json ann;
    try {
        ann = nlohmann::json::parse(read_text_file(annotation_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("annotation file is not valid JSON: " + std::string(e.what()));
    }
    Dataset ds;
    try {
        const auto& cats = ann.at("categories");
        if (cats.empty()) throw FormatError("annotation file has no categories");
        ds.species = cats[0].at("name").get<std::string>();
        ds.keypoint_names = cats[0].at("keypoints").get<std::vector<std::string>>();
        const std::filesystem::path dir = std::filesystem::path(annotation_path).parent_path();
        std::map<int, std::string> files;
        for (const auto& im : ann.at("images")) {
            files[im.at("id").get<int>()] = im.at("file").get<std::string>();
            ds.width = im.at("width").get<std::size_t>();
            ds.height = im.at("height").get<std::size_t>();
        }
        for (const auto& a : ann.at("annotations")) {
            const int image_id = a.at("image_id").get<int>();
            const auto it = files.find(image_id);
            if (it == files.end()) {
                throw FormatError("annotation references unknown image_id " +
                                  std::to_string(image_id));
            }
            KeypointSet k;
            const auto flat = a.at("keypoints").get<std::vector<double>>();
            if (flat.size() % 3 != 0 || flat.size() / 3 != ds.keypoint_names.size()) {
                throw FormatError("keypoints array length " + std::to_string(flat.size()) +
                                  " does not cover " + std::to_string(ds.keypoint_names.size()) +
                                  " named keypoints");
            }
            for (std::size_t i = 0; i < flat.size(); i += 3) {
                k.x.push_back(flat[i]);
                k.y.push_back(flat[i + 1]);
                k.visibility.push_back(int(flat[i + 2]));
            }
            const auto bbox = a.at("bbox").get<std::vector<double>>();
            if (bbox.size() != 4) throw FormatError("bbox must have 4 entries");
            k.bbox_x = bbox[0];
            k.bbox_y = bbox[1];
            k.bbox_w = bbox[2];
            k.bbox_h = bbox[3];
            k.species = ds.species;
            k.validate();
            ds.kps.push_back(std::move(k));
            ds.image_ids.push_back(image_id);
            ds.images.push_back(image_from_ppm(read_text_file((dir / it->second).string())));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("annotation field missing or mistyped: " + std::string(e.what()));
    }
    return ds;
}

} // namespace diffkpt
