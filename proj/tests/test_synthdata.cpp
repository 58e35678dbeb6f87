#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"
#include "diffkpt/rng.hpp"
#include "diffkpt/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

using namespace diffkpt;

namespace {

bool same_bits(double a, double b) {
    std::uint64_t x = 0, y = 0;
    std::memcpy(&x, &a, 8);
    std::memcpy(&y, &b, 8);
    return x == y;
}

} // namespace

TEST_CASE("the built-in quadruped is a valid 17-keypoint skeleton") {
    const SkeletonSpec s = builtin_quadruped();
    CHECK(s.count() == 17);
    CHECK(s.limb_pairs.size() == 16);
    s.validate();
    int roots = 0;
    for (int p : s.parent) roots += p == -1;
    CHECK(roots == 1);
}

TEST_CASE("rest pose keeps every joint pair at least a pixel apart") {
    const SkeletonSpec s = builtin_quadruped();
    const auto pos = rest_positions(s);
    double min_d = 1e9;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        for (std::size_t j = i + 1; j < pos.size(); ++j) {
            min_d = std::min(min_d, std::hypot(pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]));
        }
    }
    INFO("min pairwise rest distance: ", min_d);
    CHECK(min_d >= 1.0);
}

TEST_CASE("skeleton validation rejects malformed graphs") {
    SkeletonSpec s = builtin_quadruped();
    s.parent[3] = 5;  // no root
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = builtin_quadruped();
    s.parent[0] = 99;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = builtin_quadruped();
    s.angle_ranges[2] = {0.5, -0.5};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = builtin_quadruped();
    s.rest_offsets.pop_back();
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = builtin_quadruped();
    s.rest_offsets[0] = s.rest_offsets[1] = {1.0, 1.0};  // two joints coincide
    CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("sampled poses are deterministic in the seed") {
    const SkeletonSpec s = builtin_quadruped();
    const KeypointSet a = sample_pose(s, 0.6, 42);
    const KeypointSet b = sample_pose(s, 0.6, 42);
    const KeypointSet c = sample_pose(s, 0.6, 43);
    REQUIRE(a.count() == 17);
    bool all_same = true, any_diff = false;
    for (std::size_t i = 0; i < 17; ++i) {
        all_same = all_same && same_bits(a.x[i], b.x[i]) && same_bits(a.y[i], b.y[i]);
        any_diff = any_diff || a.x[i] != c.x[i];
    }
    CHECK(all_same);
    CHECK(any_diff);
}

TEST_CASE("poses scale linearly about the root") {
    const SkeletonSpec s = builtin_quadruped();
    const KeypointSet a = sample_pose(s, 0.4, 7, 4096, 4096);
    const KeypointSet b = sample_pose(s, 0.8, 7, 4096, 4096);
    // joint 3 is the root; relative offsets double exactly
    for (std::size_t i = 0; i < 17; ++i) {
        CHECK(b.x[i] - b.x[3] == doctest::Approx(2.0 * (a.x[i] - a.x[3])).epsilon(1e-9));
        CHECK(b.y[i] - b.y[3] == doctest::Approx(2.0 * (a.y[i] - a.y[3])).epsilon(1e-9));
    }
}

TEST_CASE("the padded bbox sits inside the canvas with a 2 pixel margin") {
    const SkeletonSpec s = builtin_quadruped();
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const KeypointSet k = sample_pose(s, 0.55, seed, 64, 64);
        CHECK(k.bbox_x >= 2.0 - 1e-9);
        CHECK(k.bbox_y >= 2.0 - 1e-9);
        CHECK(k.bbox_x + k.bbox_w <= 62.0 + 1e-9);
        CHECK(k.bbox_y + k.bbox_h <= 62.0 + 1e-9);
        double minx = 1e9, maxx = -1e9, miny = 1e9, maxy = -1e9;
        for (std::size_t i = 0; i < 17; ++i) {
            minx = std::min(minx, k.x[i]);
            maxx = std::max(maxx, k.x[i]);
            miny = std::min(miny, k.y[i]);
            maxy = std::max(maxy, k.y[i]);
        }
        // bbox is the tight keypoint box padded 5 percent per side
        const double pad_x = (maxx - minx) * 0.05, pad_y = (maxy - miny) * 0.05;
        CHECK(k.bbox_x == doctest::Approx(minx - pad_x).epsilon(1e-9));
        CHECK(k.bbox_w == doctest::Approx((maxx - minx) + 2 * pad_x).epsilon(1e-9));
        CHECK(k.bbox_y == doctest::Approx(miny - pad_y).epsilon(1e-9));
        CHECK(k.bbox_h == doctest::Approx((maxy - miny) + 2 * pad_y).epsilon(1e-9));
    }
}

TEST_CASE("global rotation covers all four quadrants across seeds") {
    const SkeletonSpec s = builtin_quadruped();
    std::set<int> quadrants;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const KeypointSet k = sample_pose(s, 0.6, seed, 512, 512);
        // nose (index 2) direction relative to the root
        const double dx = k.x[2] - k.x[3], dy = k.y[2] - k.y[3];
        quadrants.insert((dx >= 0 ? 1 : 0) | (dy >= 0 ? 2 : 0));
    }
    CHECK(quadrants.size() == 4);
}

TEST_CASE("a canvas too small for the pose is a validation error") {
    const SkeletonSpec s = builtin_quadruped();
    CHECK_THROWS_AS(sample_pose(s, 1.0, 1, 16, 16), ValidationError);
    CHECK_THROWS_AS(sample_pose(s, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(sample_pose(s, -0.5, 1), ConfigError);
}

TEST_CASE("rendering is deterministic and stays in unit range") {
    const SkeletonSpec s = builtin_quadruped();
    const KeypointSet pose = sample_pose(s, 0.5, 11);
    const Sample a = render(pose, s, 11);
    const Sample b = render(pose, s, 11);
    REQUIRE(a.image.shape() == Shape{3, 64, 64});
    for (std::size_t i = 0; i < a.image.size(); ++i) {
        CHECK(a.image[i] >= 0.0);
        CHECK(a.image[i] <= 1.0);
        CHECK(same_bits(a.image[i], b.image[i]));
    }
}

TEST_CASE("occluders only ever demote visibility from 2 to 1") {
    const SkeletonSpec s = builtin_quadruped();
    RenderOptions opts;
    opts.p_occ = 1.0;
    int demoted = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const KeypointSet pose = sample_pose(s, 0.6, seed);
        const Sample smp = render(pose, s, seed, opts);
        REQUIRE(smp.occluders.size() == 1);
        for (std::size_t i = 0; i < 17; ++i) {
            const bool inside = smp.occluders[0].contains(pose.x[i], pose.y[i]);
            CHECK(smp.kps.visibility[i] == (inside ? 1 : 2));
            CHECK(smp.kps.x[i] == pose.x[i]);  // coordinates never move
            demoted += inside;
        }
    }
    CHECK(demoted > 0);

    opts.p_occ = 0.0;
    const KeypointSet pose = sample_pose(s, 0.6, 5);
    const Sample clean = render(pose, s, 5, opts);
    CHECK(clean.occluders.empty());
    for (std::size_t i = 0; i < 17; ++i) CHECK(clean.kps.visibility[i] == 2);
}

TEST_CASE("bones leave a visible trace over the background") {
    const SkeletonSpec s = builtin_quadruped();
    RenderOptions opts;
    opts.p_occ = 0.0;
    const KeypointSet pose = sample_pose(s, 0.6, 3);
    const Sample smp = render(pose, s, 3, opts);
    // background noise tops out at 0.35 * 1.1; bone colors reach higher
    double mx = 0.0;
    for (std::size_t i = 0; i < smp.image.size(); ++i) mx = std::max(mx, smp.image[i]);
    CHECK(mx > 0.45);
}

TEST_CASE("generate_split writes a loadable, faithful split") {
    const SkeletonSpec s = builtin_quadruped();
    const auto dir = std::filesystem::temp_directory_path() / "dk_split_test";
    std::filesystem::remove_all(dir);
    const SplitManifest m = generate_split(s, 6, 99, dir.string());
    REQUIRE(m.image_paths.size() == 6);
    for (const auto& p : m.image_paths) CHECK(std::filesystem::exists(p));
    CHECK(std::filesystem::exists(dir / "split_manifest.json"));

    const Dataset ds = load_split(m.annotation_path);
    REQUIRE(ds.size() == 6);
    CHECK(ds.keypoint_names == s.keypoint_names);
    CHECK(ds.species == "quadruped");
    CHECK(ds.width == 64);
    CHECK(ds.height == 64);
    for (std::size_t i = 0; i < 6; ++i) {
        REQUIRE(ds.kps[i].count() == 17);
        REQUIRE(ds.images[i].shape() == Shape{3, 64, 64});
        ds.kps[i].validate();
        const double frac = std::max(ds.kps[i].bbox_w, ds.kps[i].bbox_h) / 64.0;
        CHECK(frac >= 0.5 - 1e-9);
        CHECK(frac <= 0.9 + 1e-9);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("split generation is byte-deterministic") {
    const SkeletonSpec s = builtin_quadruped();
    const auto d1 = std::filesystem::temp_directory_path() / "dk_split_a";
    const auto d2 = std::filesystem::temp_directory_path() / "dk_split_b";
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
    generate_split(s, 3, 123, d1.string());
    generate_split(s, 3, 123, d2.string());
    for (const char* f : {"annotations.json", "split_manifest.json", "img_000000.ppm",
                          "img_000002.ppm"}) {
        CHECK(read_text_file((d1 / f).string()) == read_text_file((d2 / f).string()));
    }
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}

TEST_CASE("annotation loading rejects structural problems") {
    const auto dir = std::filesystem::temp_directory_path() / "dk_badann";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "annotations.json").string();

    write_text_file(path, "not json at all");
    CHECK_THROWS_AS(load_split(path), FormatError);

    write_text_file(path, R"({"images": [], "annotations": []})");
    CHECK_THROWS_AS(load_split(path), FormatError);

    // annotation pointing at an image id that is not listed
    write_text_file(path, R"({
      "images": [{"id": 0, "file": "x.ppm", "width": 64, "height": 64}],
      "annotations": [{"id": 0, "image_id": 5, "bbox": [0,0,1,1],
                       "keypoints": [1,2,2], "num_keypoints": 1}],
      "categories": [{"id": 1, "name": "q", "keypoints": ["nose"]}]
    })");
    CHECK_THROWS_AS(load_split(path), FormatError);

    // keypoints array not covering the named set
    write_text_file(path, R"({
      "images": [{"id": 0, "file": "x.ppm", "width": 64, "height": 64}],
      "annotations": [{"id": 0, "image_id": 0, "bbox": [0,0,1,1],
                       "keypoints": [1,2,2], "num_keypoints": 1}],
      "categories": [{"id": 1, "name": "q", "keypoints": ["nose", "neck"]}]
    })");
    CHECK_THROWS_AS(load_split(path), FormatError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("ppm image round-trips through the tensor form") {
    Image img;
    img.width = 2;
    img.height = 2;
    img.rgb = {255, 0, 0, 0, 255, 0, 0, 0, 255, 128, 128, 128};
    const Tensor t = image_from_ppm(encode_ppm(img));
    REQUIRE(t.shape() == Shape{3, 2, 2});
    CHECK(t[0] == 1.0);              // R of pixel (0,0)
    CHECK(t[4 + 1] == 1.0);          // G of pixel (0,1)
    CHECK(t[8 + 2] == 1.0);          // B of pixel (1,0)
    CHECK(t[3] == doctest::Approx(128.0 / 255.0));
}
