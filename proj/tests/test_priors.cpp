#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "diffkpt/error.hpp"
#include "diffkpt/priors.hpp"
#include "diffkpt/rng.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

using namespace diffkpt;

namespace {

double row_norm(const Tensor& m, std::size_t row, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += m[row * d + j] * m[row * d + j];
    return std::sqrt(s);
}

double cosine(const Tensor& m, std::size_t a, std::size_t b, std::size_t d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += m[a * d + j] * m[b * d + j];
    return s;
}

bool bits_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::uint64_t x = 0, y = 0;
        const double av = a[i], bv = b[i];
        std::memcpy(&x, &av, 8);
        std::memcpy(&y, &bv, 8);
        if (x != y) return false;
    }
    return true;
}

} // namespace

TEST_CASE("prompt templates are the frozen v1 strings") {
    const auto b = build_prompts("tiger", {"nose", "left_eye"});
    CHECK(kPromptTemplateVersion == 1);
    CHECK(b.global_prompt ==
          "Describe the body structure, locomotion style, and biomechanical characteristics of "
          "a tiger relevant to pose estimation. Keypoints: nose, left_eye.");
    REQUIRE(b.keypoint_prompts.size() == 2);
    CHECK(b.keypoint_prompts[0] ==
          "For a tiger, describe the anatomical role of the keypoint 'nose'.");
    CHECK(b.keypoint_prompts[1] ==
          "For a tiger, describe the anatomical role of the keypoint 'left_eye'.");
}

TEST_CASE("prompt order follows the keypoint list and covers it exactly once") {
    std::vector<std::string> names;
    for (int i = 0; i < 17; ++i) names.push_back("kp" + std::to_string(i));
    const auto b = build_prompts("horse", names);
    REQUIRE(b.keypoint_prompts.size() == 17);
    for (int i = 0; i < 17; ++i) {
        CHECK(b.keypoint_prompts[std::size_t(i)].find("'kp" + std::to_string(i) + "'") !=
              std::string::npos);
    }
}

TEST_CASE("prompt building rejects degenerate input") {
    CHECK_THROWS_AS(build_prompts("", {"nose"}), ValidationError);
    CHECK_THROWS_AS(build_prompts("cat", {}), ValidationError);
    CHECK_THROWS_AS(build_prompts("cat", {"nose", "nose"}), ValidationError);
}

TEST_CASE("pseudo embeddings are unit-norm and deterministic") {
    const auto b = build_prompts("tiger", {"nose", "tail", "hip"});
    const SemanticPrior p = pseudo_embed(b, 32, 7);
    CHECK(p.d == 32);
    CHECK(p.source == "pseudo");
    CHECK(row_norm(p.F_g, 0, 32) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(row_norm(p.F_l, r, 32) == doctest::Approx(1.0).epsilon(1e-12));
    }
    const SemanticPrior q = pseudo_embed(b, 32, 7);
    CHECK(bits_equal(p.F_g, q.F_g));
    CHECK(bits_equal(p.F_l, q.F_l));
}

TEST_CASE("identical text embeds identically regardless of position") {
    PromptBundle b1;
    b1.species = "x";
    b1.global_prompt = "shared text";
    b1.keypoint_names = {"a"};
    b1.keypoint_prompts = {"unique one"};
    PromptBundle b2;
    b2.species = "x";
    b2.global_prompt = "other";
    b2.keypoint_names = {"b"};
    b2.keypoint_prompts = {"shared text"};
    const SemanticPrior p1 = pseudo_embed(b1, 16, 5);
    const SemanticPrior p2 = pseudo_embed(b2, 16, 5);
    for (std::size_t j = 0; j < 16; ++j) CHECK(p1.F_g[j] == p2.F_l[j]);
}

TEST_CASE("distinct texts stay nearly orthogonal at d=64") {
    std::vector<std::string> names;
    for (int i = 0; i < 100; ++i) names.push_back("marker_" + std::to_string(i));
    const auto b = build_prompts("species", names);
    const SemanticPrior p = pseudo_embed(b, 64, 11);
    double worst = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        for (std::size_t j = i + 1; j < 100; ++j) {
            worst = std::max(worst, std::abs(cosine(p.F_l, i, j, 64)));
        }
    }
    INFO("max |cosine| over pairs: ", worst);
    CHECK(worst < 0.5);
}

TEST_CASE("embedding width below 8 is rejected") {
    const auto b = build_prompts("cat", {"nose"});
    CHECK_THROWS_AS(pseudo_embed(b, 7, 1), ConfigError);
    CHECK_THROWS_AS(pseudo_embed(b, 4, 1), ConfigError);
}

TEST_CASE("encode and decode round-trip bitwise") {
    const auto b = build_prompts("lynx", {"nose", "neck"});
    const SemanticPrior p = pseudo_embed(b, 16, 3);
    const std::string bytes = encode_embeddings(p);
    const SemanticPrior q = decode_embeddings(bytes);
    CHECK(q.species == "lynx");
    CHECK(q.keypoint_names == p.keypoint_names);
    CHECK(q.d == 16);
    CHECK(q.source == "file");
    CHECK(bits_equal(p.F_g, q.F_g));
    CHECK(bits_equal(p.F_l, q.F_l));
    // already-normalized rows are left untouched, so re-export is stable
    CHECK(encode_embeddings(q) == bytes);
}

TEST_CASE("decoding renormalizes rows that are off unit length") {
    const auto b = build_prompts("lynx", {"nose"});
    SemanticPrior p = pseudo_embed(b, 16, 3);
    Tensor scaled = Tensor::zeros({16});
    for (std::size_t j = 0; j < 16; ++j) scaled[j] = 3.0 * p.F_g[j];
    p.F_g = scaled;
    const SemanticPrior q = decode_embeddings(encode_embeddings(p));
    CHECK(row_norm(q.F_g, 0, 16) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("a near-zero row cannot be normalized and is rejected") {
    const auto b = build_prompts("lynx", {"nose"});
    SemanticPrior p = pseudo_embed(b, 16, 3);
    p.F_l = Tensor::zeros({1, 16});
    CHECK_THROWS_AS(decode_embeddings(encode_embeddings(p)), ValidationError);
}

TEST_CASE("header and record corruption yield format errors naming the offset") {
    const auto b = build_prompts("lynx", {"nose", "neck"});
    const std::string bytes = encode_embeddings(pseudo_embed(b, 16, 3));
    CHECK_THROWS_AS(decode_embeddings(""), FormatError);
    CHECK_THROWS_AS(decode_embeddings("not json\n"), FormatError);

    const std::size_t header_end = bytes.find('\n') + 1;
    try {
        decode_embeddings(bytes.substr(0, header_end + 10));
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(std::to_string(header_end)) != std::string::npos);
    }

    // cut inside the second record: the named offset is where F_l starts
    const std::size_t fg_bytes = 4 + 4 + 4 + 4 + 16 * 8;
    try {
        decode_embeddings(bytes.substr(0, header_end + fg_bytes + 10));
        FAIL("expected a format error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find(std::to_string(header_end + fg_bytes)) !=
              std::string::npos);
    }
}

TEST_CASE("dimension mismatch between records is a format error") {
    const auto b = build_prompts("lynx", {"nose"});
    SemanticPrior p = pseudo_embed(b, 16, 3);
    SemanticPrior q = pseudo_embed(b, 24, 3);
    p.F_l = q.F_l;  // [1,24] against F_g [16]
    CHECK_THROWS_AS(decode_embeddings(encode_embeddings(p)), FormatError);
}

TEST_CASE("keypoint count mismatch names both counts") {
    const auto b = build_prompts("lynx", {"nose", "neck"});
    const SemanticPrior p = pseudo_embed(b, 16, 3);
    try {
        check_prior_count(p, 17);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2") != std::string::npos);
        CHECK(msg.find("17") != std::string::npos);
    }
    check_prior_count(p, 2);
}
