#pragma once

#include "diffkpt/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace diffkpt {

inline constexpr int kPromptTemplateVersion = 1;

struct PromptBundle {
    std::string species;
    std::string global_prompt;
    std::vector<std::string> keypoint_names;
    std::vector<std::string> keypoint_prompts;  // parallel to keypoint_names
};

// Conditioning vectors. Every row of F_l and F_g itself is unit-norm,
// which keeps attention logits scale-controlled.
struct SemanticPrior {
    Tensor F_g;  // [d]
    Tensor F_l;  // [N, d]
    std::size_t d = 0;
    std::string source;  // "file" or "pseudo"
    std::string species;
    std::vector<std::string> keypoint_names;
    std::string encoder_name;
};

PromptBundle build_prompts(const std::string& species,
                           const std::vector<std::string>& keypoints);

// Offline stand-in for a text encoder: each prompt's hash seeds the RNG
// stream, d standard normals, then L2 normalization. Pure in (texts, d, seed).
SemanticPrior pseudo_embed(const PromptBundle& bundle, std::size_t d, std::uint64_t seed);

// File format: one UTF-8 JSON header line {species, keypoint_names, d,
// encoder_name}, then two binary tensor records, F_g [d] and F_l [N,d].
std::string encode_embeddings(const SemanticPrior& prior);
SemanticPrior decode_embeddings(const std::string& bytes);

void save_embeddings(const std::string& path, const SemanticPrior& prior);
SemanticPrior load_embeddings(const std::string& path);

// Throws ValidationError with both counts when the prior does not cover
// the dataset's keypoints.
void check_prior_count(const SemanticPrior& prior, std::size_t expected_n);

} // namespace diffkpt
