#include "diffkpt/priors.hpp"

#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"
#include "diffkpt/rng.hpp"
#include "diffkpt/serialize.hpp"

#include <json.hpp>

#include <cmath>
#include <set>
#include <sstream>

namespace diffkpt {

PromptBundle build_prompts(const std::string& species,
                           const std::vector<std::string>& keypoints) {
    if (species.empty()) throw ValidationError("species must be non-empty");
    if (keypoints.empty()) throw ValidationError("keypoint list must be non-empty");
    std::set<std::string> seen;
    for (const auto& k : keypoints) {
        if (k.empty()) throw ValidationError("keypoint names must be non-empty");
        if (!seen.insert(k).second) throw ValidationError("duplicate keypoint name '" + k + "'");
    }
    PromptBundle b;
    b.species = species;
    b.keypoint_names = keypoints;
    std::ostringstream joined;
    for (std::size_t i = 0; i < keypoints.size(); ++i) {
        if (i) joined << ", ";
        joined << keypoints[i];
    }
    b.global_prompt = "Describe the body structure, locomotion style, and biomechanical "
                      "characteristics of a " + species +
                      " relevant to pose estimation. Keypoints: " + joined.str() + ".";
    b.keypoint_prompts.reserve(keypoints.size());
    for (const auto& k : keypoints) {
        b.keypoint_prompts.push_back("For a " + species +
                                     ", describe the anatomical role of the keypoint '" + k + "'.");
    }
    return b;
}

namespace {

void embed_text(const std::string& text, std::uint64_t seed, double* out, std::size_t d) {
    Rng rng(seed, fnv1a64(text));
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        out[i] = rng.normal();
        norm_sq += out[i] * out[i];
    }
    const double norm = std::sqrt(norm_sq);
    if (norm < 1e-12) throw NumericError("embedding vector has near-zero norm");
    for (std::size_t i = 0; i < d; ++i) out[i] /= norm;
}

// Identity on already-unit rows so a normalized file re-exports bitwise.
void renormalize_row(double* row, std::size_t d) {
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm_sq += row[i] * row[i];
    const double norm = std::sqrt(norm_sq);
    if (norm < 1e-12) throw ValidationError("embedding row with near-zero norm rejected");
    if (std::abs(norm - 1.0) < 1e-9) return;
    for (std::size_t i = 0; i < d; ++i) row[i] /= norm;
}

} // namespace

SemanticPrior pseudo_embed(const PromptBundle& bundle, std::size_t d, std::uint64_t seed) {
    if (d < 8) throw ConfigError("embedding width must be at least 8, got " + std::to_string(d));
    SemanticPrior p;
    p.d = d;
    p.source = "pseudo";
    p.species = bundle.species;
    p.keypoint_names = bundle.keypoint_names;
    p.encoder_name = "pseudo-hash-v1";
    const std::size_t n = bundle.keypoint_names.size();
    p.F_g = Tensor::zeros({d});
    embed_text(bundle.global_prompt, seed, p.F_g.data(), d);
    p.F_l = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        embed_text(bundle.keypoint_prompts[i], seed, p.F_l.data() + i * d, d);
    }
    return p;
}

std::string encode_embeddings(const SemanticPrior& prior) {
    nlohmann::ordered_json header;
    header["species"] = prior.species;
    header["keypoint_names"] = prior.keypoint_names;
    header["d"] = prior.d;
    header["encoder_name"] = prior.encoder_name;
    std::ostringstream os(std::ios::binary);
    os << header.dump() << '\n';
    write_dpat(os, prior.F_g);
    write_dpat(os, prior.F_l);
    return os.str();
}

SemanticPrior decode_embeddings(const std::string& bytes) {
    const std::size_t nl = bytes.find('\n');
    if (nl == std::string::npos) throw FormatError("embedding file missing header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("embedding header is not valid JSON: ") + e.what());
    }
    SemanticPrior p;
    try {
        p.species = header.at("species").get<std::string>();
        p.keypoint_names = header.at("keypoint_names").get<std::vector<std::string>>();
        p.d = header.at("d").get<std::size_t>();
        p.encoder_name = header.at("encoder_name").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("embedding header field missing or mistyped: ") + e.what());
    }
    std::istringstream is(bytes.substr(nl + 1), std::ios::binary);
    auto read_record = [&](const char* which) {
        const std::size_t offset = nl + 1 + static_cast<std::size_t>(is.tellg());
        try {
            return read_dpat(is);
        } catch (const FormatError& e) {
            throw FormatError(std::string(e.what()) + " (" + which + " record at byte offset " +
                              std::to_string(offset) + ")");
        }
    };
    p.F_g = read_record("F_g");
    p.F_l = read_record("F_l");
    if (p.F_g.rank() != 1 || p.F_l.rank() != 2 || p.F_g.extent(0) != p.d ||
        p.F_l.extent(1) != p.d) {
        throw FormatError("embedding records disagree with header width d=" + std::to_string(p.d) +
                          ": F_g " + shape_str(p.F_g.shape()) + ", F_l " + shape_str(p.F_l.shape()));
    }
    if (p.F_l.extent(0) != p.keypoint_names.size()) {
        throw FormatError("F_l has " + std::to_string(p.F_l.extent(0)) + " rows but header names " +
                          std::to_string(p.keypoint_names.size()) + " keypoints");
    }
    renormalize_row(p.F_g.data(), p.d);
    for (std::size_t i = 0; i < p.F_l.extent(0); ++i) {
        renormalize_row(p.F_l.data() + i * p.d, p.d);
    }
    p.source = "file";
    return p;
}

void save_embeddings(const std::string& path, const SemanticPrior& prior) {
    write_file_atomic(path, encode_embeddings(prior));
}

SemanticPrior load_embeddings(const std::string& path) {
    return decode_embeddings(read_binary_file(path));
}

void check_prior_count(const SemanticPrior& prior, std::size_t expected_n) {
    if (prior.F_l.extent(0) != expected_n) {
        throw ValidationError("prior covers " + std::to_string(prior.F_l.extent(0)) +
                              " keypoints but the dataset has " + std::to_string(expected_n));
    }
}

} // namespace diffkpt
