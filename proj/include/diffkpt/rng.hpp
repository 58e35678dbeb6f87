#pragma once

#include <cstdint>
#include <string>

namespace diffkpt {

// SplitMix64 finalizer. Also usable as a standalone 64-bit mixer.
std::uint64_t mix64(std::uint64_t x);

// FNV-1a 64-bit hash over bytes; stable across platforms.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

// Counter-based SplitMix64 generator. Output i is a pure function of
// (seed, stream, i), so state is just the counter and runs are
// bit-reproducible after a save/restore of (seed, stream, counter).
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();

    // Uniform in [0,1), 53-bit resolution.
    double uniform();
    // Uniform in [lo,hi).
    double uniform(double lo, double hi);
    // Uniform integer in [lo,hi] inclusive.
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi);
    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
};

} // namespace diffkpt
