#pragma once

#include "diffkpt/tensor.hpp"

#include <cstdint>
#include <iosfwd>

namespace diffkpt {

// Flat binary tensor record: magic "DPAT", version u32, rank u32,
// extents u32[rank], payload f64[numel]. All integers and reals
// little-endian. Checkpoints and embedding files concatenate records.
inline constexpr std::uint32_t kDpatVersion = 1;

void write_dpat(std::ostream& os, const Tensor& t);
Tensor read_dpat(std::istream& is, bool requires_grad = false);

} // namespace diffkpt
