#include "diffkpt/serialize.hpp"

#include "diffkpt/error.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

namespace diffkpt {

static_assert(std::endian::native == std::endian::little,
              "DPAT I/O assumes a little-endian host");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw FormatError("tensor record truncated");
    return v;
}

} // namespace

void write_dpat(std::ostream& os, const Tensor& t) {
    os.write("DPAT", 4);
    put_u32(os, kDpatVersion);
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) {
        put_u32(os, static_cast<std::uint32_t>(t.extent(i)));
    }
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!os) throw IoError("failed writing tensor record");
}

Tensor read_dpat(std::istream& is, bool requires_grad) {
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "DPAT", 4) != 0) {
        throw FormatError("bad tensor record magic");
    }
    const std::uint32_t version = get_u32(is);
    if (version != kDpatVersion) {
        throw FormatError("unsupported tensor record version " + std::to_string(version));
    }
    const std::uint32_t rank = get_u32(is);
    if (rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = get_u32(is);
        if (shape[i] == 0) throw FormatError("zero extent in tensor record");
        n *= shape[i];
    }
    std::vector<double> data(n);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw FormatError("tensor record truncated");
    return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

} // namespace diffkpt
