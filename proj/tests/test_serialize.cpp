#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "diffkpt/error.hpp"
#include "diffkpt/rng.hpp"
#include "diffkpt/serialize.hpp"
#include "diffkpt/tensor.hpp"

#include <cstring>
#include <sstream>
#include <string>

using namespace diffkpt;

namespace {

std::string record_of(const Tensor& t) {
    std::ostringstream os(std::ios::binary);
    write_dpat(os, t);
    return os.str();
}

Tensor read_back(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return read_dpat(is);
}

} // namespace

TEST_CASE("round-trip preserves shape and every bit of the payload") {
    Rng rng(31, 0);
    for (const Shape& shape : {Shape{7}, Shape{3, 4}, Shape{2, 3, 4}, Shape{2, 2, 2, 3}}) {
        Tensor t = Tensor::zeros(shape);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal() * 1e3;
        t[0] = -0.0;
        const Tensor u = read_back(record_of(t));
        REQUIRE(u.shape() == t.shape());
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::uint64_t a = 0, b = 0;
            const double ta = t[i], ub = u[i];
            std::memcpy(&a, &ta, 8);
            std::memcpy(&b, &ub, 8);
            CHECK(a == b);
        }
    }
}

TEST_CASE("byte layout is frozen") {
    Tensor t = Tensor::zeros({2});
    t[0] = 1.0;
    t[1] = 2.0;
    const std::string got = record_of(t);
    // magic, version 1, rank 1, extent 2, then two little-endian doubles
    const unsigned char want[] = {'D', 'P', 'A', 'T', 1, 0, 0, 0, 1,    0,    0, 0,
                                  2,   0,   0,   0,   0, 0, 0, 0, 0,    0,    0xF0, 0x3F,
                                  0,   0,   0,   0,   0, 0, 0, 0x40};
    REQUIRE(got.size() == sizeof(want));
    for (std::size_t i = 0; i < sizeof(want); ++i) {
        CHECK(static_cast<unsigned char>(got[i]) == want[i]);
    }
}

TEST_CASE("bad magic is a format error") {
    std::string r = record_of(Tensor::zeros({2}));
    r[0] = 'X';
    CHECK_THROWS_AS(read_back(r), FormatError);
}

TEST_CASE("unsupported version is a format error") {
    std::string r = record_of(Tensor::zeros({2}));
    r[4] = 9;
    CHECK_THROWS_AS(read_back(r), FormatError);
}

TEST_CASE("truncation anywhere is a format error") {
    const std::string r = record_of(Tensor::zeros({3, 3}));
    for (std::size_t cut : {std::size_t(2), std::size_t(6), std::size_t(10),
                            std::size_t(18), r.size() - 1}) {
        CHECK_THROWS_AS(read_back(r.substr(0, cut)), FormatError);
    }
}

TEST_CASE("implausible rank and zero extents are rejected") {
    std::string r = record_of(Tensor::zeros({2}));
    r[8] = 200; // rank field
    CHECK_THROWS_AS(read_back(r), FormatError);

    std::string z = record_of(Tensor::zeros({2}));
    z[12] = 0; // extent field
    CHECK_THROWS_AS(read_back(z), FormatError);
}

TEST_CASE("consecutive records stream back in order") {
    Tensor a = Tensor::full({2}, 5.0), b = Tensor::full({3}, -1.0);
    std::ostringstream os(std::ios::binary);
    write_dpat(os, a);
    write_dpat(os, b);
    std::istringstream is(os.str(), std::ios::binary);
    const Tensor ra = read_dpat(is);
    const Tensor rb = read_dpat(is);
    CHECK(ra.shape() == Shape{2});
    CHECK(rb.shape() == Shape{3});
    CHECK(ra[0] == 5.0);
    CHECK(rb[2] == -1.0);
}

TEST_CASE("requires_grad flag on read is honored") {
    const std::string r = record_of(Tensor::zeros({2}));
    std::istringstream is(r, std::ios::binary);
    const Tensor t = read_dpat(is, true);
    CHECK(t.requires_grad());
}
