#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"
#include "diffkpt/rng.hpp"

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

using namespace diffkpt;

namespace {

double parse_back(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    REQUIRE(res.ec == std::errc());
    return v;
}

} // namespace

TEST_CASE("fmt_double is shortest round-trip") {
    CHECK(fmt_double(0.1) == "0.1");
    CHECK(fmt_double(1.0) == "1");
    CHECK(fmt_double(-0.5) == "-0.5");
    CHECK(fmt_double(5e-4) == "5e-04");
    CHECK(parse_back(fmt_double(1.0 / 3.0)) == 1.0 / 3.0);
    CHECK(parse_back(fmt_double(1e-300)) == 1e-300);

    Rng rng(41, 0);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-20.0, 20.0));
        std::uint64_t a = 0, b = 0;
        const double back = parse_back(fmt_double(v));
        std::memcpy(&a, &v, 8);
        std::memcpy(&b, &back, 8);
        CHECK(a == b);
    }
}

TEST_CASE("text file write and read round-trip") {
    const std::string path = (std::filesystem::temp_directory_path() / "dk_io_rt.txt").string();
    const std::string body = "line one\nline two\n\x01\x02 binary-ish bytes\n";
    write_text_file(path, body);
    CHECK(read_text_file(path) == body);
    std::filesystem::remove(path);
}

TEST_CASE("atomic write leaves the final file and no temporary") {
    const auto dir = std::filesystem::temp_directory_path() / "dk_io_atomic";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "out.json").string();
    write_file_atomic(path, "{}\n");
    CHECK(read_text_file(path) == "{}\n");
    std::size_t entries = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++entries;
    CHECK(entries == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("reading a missing file is an io error") {
    CHECK_THROWS_AS(read_text_file("/nonexistent/definitely/missing.txt"), IoError);
}

TEST_CASE("ppm encode and decode round-trip exactly") {
    Image img;
    img.width = 3;
    img.height = 2;
    img.rgb = {0, 1, 2, 250, 251, 252, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120};
    const std::string text = encode_ppm(img);
    CHECK(text.substr(0, 2) == "P3");
    const Image back = decode_ppm(text);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.rgb == img.rgb);
}

TEST_CASE("ppm decode rejects malformed input") {
    CHECK_THROWS_AS(decode_ppm("P6\n2 2\n255\n"), FormatError);
    CHECK_THROWS_AS(decode_ppm("P3\n2 2\n255\n1 2 3"), FormatError);
    CHECK_THROWS_AS(decode_ppm("P3\n-1 2\n255\n"), FormatError);
    CHECK_THROWS_AS(decode_ppm("P3\n2 2\n255\n1 2 3 4 5 6 7 8 9 10 11 300\n"), FormatError);
}

TEST_CASE("pgm encoder emits a P2 header and all cells") {
    std::vector<std::uint8_t> cells = {0, 128, 255, 64};
    const std::string text = encode_pgm(2, 2, cells);
    CHECK(text.substr(0, 2) == "P2");
    CHECK(text.find("255") != std::string::npos);
    CHECK(text.find("128") != std::string::npos);
}
