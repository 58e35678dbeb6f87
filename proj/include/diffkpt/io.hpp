#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace diffkpt {

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
// Writes to <path>.tmp then renames, so readers never see a partial file.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_binary_file(const std::string& path);

// Shortest round-trip decimal form; the one formatter used for every
// float that lands in a text output, so reruns are byte-identical.
std::string fmt_double(double v);

struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // 3 bytes per pixel, row-major
};

// Plain-text portable pixmap (P3).
std::string encode_ppm(const Image& img);
Image decode_ppm(const std::string& text);

// Plain-text portable graymap (P2), values pre-scaled to 0..255.
std::string encode_pgm(int width, int height, const std::vector<std::uint8_t>& gray);

} // namespace diffkpt
