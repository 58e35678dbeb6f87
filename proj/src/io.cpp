#include "diffkpt/io.hpp"

#include "diffkpt/error.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace diffkpt {

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    if (f.bad()) throw IoError("failed reading " + path);
    return os.str();
}

std::string read_binary_file(const std::string& path) { return read_text_file(path); }

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) throw IoError("failed writing " + path);
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    write_text_file(tmp, content);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot rename " + tmp + " to " + path);
    }
}

std::string fmt_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw NumericError("fmt_double failed");
    return std::string(buf, end);
}

std::string encode_ppm(const Image& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
        throw ValidationError("image buffer does not match its extents");
    }
    std::ostringstream os;
    os << "P3\n" << img.width << ' ' << img.height << "\n255\n";
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::size_t at = (static_cast<std::size_t>(y) * img.width + x) * 3;
            os << int(img.rgb[at]) << ' ' << int(img.rgb[at + 1]) << ' ' << int(img.rgb[at + 2]);
            os << (x + 1 == img.width ? '\n' : ' ');
        }
    }
    return os.str();
}

Image decode_ppm(const std::string& text) {
    std::istringstream is(text);
    std::string magic;
    is >> magic;
    if (magic != "P3") throw FormatError("expected P3 pixmap");
    long w = 0, h = 0, maxval = 0;
    is >> w >> h >> maxval;
    if (!is || w <= 0 || h <= 0 || maxval != 255) throw FormatError("bad P3 header");
    Image img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
    for (auto& b : img.rgb) {
        long v = -1;
        is >> v;
        if (!is || v < 0 || v > 255) throw FormatError("bad P3 sample");
        b = static_cast<std::uint8_t>(v);
    }
    return img;
}

std::string encode_pgm(int width, int height, const std::vector<std::uint8_t>& gray) {
    if (width <= 0 || height <= 0 ||
        gray.size() != static_cast<std::size_t>(width) * height) {
        throw ValidationError("graymap buffer does not match its extents");
    }
    std::ostringstream os;
    os << "P2\n" << width << ' ' << height << "\n255\n";
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            os << int(gray[static_cast<std::size_t>(y) * width + x]);
            os << (x + 1 == width ? '\n' : ' ');
        }
    }
    return os.str();
}

} // namespace diffkpt
