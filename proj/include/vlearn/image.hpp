#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "vlearn/error.hpp"

namespace vlearn {

/// Grayscale image, row-major, values in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
        if (w < 0 || h < 0) throw ShapeError("negative image size");
    }

    std::size_t size() const { return pixels.size(); }
    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

    bool is_binary() const {
        return std::all_of(pixels.begin(), pixels.end(), [](double v) { return v == 0.0 || v == 1.0; });
    }

    std::size_t count_nonzero() const {
        return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](double v) { return v != 0.0; }));
    }

    bool operator==(const Image&) const = default;
};

inline double mean_squared_error(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw ShapeError("image sizes differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
    }
    return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Snap every pixel to the nearest k/255 so the image survives a PGM round trip unchanged.
inline Image quantize8(Image img) {
    for (auto& v : img.pixels) v = to_byte(v) / 255.0;
    return img;
}

// ---- PGM (P5, maxval 255) ----------------------------------------------------

inline void write_pgm(std::ostream& out, const Image& img) {
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<char> bytes(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = static_cast<char>(to_byte(img.pixels[i]));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("failed to write PGM data");
}

namespace detail {

inline int read_pgm_token(std::istream& in) {
    int c = in.get();
    while (true) {
        while (c != EOF && std::isspace(c)) c = in.get();
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
            continue;
        }
        break;
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError("malformed PGM header");
    long value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1'000'000) throw FormatError("PGM header value too large");
        c = in.get();
    }
    // exactly one whitespace byte follows the last header field
    if (c == EOF || !std::isspace(c)) throw FormatError("malformed PGM header");
    return static_cast<int>(value);
}

}  // namespace detail

inline Image read_pgm(std::istream& in) {
    char magic[2] = {};
    if (!in.read(magic, 2) || magic[0] != 'P' || magic[1] != '5') throw FormatError("not a binary PGM (P5)");
    const int w = detail::read_pgm_token(in);
    const int h = detail::read_pgm_token(in);
    const int maxval = detail::read_pgm_token(in);
    if (maxval != 255) throw FormatError("only maxval 255 PGM is supported");
    Image img(w, h);
    std::vector<char> bytes(img.size());
    if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) throw FormatError("truncated PGM data");
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
    return img;
}

inline void save_pgm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    write_pgm(out, img);
}

inline Image load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return read_pgm(in);
}

}  // namespace vlearn
