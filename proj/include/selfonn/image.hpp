#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "selfonn/errors.hpp"
#include "selfonn/tensor.hpp"

namespace selfonn {

/// 16-bit grayscale frame, row-major.
struct ThermalImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint16_t> pixels;

    ThermalImage() = default;
    ThermalImage(std::size_t w, std::size_t h, std::uint16_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}
    ThermalImage(std::size_t w, std::size_t h, std::vector<std::uint16_t> px) : width(w), height(h), pixels(std::move(px)) {
        if (pixels.size() != w * h)
            throw DimensionError("image " + std::to_string(w) + "x" + std::to_string(h) + " given " +
                                 std::to_string(pixels.size()) + " pixels");
    }

    std::uint16_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }

    friend bool operator==(const ThermalImage&, const ThermalImage&) = default;
};

// Binary PGM (P5), maxval 65535, big-endian samples. Header tokens may be
// separated by any whitespace and interleaved with '#' comments; exactly one
// whitespace byte separates maxval from the raster.

inline ThermalImage decode_pgm16(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw ParseError("not a binary PGM (magic P5 expected)", 0);
    pos = 2;

    auto skip_space_and_comments = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_uint = [&](const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos;
        std::uint64_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > 0xFFFFFFFFu) throw ParseError(std::string(what) + " too large", start);
            ++pos;
        }
        if (pos == start) {
            if (pos >= bytes.size()) throw ParseError(std::string("truncated header, missing ") + what, pos);
            throw ParseError(std::string("expected ") + what, pos);
        }
        return static_cast<std::size_t>(v);
    };

    if (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
        throw ParseError("not a binary PGM (magic P5 expected)", 0);
    skip_space_and_comments();
    const std::size_t width_offset = pos;
    const std::size_t width = read_uint("width");
    skip_space_and_comments();
    const std::size_t height_offset = pos;
    const std::size_t height = read_uint("height");
    if (width == 0) throw ParseError("zero image width", width_offset);
    if (height == 0) throw ParseError("zero image height", height_offset);
    skip_space_and_comments();
    const std::size_t maxval_offset = pos;
    const std::size_t maxval = read_uint("maxval");
    if (maxval != 65535) throw ParseError("maxval " + std::to_string(maxval) + " unsupported, need 65535", maxval_offset);
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw ParseError("missing whitespace before raster", pos);
    ++pos;

    const std::size_t need = width * height * 2;
    if (bytes.size() - pos < need)
        throw ParseError("truncated raster: " + std::to_string(bytes.size() - pos) + " of " + std::to_string(need) +
                             " bytes",
                         bytes.size());
    ThermalImage img(width, height);
    for (std::size_t i = 0; i < width * height; ++i)
        img.pixels[i] = static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1]);
    return img;
}

/// Canonical encoding: "P5\n<w> <h>\n65535\n" followed by big-endian samples.
inline std::vector<std::uint8_t> encode_pgm16(const ThermalImage& img) {
    const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n65535\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + img.pixels.size() * 2);
    for (std::uint16_t p : img.pixels) {
        out.push_back(static_cast<std::uint8_t>(p >> 8));
        out.push_back(static_cast<std::uint8_t>(p & 0xFF));
    }
    return out;
}

inline ThermalImage load_pgm16(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), {}};
    try {
        return decode_pgm16(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
}

inline void write_pgm16(const ThermalImage& img, const std::filesystem::path& path) {
    const auto bytes = encode_pgm16(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

/// Factor-2 area downsampling; each output pixel is the 2x2 block mean rounded half up.
inline ThermalImage resize_half(const ThermalImage& img) {
    if (img.width % 2 != 0 || img.height % 2 != 0)
        throw InputError("resize_half needs even dimensions, got " + std::to_string(img.width) + "x" +
                         std::to_string(img.height));
    ThermalImage out(img.width / 2, img.height / 2);
    for (std::size_t i = 0; i < out.height; ++i) {
        for (std::size_t j = 0; j < out.width; ++j) {
            const std::uint32_t s = std::uint32_t{img.at(2 * i, 2 * j)} + img.at(2 * i, 2 * j + 1) +
                                    img.at(2 * i + 1, 2 * j) + img.at(2 * i + 1, 2 * j + 1);
            out.pixels[i * out.width + j] = static_cast<std::uint16_t>((s + 2) / 4);
        }
    }
    return out;
}

inline constexpr double kDefaultNormEpsilon = 1e-8;

/// (p - lo) / (hi - lo + eps) with the given bounds.
inline Tensor normalize_with_range(const ThermalImage& img, double lo, double hi, double epsilon = kDefaultNormEpsilon) {
    Tensor out(Shape{1, img.height, img.width});
    const double denom = hi - lo + epsilon;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) out[i] = (static_cast<double>(img.pixels[i]) - lo) / denom;
    return out;
}

/// Per-image min-max normalisation to [0, 1).
inline Tensor normalize_minmax(const ThermalImage& img, double epsilon = kDefaultNormEpsilon) {
    if (img.pixels.empty()) throw InputError("normalize_minmax on an empty image");
    const auto [mn, mx] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    return normalize_with_range(img, *mn, *mx, epsilon);
}

} // namespace selfonn
