#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "selfonn/errors.hpp"
#include "selfonn/model.hpp"

namespace selfonn {

// Weight file layout (all integers little-endian):
//   0   4  magic "SONN"
//   4   2  u16 format version (1)
//   6  48  u32 x 12: q_order, input c/h/w, filters x3, kernel sizes x3, dense units, classes
//  54   8  u64 parameter count
//  62  8n  f64 parameters in flat order
inline constexpr std::array<char, 4> kWeightMagic{'S', 'O', 'N', 'N'};
inline constexpr std::uint16_t kWeightFormatVersion = 1;
inline constexpr std::size_t kWeightHeaderSize = 62;

namespace detail {

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename U>
U get_le(const std::uint8_t* p) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(p[i]) << (8 * i);
    return v;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), {}};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace detail

inline std::vector<std::uint8_t> encode_weights(const Model& model) {
    const ModelConfig& c = model.config();
    std::vector<std::uint8_t> out;
    out.reserve(kWeightHeaderSize + 8 * model.parameter_count());
    out.insert(out.end(), kWeightMagic.begin(), kWeightMagic.end());
    detail::put_le<std::uint16_t>(out, kWeightFormatVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.q_order));
    for (auto v : c.input_shape) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    for (auto v : c.filters) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    for (auto v : c.kernel_sizes) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(v));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.dense_units));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.classes));
    detail::put_le<std::uint64_t>(out, model.parameter_count());
    for (double v : model.parameters()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

/// Header-only parse; returns the stored config.
inline ModelConfig decode_weights_config(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kWeightHeaderSize) throw TruncatedFileError("weight file shorter than its 62-byte header");
    if (std::memcmp(bytes.data(), kWeightMagic.data(), 4) != 0) throw CorruptHeaderError("bad magic, not a SONN weight file");
    const auto version = detail::get_le<std::uint16_t>(bytes.data() + 4);
    if (version != kWeightFormatVersion)
        throw CorruptHeaderError("unsupported weight format version " + std::to_string(version));
    const std::uint8_t* p = bytes.data() + 6;
    auto next = [&p] {
        const auto v = detail::get_le<std::uint32_t>(p);
        p += 4;
        return v;
    };
    ModelConfig c;
    c.q_order = static_cast<int>(next());
    for (auto& v : c.input_shape) v = next();
    for (auto& v : c.filters) v = next();
    for (auto& v : c.kernel_sizes) v = next();
    c.dense_units = next();
    c.classes = next();
    std::size_t expected = 0;
    try {
        expected = param_count(c);
    } catch (const ConfigError& e) {
        throw CorruptHeaderError(std::string("stored config is invalid: ") + e.what());
    }
    if (detail::get_le<std::uint64_t>(p) != expected)
        throw CorruptHeaderError("stored parameter count does not match stored config");
    return c;
}

inline Model decode_weights(std::span<const std::uint8_t> bytes, const ModelConfig& expected) {
    const ModelConfig stored = decode_weights_config(bytes);
    if (!(stored == expected))
        throw ConfigMismatchError("weight file holds " + describe(stored) + ", expected " + describe(expected));
    const std::size_t n = param_count(stored);
    const std::size_t need = kWeightHeaderSize + 8 * n;
    if (bytes.size() < need)
        throw TruncatedFileError("weight file has " + std::to_string(bytes.size()) + " bytes, needs " + std::to_string(need));
    if (bytes.size() > need) throw CorruptHeaderError("trailing bytes after parameter block");
    std::vector<double> params(n);
    for (std::size_t i = 0; i < n; ++i)
        params[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(bytes.data() + kWeightHeaderSize + 8 * i));
    return Model(stored, std::move(params));
}

inline void save_weights(const Model& model, const std::filesystem::path& path) {
    detail::write_file_bytes(path, encode_weights(model));
}

inline ModelConfig read_weights_config(const std::filesystem::path& path) {
    return decode_weights_config(detail::read_file_bytes(path));
}

inline Model load_weights(const std::filesystem::path& path, const ModelConfig& expected) {
    return decode_weights(detail::read_file_bytes(path), expected);
}

} // namespace selfonn
