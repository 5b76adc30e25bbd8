#pragma once

#include <cstdint>

namespace selfonn {

/// Independent random streams derived from one root seed. The derivation is
/// derive_seed(root, stream, counter) =
///     splitmix64(splitmix64(root ^ (stream * 0x9E3779B97F4A7C15)) + counter)
/// where counter is stream-specific (fold index, epoch, image index, ...).
enum class SeedStream : std::uint64_t {
    init = 1,
    batching = 2,
    synthesis = 3,
    bench = 4,
    fold = 5, // per-fold root for cross-validation runs
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, SeedStream stream, std::uint64_t counter = 0) noexcept {
    const auto s = static_cast<std::uint64_t>(stream);
    return splitmix64(splitmix64(root ^ (s * 0x9E3779B97F4A7C15ULL)) + counter);
}

} // namespace selfonn
