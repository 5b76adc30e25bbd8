#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "selfonn/dataset.hpp"
#include "selfonn/errors.hpp"
#include "selfonn/image.hpp"
#include "selfonn/seed.hpp"

namespace selfonn {

struct ClassTemperatureStats {
    double min_c;
    double max_c;
    double mean_c;
    double std_c;
};

/// Per-class frame temperature statistics of the motor recordings (deg C).
inline constexpr std::array<ClassTemperatureStats, kNumClasses> kReferenceTemperatureStats{{
    {23.00, 82.43, 38.62, 8.86},   // healthy
    {25.52, 104.99, 40.31, 12.04}, // misalignment
    {24.86, 83.30, 41.24, 11.09},  // broken rotor
}};

/// Shape parameters of the synthetic scene. Positions are fractions of the
/// frame; radii are fractions of the shorter frame side.
struct HotspotGeometry {
    double body_center_x = 0.45;
    double body_center_y = 0.5;
    double body_width = 0.55;
    double body_height = 0.45;
    double hotspot_radius = 0.08;
    double position_jitter = 0.03;
    double noise = 0.04;      // per-pixel noise in pattern units (body level = 1)
    double load_min = 0.6;    // hotspot amplitude multiplier range, standing in
    double load_max = 1.4;    // for the 0-6 A current loads
    double mean_jitter_c = 1.0; // per-frame offset of the mean temperature
};

struct SynthConfig {
    std::array<ClassTemperatureStats, kNumClasses> stats = kReferenceTemperatureStats;
    std::size_t width = 640;
    std::size_t height = 512;
    std::array<std::size_t, kNumClasses> counts{120, 120, 120};
    std::uint64_t seed = 0;
    HotspotGeometry geometry;
    double camera_min_c = -40.0; // raw 0
    double camera_max_c = 550.0; // raw 65535

    void validate() const {
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const auto& s = stats[c];
            if (!(s.min_c < s.mean_c && s.mean_c < s.max_c) || !(s.std_c > 0.0))
                throw ConfigError("synth stats for " + std::string(kClassNames[c]) + " need min < mean < max and std > 0");
            if (s.min_c < camera_min_c || s.max_c > camera_max_c)
                throw ConfigError("synth stats for " + std::string(kClassNames[c]) + " exceed the camera span");
        }
        if (width < 8 || height < 8) throw ConfigError("synth frames must be at least 8x8");
        if (!(camera_max_c > camera_min_c)) throw ConfigError("camera span must be non-empty");
    }
};

inline double raw_to_celsius(std::uint16_t raw, const SynthConfig& cfg) {
    return cfg.camera_min_c + (cfg.camera_max_c - cfg.camera_min_c) * static_cast<double>(raw) / 65535.0;
}

/// Nearest code whose temperature stays inside [lo, hi].
inline std::uint16_t celsius_to_raw(double t, double lo, double hi, const SynthConfig& cfg) {
    const double scale = 65535.0 / (cfg.camera_max_c - cfg.camera_min_c);
    long raw = std::lround((t - cfg.camera_min_c) * scale);
    raw = std::clamp(raw, 0L, 65535L);
    while (raw < 65535 && raw_to_celsius(static_cast<std::uint16_t>(raw), cfg) < lo) ++raw;
    while (raw > 0 && raw_to_celsius(static_cast<std::uint16_t>(raw), cfg) > hi) --raw;
    return static_cast<std::uint16_t>(raw);
}

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double gauss2(double dx, double dy, double sx, double sy) {
    return std::exp(-0.5 * (dx * dx / (sx * sx) + dy * dy / (sy * sy)));
}

} // namespace detail

/// One synthetic frame. Deterministic in (seed, label, index), so any subset
/// of the corpus can be regenerated independently.
///
/// The scene is a warm motor body on a cooler background with class-specific
/// hotspots: healthy has one mild central spot, misalignment a pair of spots
/// at the coupling end, broken rotor a long hot band along the rotor axis.
/// The pattern is then rescaled so the frame's mean and spread follow the
/// class statistics, and clamped to the class extremes.
inline ThermalImage synth_image(const SynthConfig& cfg, std::size_t label, std::size_t index) {
    if (label >= kNumClasses) throw InputError("synth label out of range");
    const HotspotGeometry& g = cfg.geometry;
    std::mt19937_64 rng(derive_seed(cfg.seed, SeedStream::synthesis, label * 1'000'000'007ULL + index));
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const double w = static_cast<double>(cfg.width), h = static_cast<double>(cfg.height);
    const double s = std::min(w, h);
    const double cx = (g.body_center_x + g.position_jitter * unit(rng)) * w;
    const double cy = (g.body_center_y + g.position_jitter * unit(rng)) * h;
    const double bw = g.body_width * w * (1.0 + 0.05 * unit(rng));
    const double bh = g.body_height * h * (1.0 + 0.05 * unit(rng));
    const double edge = 0.01 * s;
    const double load = g.load_min + (g.load_max - g.load_min) * 0.5 * (1.0 + unit(rng));
    const double r = g.hotspot_radius * s * (1.0 + 0.1 * unit(rng));
    const double floor_gradient = 0.15 + 0.05 * unit(rng);
    const double spot_dx = g.position_jitter * unit(rng) * w;
    const double spot_dy = g.position_jitter * unit(rng) * h;
    const double mean_shift = g.mean_jitter_c * gauss(rng);

    std::vector<double> f(cfg.width * cfg.height);
    for (std::size_t row = 0; row < cfg.height; ++row) {
        const double y = static_cast<double>(row) + 0.5;
        for (std::size_t col = 0; col < cfg.width; ++col) {
            const double x = static_cast<double>(col) + 0.5;
            double v = floor_gradient * y / h;
            v += detail::logistic((0.5 * bw - std::abs(x - cx)) / edge) * detail::logistic((0.5 * bh - std::abs(y - cy)) / edge);
            switch (label) {
            case 0:
                v += 1.2 * load * detail::gauss2(x - cx - spot_dx, y - cy - spot_dy, r, r);
                break;
            case 1: {
                const double sx = cx + 0.35 * bw + spot_dx;
                v += 2.0 * load * detail::gauss2(x - sx, y - (cy - 0.25 * bh) - spot_dy, 0.7 * r, 0.7 * r);
                v += 2.0 * load * detail::gauss2(x - sx, y - (cy + 0.25 * bh) - spot_dy, 0.7 * r, 0.7 * r);
                break;
            }
            default:
                v += 2.5 * load * detail::gauss2(x - cx - spot_dx, y - cy - spot_dy, 2.5 * r, 0.4 * r);
                break;
            }
            f[row * cfg.width + col] = v + g.noise * gauss(rng);
        }
    }

    double mean = 0.0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    double var = 0.0;
    for (double v : f) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(f.size()));

    const auto& st = cfg.stats[label];
    ThermalImage img(cfg.width, cfg.height);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double t = std::clamp(st.mean_c + mean_shift + st.std_c * (f[i] - mean) / sd, st.min_c, st.max_c);
        img.pixels[i] = celsius_to_raw(t, st.min_c, st.max_c, cfg);
    }
    return img;
}

struct SynthClassSummary {
    std::size_t images = 0;
    double mean_c = 0.0; // pooled over all pixels of the class
    double std_c = 0.0;
    double min_c = 0.0;
    double max_c = 0.0;
};

struct SynthResult {
    DatasetManifest manifest;
    std::array<SynthClassSummary, kNumClasses> summary{};
};

inline std::string synth_relative_path(std::size_t label, std::size_t index) {
    std::ostringstream os;
    os << kClassNames[label] << '/' << std::setw(5) << std::setfill('0') << index << ".pgm";
    return os.str();
}

/// Writes <out>/<class>/<index:05>.pgm, <out>/manifest.txt and
/// <out>/synth_report.txt. Classes are laid out one after another.
inline SynthResult synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    for (auto name : kClassNames) std::filesystem::create_directories(out_dir / name, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    SynthResult res;
    res.manifest.base_dir = out_dir;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        double sum = 0.0, sum_sq = 0.0, mn = 1e300, mx = -1e300;
        std::size_t n = 0;
        for (std::size_t i = 0; i < cfg.counts[c]; ++i) {
            const ThermalImage img = synth_image(cfg, c, i);
            const std::string rel = synth_relative_path(c, i);
            write_pgm16(img, out_dir / rel);
            res.manifest.add(rel, c);
            for (std::uint16_t p : img.pixels) {
                const double t = raw_to_celsius(p, cfg);
                sum += t;
                sum_sq += t * t;
                mn = std::min(mn, t);
                mx = std::max(mx, t);
            }
            n += img.pixels.size();
        }
        auto& s = res.summary[c];
        s.images = cfg.counts[c];
        if (n > 0) {
            s.mean_c = sum / static_cast<double>(n);
            s.std_c = std::sqrt(std::max(0.0, sum_sq / static_cast<double>(n) - s.mean_c * s.mean_c));
            s.min_c = mn;
            s.max_c = mx;
        }
    }
    save_manifest(res.manifest, out_dir / "manifest.txt");

    std::ofstream rep(out_dir / "synth_report.txt", std::ios::trunc);
    if (!rep) throw IoError("cannot write synth report in " + out_dir.string());
    rep << std::setprecision(6) << std::fixed;
    rep << "seed = " << cfg.seed << "\nwidth = " << cfg.width << "\nheight = " << cfg.height << '\n';
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& s = res.summary[c];
        const std::string k(kClassNames[c]);
        rep << k << ".images = " << s.images << '\n'
            << k << ".mean_c = " << s.mean_c << '\n'
            << k << ".std_c = " << s.std_c << '\n'
            << k << ".min_c = " << s.min_c << '\n'
            << k << ".max_c = " << s.max_c << '\n'
            << k << ".target_mean_c = " << cfg.stats[c].mean_c << '\n'
            << k << ".target_std_c = " << cfg.stats[c].std_c << '\n';
    }
    if (!rep) throw IoError("write failed for synth report");
    return res;
}

} // namespace selfonn
