#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "selfonn/errors.hpp"
#include "selfonn/metrics.hpp"
#include "selfonn/model.hpp"
#include "selfonn/seed.hpp"

namespace selfonn {

struct BenchReport {
    std::string model_id;
    int q_order = 1;
    std::size_t runs = 0;
    std::size_t warmup = 0;
    std::vector<double> durations_ms;
    double mean_ms = 0.0;
    double std_ms = 0.0;
    double min_ms = 0.0;
    double max_ms = 0.0;
};

/// Times `runs` single-image inference passes on one thread with the steady
/// clock, after `warmup` untimed passes. The input is a fixed uniform [0, 1)
/// frame drawn from `seed`.
inline BenchReport bench_inference(const Model& model, std::size_t runs = 100, std::size_t warmup = 10,
                                   std::uint64_t seed = 0) {
    if (runs < 1) throw InputError("bench_inference needs runs >= 1");
    const auto& cfg = model.config();
    Tensor input(Shape{cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]});
    std::mt19937_64 rng(derive_seed(seed, SeedStream::bench));
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (double& v : input.data()) v = dist(rng);

    volatile double sink = 0.0;
    for (std::size_t i = 0; i < warmup; ++i) sink = sink + model_forward(model, input, false).logits[0];

    BenchReport r;
    r.model_id = "selfonn[" + describe(cfg) + "]";
    r.q_order = cfg.q_order;
    r.runs = runs;
    r.warmup = warmup;
    r.durations_ms.reserve(runs);
    for (std::size_t i = 0; i < runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        sink = sink + model_forward(model, input, false).logits[0];
        const auto t1 = std::chrono::steady_clock::now();
        r.durations_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    const MeanStd s = mean_std(r.durations_ms);
    r.mean_ms = s.mean;
    r.std_ms = s.std;
    r.min_ms = s.min;
    r.max_ms = s.max;
    return r;
}

inline void write_bench_report(const BenchReport& r, std::ostream& os) {
    const auto old = os.precision(9);
    os << "model = " << r.model_id << '\n'
       << "q_order = " << r.q_order << '\n'
       << "runs = " << r.runs << '\n'
       << "warmup = " << r.warmup << '\n'
       << "mean_ms = " << r.mean_ms << '\n'
       << "std_ms = " << r.std_ms << '\n'
       << "min_ms = " << r.min_ms << '\n'
       << "max_ms = " << r.max_ms << '\n';
    os.precision(old);
}

} // namespace selfonn
