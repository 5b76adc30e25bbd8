#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "selfonn/errors.hpp"

namespace selfonn {

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One Adam update in place:
///   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
///   theta -= lr * m_hat / (sqrt(v_hat) + eps)
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw ConsistencyError("adam_step: params " + std::to_string(params.size()) + ", grads " +
                               std::to_string(grads.size()) + ", moments " + std::to_string(state.m.size()));
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

/// Halve-on-plateau learning-rate schedule.
struct LrSchedule {
    double current_lr = 1e-3;
    double initial_lr = 1e-3;
    double factor = 0.5;
    int patience = 3;
    double min_lr = 5e-5;
    double min_delta = 0.0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_without_improvement = 0;

    static LrSchedule starting_at(double lr) {
        LrSchedule s;
        s.current_lr = lr;
        s.initial_lr = lr;
        return s;
    }
};

/// Improvement is a strict decrease below best - min_delta. After `patience`
/// non-improving epochs the rate is multiplied by `factor`, floored at
/// `min_lr`, and the counter restarts.
inline LrSchedule plateau_update(LrSchedule s, double val_loss) {
    if (val_loss < s.best_val_loss - s.min_delta) {
        s.best_val_loss = val_loss;
        s.epochs_without_improvement = 0;
        return s;
    }
    if (++s.epochs_without_improvement >= s.patience) {
        if (s.current_lr > s.min_lr) s.current_lr = std::max(s.current_lr * s.factor, s.min_lr);
        s.epochs_without_improvement = 0;
    }
    return s;
}

struct EarlyStopper {
    int patience = 5;
    double min_delta = 0.0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::vector<double> best_weights;
    int epochs_without_improvement = 0;
    bool stopped = false;
    std::size_t epochs_seen = 0;

    bool has_snapshot() const noexcept { return epochs_seen > 0 && !best_weights.empty(); }

    /// Weights from the minimum-loss epoch, never the latest ones.
    const std::vector<double>& restored_weights() const {
        if (!has_snapshot()) throw ConsistencyError("early stopper has no snapshot yet");
        return best_weights;
    }
};

inline EarlyStopper early_stop_update(EarlyStopper st, double val_loss, std::span<const double> current_weights) {
    ++st.epochs_seen;
    if (val_loss < st.best_val_loss - st.min_delta) {
        st.best_val_loss = val_loss;
        st.best_epoch = st.epochs_seen;
        st.best_weights.assign(current_weights.begin(), current_weights.end());
        st.epochs_without_improvement = 0;
        return st;
    }
    if (++st.epochs_without_improvement >= st.patience) st.stopped = true;
    return st;
}

} // namespace selfonn
