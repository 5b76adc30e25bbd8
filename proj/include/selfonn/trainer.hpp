#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "selfonn/errors.hpp"
#include "selfonn/model.hpp"
#include "selfonn/ops.hpp"
#include "selfonn/optim.hpp"
#include "selfonn/parallel.hpp"
#include "selfonn/seed.hpp"

namespace selfonn {

struct LabeledSample {
    Tensor input;
    std::size_t label = 0;
};

struct TrainConfig {
    double initial_lr = 1e-3;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 300;
    std::uint64_t seed = 0;
    bool shuffle = true;        // per-epoch shuffle drawn from (seed, epoch)
    double min_delta = 0.0;     // strict-decrease threshold for "improvement"
    double plateau_factor = 0.5;
    int plateau_patience = 3;
    double min_lr = 5e-5;
    int early_stop_patience = 5;
    unsigned threads = 0;       // 0 = hardware concurrency

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(initial_lr > 0.0)) throw ConfigError("learning rate must be > 0");
        if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("plateau factor must be in (0, 1)");
        if (!(min_lr > 0.0) || min_lr > initial_lr) throw ConfigError("min_lr must be in (0, initial lr]");
        if (plateau_patience < 1 || early_stop_patience < 1) throw ConfigError("patience values must be >= 1");
        if (min_delta < 0.0) throw ConfigError("min_delta must be >= 0");
    }
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double lr = 0.0;       // rate used for this epoch's updates

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct FitResult {
    Model model;
    std::vector<EpochRecord> records;
    std::size_t best_epoch = 0; // 0 when no epoch ran
    bool early_stopped = false;
};

struct Evaluation {
    double mean_loss = 0.0;
    double accuracy = 0.0;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> predictions;
};

/// Cross-entropy loss and parameter gradient for one sample.
struct SampleGradient {
    double loss = 0.0;
    bool correct = false;
    std::vector<double> grad;
};

inline SampleGradient sample_gradient(const Model& model, const LabeledSample& s) {
    ForwardResult fr = model_forward(model, s.input, true);
    LossAndGrad lg = cross_entropy_with_softmax(fr.logits, s.label);
    return {lg.loss, argmax(fr.logits.data()) == s.label, model_backward(model, *fr.cache, lg.grad_logits)};
}

inline Evaluation evaluate(const Model& model, std::span<const LabeledSample> pool, std::span<const std::size_t> indices,
                           unsigned threads = 0) {
    Evaluation ev;
    const std::size_t n = indices.size();
    std::vector<double> losses(n);
    ev.labels.resize(n);
    ev.predictions.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const LabeledSample& s = pool[indices[i]];
        ForwardResult fr = model_forward(model, s.input, false);
        losses[i] = cross_entropy_with_softmax(fr.logits, s.label).loss;
        ev.labels[i] = s.label;
        ev.predictions[i] = argmax(fr.logits.data());
    });
    if (n == 0) return ev;
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total += losses[i];
        correct += ev.labels[i] == ev.predictions[i];
    }
    ev.mean_loss = total / static_cast<double>(n);
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return ev;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

/// Mini-batch order for one epoch: identity, or a shuffle seeded by (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, const TrainConfig& cfg, std::size_t epoch) {
    std::vector<std::size_t> order = all_indices(n);
    if (cfg.shuffle) {
        std::mt19937_64 rng(derive_seed(cfg.seed, SeedStream::batching, epoch));
        std::shuffle(order.begin(), order.end(), rng);
    }
    return order;
}

using EpochObserver = std::function<void(const EpochRecord&)>;

/// Adam + halve-on-plateau + early stopping with best-weight restore. Each
/// epoch: mini-batches (mean cross-entropy, one Adam step each), a validation
/// pass, then the plateau update, then the early-stop update.
inline FitResult fit(Model model, std::span<const LabeledSample> pool, std::span<const std::size_t> train_idx,
                     std::span<const std::size_t> val_idx, const TrainConfig& cfg, const EpochObserver& observer = {}) {
    cfg.validate();
    if (train_idx.empty()) throw InputError("fit: empty training set");
    if (val_idx.empty()) throw InputError("fit: empty validation set");
    {
        std::vector<std::size_t> a(train_idx.begin(), train_idx.end()), b(val_idx.begin(), val_idx.end());
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        std::vector<std::size_t> common;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
        if (!common.empty()) throw InputError("fit: training and validation sets overlap");
        if (b.back() >= pool.size() || a.back() >= pool.size()) throw InputError("fit: sample index out of range");
    }

    FitResult result{model, {}, 0, false};
    if (cfg.max_epochs == 0) return result;

    const std::size_t n_params = model.parameter_count();
    AdamState adam(n_params);
    LrSchedule sched = LrSchedule::starting_at(cfg.initial_lr);
    sched.factor = cfg.plateau_factor;
    sched.patience = cfg.plateau_patience;
    sched.min_lr = cfg.min_lr;
    sched.min_delta = cfg.min_delta;
    EarlyStopper stopper;
    stopper.patience = cfg.early_stop_patience;
    stopper.min_delta = cfg.min_delta;

    std::vector<SampleGradient> per_sample(cfg.batch_size);
    std::vector<double> batch_grad(n_params);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const double lr = sched.current_lr;
        const auto order = epoch_order(train_idx.size(), cfg, epoch);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            ++batch_no;
            const std::size_t bs = std::min(cfg.batch_size, order.size() - start);
            parallel_for(bs, cfg.threads, [&](std::size_t i) {
                per_sample[i] = sample_gradient(model, pool[train_idx[order[start + i]]]);
            });
            // Fixed summation order keeps the result independent of thread count.
            std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t i = 0; i < bs; ++i) {
                batch_loss += per_sample[i].loss;
                correct += per_sample[i].correct;
                const auto& g = per_sample[i].grad;
                for (std::size_t k = 0; k < n_params; ++k) batch_grad[k] += g[k];
            }
            const double inv = 1.0 / static_cast<double>(bs);
            for (double& g : batch_grad) g *= inv;
            if (!std::isfinite(batch_loss)) throw DivergenceError(epoch, batch_no);
            loss_sum += batch_loss;
            adam_step(model.parameters(), batch_grad, adam, lr);
        }

        const Evaluation val = evaluate(model, pool, val_idx, cfg.threads);
        if (!std::isfinite(val.mean_loss)) throw DivergenceError(epoch, 0);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train_idx.size());
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_idx.size());
        rec.val_loss = val.mean_loss;
        rec.val_accuracy = val.accuracy;
        rec.lr = lr;
        result.records.push_back(rec);
        if (observer) observer(rec);

        sched = plateau_update(sched, val.mean_loss);
        stopper = early_stop_update(std::move(stopper), val.mean_loss, model.parameters());
        if (stopper.stopped) {
            result.early_stopped = true;
            break;
        }
    }

    const auto& best = stopper.restored_weights();
    std::copy(best.begin(), best.end(), model.parameters().begin());
    result.model = std::move(model);
    result.best_epoch = stopper.best_epoch;
    return result;
}

/// Convenience overload for separate train and validation vectors.
inline FitResult fit(Model model, const std::vector<LabeledSample>& train, const std::vector<LabeledSample>& val,
                     const TrainConfig& cfg, const EpochObserver& observer = {}) {
    std::vector<LabeledSample> pool = train;
    pool.insert(pool.end(), val.begin(), val.end());
    std::vector<std::size_t> ti = all_indices(train.size());
    std::vector<std::size_t> vi(val.size());
    std::iota(vi.begin(), vi.end(), train.size());
    return fit(std::move(model), pool, ti, vi, cfg, observer);
}

} // namespace selfonn
