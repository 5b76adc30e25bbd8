#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "selfonn/selfonn.hpp"
#include "test_util.hpp"

using namespace selfonn;

namespace {

ModelConfig toy_model(int q) {
    ModelConfig c;
    c.q_order = q;
    c.input_shape = {1, 16, 16};
    c.filters = {3, 3, 3};
    c.kernel_sizes = {3, 2, 2};
    c.dense_units = 6;
    c.classes = 3;
    return c;
}

// Three visually distinct classes: hot left half, hot right half, cool frame.
std::vector<LabeledSample> toy_samples(std::size_t per_class, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.15);
    std::vector<LabeledSample> out;
    for (std::size_t i = 0; i < per_class; ++i)
        for (std::size_t label = 0; label < 3; ++label) {
            Tensor t(Shape{1, 16, 16});
            for (std::size_t r = 0; r < 16; ++r)
                for (std::size_t c = 0; c < 16; ++c) {
                    double base = -0.5;
                    if (label == 0 && c < 8) base = 0.8;
                    if (label == 1 && c >= 8) base = 0.8;
                    t[r * 16 + c] = base + noise(rng);
                }
            out.push_back({std::move(t), label});
        }
    return out;
}

TrainConfig quick(std::size_t epochs) {
    TrainConfig tc;
    tc.initial_lr = 0.01;
    tc.batch_size = 8;
    tc.max_epochs = epochs;
    tc.seed = 99;
    tc.threads = 1;
    tc.min_lr = 1e-4;
    return tc;
}

} // namespace

// ---- Adam ----

TEST(Adam, FirstStepHandComputed) {
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{0.5, -4.0, 0.0};
    AdamState st(3);
    adam_step(p, g, st, 0.1);
    // m_hat = g and v_hat = g^2 after bias correction, so the step is lr*g/(|g|+eps).
    EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8));
    EXPECT_DOUBLE_EQ(p[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8));
    EXPECT_EQ(p[2], 0.5);
    EXPECT_EQ(st.step, 1u);
    EXPECT_DOUBLE_EQ(st.m[0], 0.05);
    EXPECT_DOUBLE_EQ(st.v[1], 0.001 * 16.0);
}

TEST(Adam, TwoStepsAgainstLongDoubleOracle) {
    std::vector<double> p{0.3};
    AdamState st(1);
    const double g1 = 0.2, g2 = -0.7, lr = 0.01;
    adam_step(p, std::vector<double>{g1}, st, lr);
    adam_step(p, std::vector<double>{g2}, st, lr);
    long double x = 0.3L, m = 0, v = 0;
    const long double b1 = 0.9L, b2 = 0.999L;
    int t = 0;
    for (long double g : {static_cast<long double>(g1), static_cast<long double>(g2)}) {
        ++t;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const long double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
        x -= lr * mh / (std::sqrt(vh) + 1e-8L);
    }
    EXPECT_NEAR(p[0], static_cast<double>(x), 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    std::vector<double> p{1.0, 2.0};
    AdamState st(2);
    for (int i = 0; i < 5; ++i) adam_step(p, std::vector<double>{0.0, 0.0}, st, 0.5);
    EXPECT_EQ(p[0], 1.0);
    EXPECT_EQ(p[1], 2.0);
}

TEST(Adam, MinimisesQuadratic) {
    std::vector<double> p{5.0, -3.0, 0.0};
    const std::vector<double> c{1.0, 2.0, -0.5};
    AdamState st(3);
    std::vector<double> g(3);
    for (int it = 0; it < 3000; ++it) {
        for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0 * (p[i] - c[i]);
        adam_step(p, g, st, 0.05);
    }
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], c[i], 1e-3);
}

TEST(Adam, SizeMismatchThrows) {
    std::vector<double> p{1.0};
    AdamState st(2);
    EXPECT_THROW(adam_step(p, std::vector<double>{0.0}, st, 0.1), ConsistencyError);
}

// ---- learning-rate plateau ----

TEST(Plateau, HalvesAfterPatienceNonImprovingEpochs) {
    LrSchedule s = LrSchedule::starting_at(1e-3);
    const double losses[] = {1.0, 1.0, 1.0, 1.0, 0.5, 0.6, 0.6, 0.6};
    const double expect[] = {1e-3, 1e-3, 1e-3, 5e-4, 5e-4, 5e-4, 5e-4, 2.5e-4};
    for (std::size_t i = 0; i < 8; ++i) {
        s = plateau_update(s, losses[i]);
        EXPECT_DOUBLE_EQ(s.current_lr, expect[i]) << "epoch " << i + 1;
    }
}

TEST(Plateau, EqualLossIsNotImprovement) {
    LrSchedule s = LrSchedule::starting_at(1e-3);
    s = plateau_update(s, 0.7);
    s = plateau_update(s, 0.7);
    EXPECT_EQ(s.epochs_without_improvement, 1);
    s.min_delta = 0.1;
    s = plateau_update(s, 0.65); // decrease smaller than min_delta
    EXPECT_EQ(s.epochs_without_improvement, 2);
    EXPECT_EQ(s.best_val_loss, 0.7);
}

TEST(Plateau, FloorsAtMinimumRate) {
    LrSchedule s = LrSchedule::starting_at(1e-3);
    s = plateau_update(s, 1.0);
    std::vector<double> seen;
    for (int e = 0; e < 40; ++e) {
        s = plateau_update(s, 2.0);
        seen.push_back(s.current_lr);
    }
    EXPECT_EQ(s.current_lr, 5e-5);
    for (double lr : seen) EXPECT_GE(lr, 5e-5);
    // 1e-3 -> 5e-4 -> 2.5e-4 -> 1.25e-4 -> 6.25e-5 -> 5e-5
    EXPECT_DOUBLE_EQ(seen[2], 5e-4);
    EXPECT_DOUBLE_EQ(seen[11], 6.25e-5);
    EXPECT_DOUBLE_EQ(seen[14], 5e-5);
}

// ---- early stopping ----

TEST(EarlyStop, StopsAfterPatienceAndKeepsBestWeights) {
    EarlyStopper st;
    const double losses[] = {1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 0.1};
    std::size_t stopped_at = 0;
    for (std::size_t e = 0; e < 8; ++e) {
        const std::vector<double> w{static_cast<double>(e + 1)};
        st = early_stop_update(st, losses[e], w);
        if (st.stopped) {
            stopped_at = e + 1;
            break;
        }
    }
    EXPECT_EQ(stopped_at, 7u);
    EXPECT_EQ(st.best_epoch, 2u);
    EXPECT_EQ(st.restored_weights(), std::vector<double>{2.0});
}

TEST(EarlyStop, NoSnapshotBeforeFirstEpoch) {
    EarlyStopper st;
    EXPECT_FALSE(st.has_snapshot());
    EXPECT_THROW(st.restored_weights(), ConsistencyError);
}

TEST(EarlyStop, NeverStopsWhileImproving) {
    EarlyStopper st;
    for (int e = 0; e < 50; ++e) {
        st = early_stop_update(st, 10.0 - 0.1 * e, std::vector<double>{static_cast<double>(e)});
        ASSERT_FALSE(st.stopped);
    }
    EXPECT_EQ(st.best_epoch, 50u);
}

// ---- batching ----

TEST(Batching, EpochOrderIsAPermutation) {
    TrainConfig tc;
    tc.seed = 5;
    const auto a = epoch_order(37, tc, 1), b = epoch_order(37, tc, 2), a2 = epoch_order(37, tc, 1);
    EXPECT_EQ(a, a2);
    EXPECT_NE(a, b);
    EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 37u);
    EXPECT_EQ(*std::max_element(a.begin(), a.end()), 36u);
    tc.shuffle = false;
    EXPECT_EQ(epoch_order(5, tc, 3), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Batching, EveryTrainingSampleSeenOncePerEpoch) {
    // With a negligible rate the epoch's mean training loss is the mean of the
    // per-sample losses, which only holds if each sample is visited once.
    const auto samples = toy_samples(4, 1);
    const std::vector<LabeledSample> train(samples.begin(), samples.begin() + 10);
    const std::vector<LabeledSample> val{samples[11]};
    const Model m = build_model(toy_model(1), 3);
    TrainConfig tc = quick(1);
    tc.batch_size = 3; // 3 + 3 + 3 + 1
    tc.initial_lr = 1e-12;
    tc.min_lr = 1e-12;
    double mean = 0.0;
    for (const auto& s : train) mean += sample_gradient(m, s).loss / 10.0;
    const FitResult r = fit(m, train, val, tc);
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_NEAR(r.records[0].train_loss, mean, 1e-9);
}

// ---- fit ----

TEST(Fit, LearnsSeparableToyProblem) {
    const auto train = toy_samples(20, 11), val = toy_samples(6, 12);
    const FitResult r = fit(build_model(toy_model(2), 4), train, val, quick(40));
    ASSERT_FALSE(r.records.empty());
    const Evaluation ev = evaluate(r.model, val, all_indices(val.size()), 1);
    EXPECT_EQ(ev.accuracy, 1.0);
    EXPECT_GE(r.best_epoch, 1u);
    EXPECT_LE(r.best_epoch, r.records.size());
    // The restored model is the best-epoch snapshot.
    EXPECT_DOUBLE_EQ(ev.mean_loss, r.records[r.best_epoch - 1].val_loss);
}

TEST(Fit, ZeroEpochsReturnsInitialModel) {
    const auto train = toy_samples(2, 1), val = toy_samples(1, 2);
    const Model m = build_model(toy_model(1), 4);
    const FitResult r = fit(m, train, val, quick(0));
    EXPECT_TRUE(r.records.empty());
    EXPECT_EQ(r.best_epoch, 0u);
    EXPECT_FALSE(r.early_stopped);
    EXPECT_EQ(r.model.flatten(), m.flatten());
}

TEST(Fit, DeterministicAcrossRunsAndThreadCounts) {
    const auto train = toy_samples(6, 21), val = toy_samples(2, 22);
    TrainConfig tc = quick(4);
    const FitResult a = fit(build_model(toy_model(3), 8), train, val, tc);
    const FitResult b = fit(build_model(toy_model(3), 8), train, val, tc);
    tc.threads = 3;
    const FitResult c = fit(build_model(toy_model(3), 8), train, val, tc);
    EXPECT_EQ(a.records, b.records);
    EXPECT_EQ(a.records, c.records);
    EXPECT_EQ(a.model.flatten(), b.model.flatten());
    EXPECT_EQ(a.model.flatten(), c.model.flatten());
    tc.seed = 100;
    const FitResult d = fit(build_model(toy_model(3), 8), train, val, tc);
    EXPECT_NE(a.model.flatten(), d.model.flatten());
}

TEST(Fit, ObserverSeesEveryEpoch) {
    const auto train = toy_samples(3, 1), val = toy_samples(1, 2);
    std::vector<EpochRecord> seen;
    const FitResult r = fit(build_model(toy_model(1), 4), train, val, quick(3),
                            [&](const EpochRecord& rec) { seen.push_back(rec); });
    EXPECT_EQ(seen, r.records);
    for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i].epoch, i + 1);
    EXPECT_EQ(seen[0].lr, 0.01);
}

TEST(Fit, EarlyStopsOnFlatValidation) {
    // Huge min_delta: no epoch after the first counts as an improvement.
    const auto train = toy_samples(3, 1), val = toy_samples(1, 2);
    TrainConfig tc = quick(50);
    tc.min_delta = 1e6;
    const FitResult r = fit(build_model(toy_model(1), 4), train, val, tc);
    EXPECT_TRUE(r.early_stopped);
    EXPECT_EQ(r.records.size(), 6u);
    EXPECT_EQ(r.best_epoch, 1u);
    EXPECT_EQ(r.records[3].lr, 0.01);
    EXPECT_EQ(r.records[4].lr, 0.005); // plateau halved after epoch 4
    EXPECT_EQ(r.records[5].lr, 0.005);
}

TEST(Fit, DivergenceIsReported) {
    // A non-finite pixel makes the loss of the batch holding it NaN.
    auto train = toy_samples(4, 1);
    const auto val = toy_samples(1, 2);
    TrainConfig tc = quick(5);
    tc.batch_size = 4;
    tc.shuffle = false;
    train[5].input[17] = std::numeric_limits<double>::quiet_NaN();
    try {
        fit(build_model(toy_model(2), 4), train, val, tc);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.epoch(), 1u);
        EXPECT_EQ(e.batch(), 2u);
    }
}

TEST(Fit, RunawayRateDiverges) {
    const auto train = toy_samples(4, 1), val = toy_samples(1, 2);
    TrainConfig tc = quick(5);
    tc.initial_lr = 1e308;
    tc.batch_size = 2;
    EXPECT_THROW(fit(build_model(toy_model(2), 4), train, val, tc), DivergenceError);
}

TEST(Fit, RejectsBadInputs) {
    const auto s = toy_samples(2, 1);
    const Model m = build_model(toy_model(1), 1);
    const std::vector<std::size_t> a{0, 1, 2}, b{2, 3}, c{4}, none{}, far{99};
    EXPECT_THROW(fit(m, s, a, b, quick(1)), InputError);
    EXPECT_THROW(fit(m, s, none, c, quick(1)), InputError);
    EXPECT_THROW(fit(m, s, a, none, quick(1)), InputError);
    EXPECT_THROW(fit(m, s, a, far, quick(1)), InputError);
    TrainConfig tc = quick(1);
    tc.batch_size = 0;
    EXPECT_THROW(fit(m, s, a, c, tc), ConfigError);
    tc = quick(1);
    tc.min_lr = 1.0;
    EXPECT_THROW(fit(m, s, a, c, tc), ConfigError);
}

TEST(Evaluate, ThreadCountDoesNotChangeResult) {
    const auto s = toy_samples(5, 3);
    const Model m = build_model(toy_model(2), 2);
    const auto idx = all_indices(s.size());
    const Evaluation a = evaluate(m, s, idx, 1), b = evaluate(m, s, idx, 4);
    EXPECT_EQ(a.mean_loss, b.mean_loss);
    EXPECT_EQ(a.predictions, b.predictions);
    EXPECT_EQ(a.labels.size(), 15u);
}
