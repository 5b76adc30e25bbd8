#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "selfonn/bench.hpp"
#include "selfonn/config.hpp"
#include "selfonn/dataset.hpp"
#include "selfonn/metrics.hpp"
#include "selfonn/model.hpp"
#include "selfonn/parallel.hpp"
#include "selfonn/seed.hpp"
#include "selfonn/synth.hpp"
#include "selfonn/trainer.hpp"
#include "selfonn/weights_io.hpp"

// Command implementations shared by the command-line tool and the tests. Each
// run_* function writes its artifacts under RunConfig::out_dir and returns
// what it wrote.

namespace selfonn {

using ProgressSink = std::function<void(const std::string&)>;

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("write failed for " + path.string());
}

inline void say(const ProgressSink& sink, const std::string& msg) {
    if (sink) sink(msg);
}

inline std::string thousands(std::size_t v) {
    std::string digits = std::to_string(v), out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i && (digits.size() - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    return out;
}

} // namespace detail

inline DatasetManifest require_manifest(const RunConfig& cfg) {
    if (cfg.manifest.empty()) throw ConfigError("no manifest given (use --manifest or [paths] manifest)");
    DatasetManifest m = load_manifest(cfg.manifest);
    if (m.records.empty()) throw InputError("manifest " + cfg.manifest.string() + " lists no images");
    return m;
}

/// The plan file named in the config, or the stratified ordered split of the manifest.
inline FoldPlan resolve_fold_plan(const RunConfig& cfg, const DatasetManifest& m) {
    if (cfg.plan.empty()) return stratified_ordered_kfold(m, cfg.folds_k);
    std::ifstream in(cfg.plan);
    if (!in) throw IoError("cannot open fold plan " + cfg.plan.string());
    FoldPlan plan = read_fold_plan(in);
    if (plan.fold_of.size() != m.records.size())
        throw InputError("fold plan covers " + std::to_string(plan.fold_of.size()) + " records, manifest has " +
                         std::to_string(m.records.size()));
    return plan;
}

inline PreprocessOptions preprocess_options(const RunConfig& cfg) {
    PreprocessOptions opt;
    opt.resize_half = cfg.resize_half;
    opt.normalization = cfg.normalization;
    opt.epsilon = cfg.epsilon;
    opt.threads = cfg.train.threads;
    return opt;
}

// ---- synth ------------------------------------------------------------------

inline SynthResult run_synth(const RunConfig& cfg, const ProgressSink& progress = {}) {
    SynthConfig sc;
    sc.width = cfg.synth_width;
    sc.height = cfg.synth_height;
    sc.counts = cfg.synth_counts;
    sc.seed = cfg.seed;
    detail::say(progress, "synthesising " + std::to_string(sc.counts[0] + sc.counts[1] + sc.counts[2]) +
                              " frames into " + cfg.out_dir.string());
    return synth_generate(sc, cfg.out_dir);
}

// ---- split ------------------------------------------------------------------

struct SplitOutcome {
    FoldPlan plan;
    std::string table;
    std::filesystem::path plan_path;
};

inline SplitOutcome run_split(const RunConfig& cfg) {
    const DatasetManifest m = require_manifest(cfg);
    SplitOutcome res;
    res.plan = stratified_ordered_kfold(m, cfg.folds_k);
    res.table = format_fold_table(res.plan);
    res.plan_path = cfg.out_dir / "fold_plan.txt";
    auto out = detail::open_out(res.plan_path);
    write_fold_plan(res.plan, m, out);
    detail::finish(out, res.plan_path);
    const auto table_path = cfg.out_dir / "fold_table.txt";
    auto t = detail::open_out(table_path);
    t << res.table;
    detail::finish(t, table_path);
    return res;
}

// ---- train / crossval ------------------------------------------------------

struct FoldOutcome {
    std::size_t test_fold = 0;
    FitResult fit;
    ConfusionMatrix confusion{kNumClasses};
    MetricReport report;
    double elapsed_seconds = 0.0; // wall time of fit + test evaluation
};

/// Seeds for one fold: fold_root = derive_seed(root, fold, i); the model is
/// initialised from derive_seed(fold_root, init) and batches are shuffled
/// from derive_seed(fold_root, batching, epoch).
inline std::uint64_t fold_root_seed(std::uint64_t root, std::size_t fold) {
    return derive_seed(root, SeedStream::fold, fold);
}

inline FoldOutcome train_fold(const ModelConfig& mc, const TrainConfig& tc_in, std::uint64_t root_seed,
                              std::span<const LabeledSample> samples, const CvSplit& split,
                              const EpochObserver& observer = {}) {
    const std::uint64_t fold_seed = fold_root_seed(root_seed, split.test_fold);
    TrainConfig tc = tc_in;
    tc.seed = fold_seed;
    Model model = build_model(mc, derive_seed(fold_seed, SeedStream::init));
    const auto t0 = std::chrono::steady_clock::now();
    FitResult fr = fit(std::move(model), samples, split.train, split.val, tc, observer);
    const Evaluation ev = evaluate(fr.model, samples, split.test, tc.threads);
    ConfusionMatrix cm = confusion(ev.labels, ev.predictions, mc.classes);
    MetricReport rep = metric_report(cm);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return FoldOutcome{split.test_fold, std::move(fr), std::move(cm), std::move(rep), elapsed};
}

/// Tab-separated epoch log; it carries no timing so reruns compare byte for byte.
inline void write_epoch_log(const std::vector<EpochRecord>& records, std::ostream& os) {
    os << "epoch\ttrain_loss\ttrain_accuracy\tval_loss\tval_accuracy\tlr\n";
    const auto old = os.precision(17);
    for (const auto& r : records)
        os << r.epoch << '\t' << r.train_loss << '\t' << r.train_accuracy << '\t' << r.val_loss << '\t'
           << r.val_accuracy << '\t' << r.lr << '\n';
    os.precision(old);
}

struct FoldArtifacts {
    std::filesystem::path weights;
    std::filesystem::path epoch_log;
    std::filesystem::path test_report;
    std::filesystem::path run_report;
};

inline FoldArtifacts write_fold_artifacts(const FoldOutcome& f, const std::filesystem::path& dir) {
    FoldArtifacts a{dir / "weights.sonn", dir / "epoch_log.tsv", dir / "test_report.txt", dir / "run_report.txt"};
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    save_weights(f.fit.model, a.weights);

    auto log = detail::open_out(a.epoch_log);
    write_epoch_log(f.fit.records, log);
    detail::finish(log, a.epoch_log);

    auto rep = detail::open_out(a.test_report);
    rep << "test_fold = " << f.test_fold + 1 << '\n';
    write_confusion(f.confusion, rep);
    write_metric_report(f.report, rep);
    detail::finish(rep, a.test_report);

    auto run = detail::open_out(a.run_report);
    run << "model = " << describe(f.fit.model.config()) << '\n'
        << "parameters = " << f.fit.model.parameter_count() << '\n'
        << "epochs_run = " << f.fit.records.size() << '\n'
        << "best_epoch = " << f.fit.best_epoch << '\n'
        << "early_stopped = " << (f.fit.early_stopped ? "true" : "false") << '\n'
        << "test_accuracy = " << std::setprecision(17) << f.report.accuracy << '\n'
        << "elapsed_seconds = " << std::setprecision(6) << f.elapsed_seconds << '\n';
    detail::finish(run, a.run_report);
    return a;
}

struct TrainOutcome {
    FoldOutcome fold;
    FoldArtifacts artifacts;
};

/// Single split: test fold = run.fold (first fold when "all").
inline TrainOutcome run_train(const RunConfig& cfg, const ProgressSink& progress = {}) {
    const DatasetManifest m = require_manifest(cfg);
    const FoldPlan plan = resolve_fold_plan(cfg, m);
    const auto samples = load_dataset(m, preprocess_options(cfg));
    const CvSplit split = make_cv_splits(plan).at(cfg.fold.value_or(0));
    detail::say(progress, "training " + describe(cfg.model) + " on fold " + std::to_string(split.test_fold + 1) +
                              " (" + std::to_string(split.train.size()) + " train, " +
                              std::to_string(split.val.size()) + " val, " + std::to_string(split.test.size()) +
                              " test)");
    FoldOutcome fold = train_fold(cfg.model, cfg.train, cfg.seed, samples, split, [&](const EpochRecord& r) {
        std::ostringstream os;
        os << "epoch " << r.epoch << " train_loss " << r.train_loss << " val_loss " << r.val_loss << " val_acc "
           << r.val_accuracy << " lr " << r.lr;
        detail::say(progress, os.str());
    });
    FoldArtifacts artifacts = write_fold_artifacts(fold, cfg.out_dir);
    return TrainOutcome{std::move(fold), std::move(artifacts)};
}

struct CrossvalOutcome {
    int q_order = 1;
    std::vector<FoldOutcome> folds;
    FoldAggregate aggregate;
    std::string table_row;
};

inline std::vector<int> q_orders(const RunConfig& cfg) {
    return cfg.q_sweep.empty() ? std::vector<int>{cfg.model.q_order} : cfg.q_sweep;
}

/// Cross-validation over samples already in memory. Fold results do not
/// depend on whether folds run in parallel.
inline CrossvalOutcome crossval_samples(const ModelConfig& mc, const TrainConfig& tc, std::uint64_t seed,
                                        std::span<const LabeledSample> samples, const FoldPlan& plan,
                                        const std::vector<std::size_t>& fold_ids, bool parallel_folds = false,
                                        const ProgressSink& progress = {}) {
    const auto splits = make_cv_splits(plan);
    CrossvalOutcome out;
    out.q_order = mc.q_order;
    std::vector<std::optional<FoldOutcome>> done(fold_ids.size());
    std::mutex mu;
    auto run_one = [&](std::size_t i, const TrainConfig& fold_tc) {
        done[i].emplace(train_fold(mc, fold_tc, seed, samples, splits.at(fold_ids[i])));
        std::lock_guard lock(mu);
        std::ostringstream os;
        os << "Q=" << mc.q_order << " fold " << fold_ids[i] + 1 << " test accuracy " << done[i]->report.accuracy
           << " (" << done[i]->fit.records.size() << " epochs)";
        detail::say(progress, os.str());
    };
    if (parallel_folds) {
        TrainConfig single = tc;
        single.threads = 1;
        parallel_for(fold_ids.size(), tc.threads, [&](std::size_t i) { run_one(i, single); });
    } else {
        for (std::size_t i = 0; i < fold_ids.size(); ++i) run_one(i, tc);
    }
    std::vector<MetricReport> reports;
    for (auto& f : done) {
        reports.push_back(f->report);
        out.folds.push_back(std::move(*f));
    }
    out.aggregate = aggregate_folds(reports);
    out.table_row = format_table_row("Self-ONN (Q=" + std::to_string(mc.q_order) + ")", out.aggregate);
    return out;
}

inline std::vector<CrossvalOutcome> run_crossval(const RunConfig& cfg, const ProgressSink& progress = {}) {
    const DatasetManifest m = require_manifest(cfg);
    const FoldPlan plan = resolve_fold_plan(cfg, m);
    const auto samples = load_dataset(m, preprocess_options(cfg));
    std::vector<std::size_t> fold_ids;
    if (cfg.fold)
        fold_ids.push_back(*cfg.fold);
    else
        for (std::size_t f = 0; f < plan.k; ++f) fold_ids.push_back(f);

    std::vector<CrossvalOutcome> results;
    std::ostringstream table;
    table << format_table_header() << '\n';
    for (int q : q_orders(cfg)) {
        ModelConfig mc = cfg.model;
        mc.q_order = q;
        CrossvalOutcome cv = crossval_samples(mc, cfg.train, cfg.seed, samples, plan, fold_ids, cfg.parallel_folds,
                                              progress);
        const auto qdir = cfg.out_dir / ("q" + std::to_string(q));
        for (const auto& f : cv.folds) write_fold_artifacts(f, qdir / ("fold" + std::to_string(f.test_fold + 1)));
        const auto agg_path = qdir / "crossval_report.txt";
        auto agg = detail::open_out(agg_path);
        agg << "q_order = " << q << '\n';
        write_fold_aggregate(cv.aggregate, agg);
        detail::finish(agg, agg_path);
        table << cv.table_row << '\n';
        results.push_back(std::move(cv));
    }
    const auto table_path = cfg.out_dir / "crossval_table.txt";
    auto t = detail::open_out(table_path);
    t << table.str();
    detail::finish(t, table_path);
    return results;
}

// ---- eval -------------------------------------------------------------------

struct EvalOutcome {
    ConfusionMatrix confusion{kNumClasses};
    MetricReport report;
    std::array<std::size_t, kNumClasses> class_counts{};
};

/// Evaluates saved weights on the test fold selected by run.fold, or on the
/// whole manifest when the fold is "all".
inline EvalOutcome run_eval(const RunConfig& cfg) {
    if (cfg.weights.empty()) throw ConfigError("no weights file given (use --weights or [paths] weights)");
    const Model model = load_weights(cfg.weights, cfg.model);
    const DatasetManifest m = require_manifest(cfg);
    const auto samples = load_dataset(m, preprocess_options(cfg));
    std::vector<std::size_t> idx;
    if (cfg.fold)
        idx = resolve_fold_plan(cfg, m).members(*cfg.fold);
    else
        idx = all_indices(samples.size());
    if (idx.empty()) throw InputError("selected fold is empty");
    const Evaluation ev = evaluate(model, samples, idx, cfg.train.threads);
    EvalOutcome out;
    out.confusion = confusion(ev.labels, ev.predictions, cfg.model.classes);
    out.report = metric_report(out.confusion);
    for (std::size_t i : idx) ++out.class_counts[samples[i].label];
    const auto path = cfg.out_dir / "eval_report.txt";
    auto rep = detail::open_out(path);
    rep << "weights = " << cfg.weights.string() << '\n'
        << "fold = " << (cfg.fold ? std::to_string(*cfg.fold + 1) : std::string("all")) << '\n';
    write_confusion(out.confusion, rep);
    write_metric_report(out.report, rep);
    detail::finish(rep, path);
    return out;
}

// ---- params / bench -----------------------------------------------------------

struct ParamRow {
    int q_order;
    std::size_t count;
};

/// Parameter counts for the sweep orders, defaulting to Q = 1..5.
inline std::vector<ParamRow> run_params(const RunConfig& cfg) {
    std::vector<int> qs = cfg.q_sweep.empty() ? std::vector<int>{1, 2, 3, 4, 5} : cfg.q_sweep;
    std::vector<ParamRow> rows;
    for (int q : qs) {
        ModelConfig mc = cfg.model;
        mc.q_order = q;
        rows.push_back({q, param_count(mc)});
    }
    return rows;
}

inline std::string format_param_rows(const std::vector<ParamRow>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(4) << "Q" << "Trainable parameters\n";
    for (const auto& r : rows) os << std::left << std::setw(4) << r.q_order << detail::thousands(r.count) << '\n';
    return os.str();
}

inline std::vector<BenchReport> run_bench(const RunConfig& cfg, const ProgressSink& progress = {}) {
    std::vector<BenchReport> out;
    for (int q : q_orders(cfg)) {
        ModelConfig mc = cfg.model;
        mc.q_order = q;
        const Model model = build_model(mc, derive_seed(cfg.seed, SeedStream::init));
        detail::say(progress, "benchmarking Q=" + std::to_string(q));
        out.push_back(bench_inference(model, cfg.bench_runs, cfg.bench_warmup, cfg.seed));
    }
    return out;
}

} // namespace selfonn
