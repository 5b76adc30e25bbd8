#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "selfonn/selfonn.hpp"

namespace selfonn::cli {
namespace {

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("selfonn", sink);
    logger->set_pattern("[%l] %v");
    const char* env = std::getenv("SELFONN_LOG");
    logger->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return logger;
}

struct Flags {
    std::optional<std::string> config;
    std::vector<std::string> sets;
    // Each flag maps onto one config key; present flags win over the file.
    std::vector<std::pair<std::string, std::optional<std::string>>> keyed;
};

void add_keyed(CLI::App& app, Flags& f, const std::string& flag, const std::string& key, const std::string& help) {
    f.keyed.emplace_back(key, std::nullopt);
    // Index rather than pointer: the vector grows while flags are registered.
    const std::size_t slot = f.keyed.size() - 1;
    app.add_option_function<std::string>(flag, [&f, slot](const std::string& v) { f.keyed[slot].second = v; },
                                         help + " [" + key + "]");
}

RunConfig resolve(const Flags& f) {
    std::vector<ConfigSetting> overrides;
    for (const auto& s : f.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        overrides.emplace_back(detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
    }
    for (const auto& [key, value] : f.keyed)
        if (value) overrides.emplace_back(key, *value);
    std::optional<std::filesystem::path> file;
    if (f.config) file = *f.config;
    return resolve_run_config(file, overrides);
}

void print_report(std::ostream& out, const MetricReport& r) {
    out << std::fixed << std::setprecision(4);
    out << "accuracy " << r.accuracy << "  weighted P/R/F1 " << r.weighted.precision << " / " << r.weighted.recall
        << " / " << r.weighted.f1 << "  macro F1 " << r.macro.f1 << '\n';
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        out << "  " << std::left << std::setw(14) << (c < kNumClasses ? std::string(kClassTitles[c]) : std::to_string(c))
            << std::right << " P " << m.precision << "  R " << m.recall << "  F1 " << m.f1 << "  n " << m.support
            << '\n';
    }
    out << std::defaultfloat;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out, spdlog::logger& log) {
    const SynthResult res = run_synth(cfg, [&](const std::string& s) { log.info(s); });
    out << "wrote " << res.manifest.records.size() << " frames and manifest.txt to " << cfg.out_dir.string() << '\n';
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& s = res.summary[c];
        out << std::left << std::setw(14) << kClassTitles[c] << std::right << std::fixed << std::setprecision(2)
            << " n " << s.images << "  mean " << s.mean_c << " C  std " << s.std_c << " C  range [" << s.min_c
            << ", " << s.max_c << "] C\n"
            << std::defaultfloat;
    }
    return kOk;
}

int cmd_split(const RunConfig& cfg, std::ostream& out) {
    const SplitOutcome res = run_split(cfg);
    out << res.table << "plan written to " << res.plan_path.string() << '\n';
    return kOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, spdlog::logger& log) {
    const TrainOutcome res = run_train(cfg, [&](const std::string& s) { log.info(s); });
    const auto& f = res.fold;
    out << "test fold " << f.test_fold + 1 << ": " << f.fit.records.size() << " epochs, best epoch "
        << f.fit.best_epoch << (f.fit.early_stopped ? " (early stop)" : "") << '\n';
    out << format_confusion(f.confusion, kClassNames);
    print_report(out, f.report);
    out << "weights: " << res.artifacts.weights.string() << '\n';
    return kOk;
}

int cmd_crossval(const RunConfig& cfg, std::ostream& out, spdlog::logger& log) {
    const auto results = run_crossval(cfg, [&](const std::string& s) { log.info(s); });
    out << format_table_header() << '\n';
    for (const auto& r : results) out << r.table_row << '\n';
    out << "reports under " << cfg.out_dir.string() << '\n';
    return kOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    const EvalOutcome res = run_eval(cfg);
    out << format_confusion(res.confusion, kClassNames);
    print_report(out, res.report);
    return kOk;
}

int cmd_params(const RunConfig& cfg, std::ostream& out) {
    out << format_param_rows(run_params(cfg));
    return kOk;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out, spdlog::logger& log) {
    for (const auto& r : run_bench(cfg, [&](const std::string& s) { log.info(s); })) {
        out << std::fixed << std::setprecision(3) << "Q=" << r.q_order << "  runs " << r.runs << "  mean "
            << r.mean_ms << " ms  std " << r.std_ms << "  min " << r.min_ms << "  max " << r.max_ms << '\n'
            << std::defaultfloat;
    }
    return kOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    auto log = make_logger(err);

    CLI::App app{"Self-organised operational network toolkit for thermal fault diagnosis", "selfonn-kit"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    Flags f;
    app.add_option("--config", f.config, "Config file ([section] key = value)");
    app.add_option("--set", f.sets, "Override any config key: section.key=value (repeatable)");
    add_keyed(app, f, "--q", "model.q_order", "Taylor order Q");
    add_keyed(app, f, "--seed", "run.seed", "Root seed");
    add_keyed(app, f, "--epochs", "train.max_epochs", "Maximum epochs");
    add_keyed(app, f, "--batch", "train.batch_size", "Mini-batch size");
    add_keyed(app, f, "--lr", "train.initial_lr", "Initial learning rate");
    add_keyed(app, f, "--folds", "run.fold", "Fold to use (1-based) or 'all'");
    add_keyed(app, f, "--out", "paths.out", "Output directory");
    add_keyed(app, f, "--manifest", "paths.manifest", "Dataset manifest");
    add_keyed(app, f, "--plan", "paths.plan", "Fold plan file");
    add_keyed(app, f, "--weights", "paths.weights", "Weight file");
    add_keyed(app, f, "--threads", "train.threads", "Worker threads (0 = all cores)");
    add_keyed(app, f, "--q-sweep", "run.q_sweep", "Comma-separated Q values");
    add_keyed(app, f, "--runs", "bench.runs", "Timed benchmark runs");
    add_keyed(app, f, "--warmup", "bench.warmup", "Untimed warm-up runs");
    add_keyed(app, f, "--count", "synth.counts", "Frames per class (one value or three)");
    add_keyed(app, f, "--width", "synth.width", "Synthetic frame width");
    add_keyed(app, f, "--height", "synth.height", "Synthetic frame height");

    const std::vector<std::pair<std::string, std::string>> commands{
        {"synth", "Generate a synthetic thermal corpus and manifest"},
        {"split", "Write the stratified ordered fold plan and its table"},
        {"train", "Train on one cross-validation split"},
        {"crossval", "Train and test every split, then aggregate"},
        {"eval", "Evaluate saved weights"},
        {"params", "Print trainable parameter counts"},
        {"bench", "Time single-image inference"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << "run 'selfonn-kit --help' for usage\n";
        return kUsage;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();

    try {
        const RunConfig cfg = resolve(f);
        log->debug("command {} with {}", cmd, describe(cfg.model));
        if (cmd == "synth") return cmd_synth(cfg, out, *log);
        if (cmd == "split") return cmd_split(cfg, out);
        if (cmd == "train") return cmd_train(cfg, out, *log);
        if (cmd == "crossval") return cmd_crossval(cfg, out, *log);
        if (cmd == "eval") return cmd_eval(cfg, out);
        if (cmd == "params") return cmd_params(cfg, out);
        if (cmd == "bench") return cmd_bench(cfg, out, *log);
        err << "error: unknown command " << cmd << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kData;
    } catch (const InputError& e) {
        err << "data error: " << e.what() << '\n';
        return kData;
    } catch (const ConfigMismatchError& e) {
        err << "config error: weight file does not match the configured model: " << e.what() << '\n';
        return kMismatch;
    } catch (const WeightFileError& e) {
        err << "weight file error: " << e.what() << '\n';
        return kMismatch;
    } catch (const DimensionError& e) {
        err << "dimension error: " << e.what() << '\n';
        return kMismatch;
    } catch (const DivergenceError& e) {
        err << "training diverged: " << e.what() << '\n';
        return kDivergence;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kInternal;
    }
}

} // namespace selfonn::cli
