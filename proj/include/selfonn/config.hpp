#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "selfonn/dataset.hpp"
#include "selfonn/errors.hpp"
#include "selfonn/model.hpp"
#include "selfonn/trainer.hpp"

namespace selfonn {

/// Everything a command needs. Built from defaults, then a config file, then
/// command-line overrides, each layer replacing the keys it mentions.
struct RunConfig {
    // [paths]
    std::filesystem::path manifest;
    std::filesystem::path out_dir = "out";
    std::filesystem::path plan;    // optional; derived from the manifest when empty
    std::filesystem::path weights; // eval input

    // [model], [train]
    ModelConfig model;
    TrainConfig train;

    // [data]
    bool resize_half = true;
    NormalizationMode normalization = NormalizationMode::per_image;
    double epsilon = kDefaultNormEpsilon;
    std::size_t folds_k = 5;

    // [run]
    std::uint64_t seed = 0;
    std::optional<std::size_t> fold; // 0-based test fold; empty = all folds
    std::vector<int> q_sweep;        // crossval/params/bench: orders to cover, empty = model.q_order only
    bool parallel_folds = false;

    // [synth]
    std::size_t synth_width = 640;
    std::size_t synth_height = 512;
    std::array<std::size_t, kNumClasses> synth_counts{120, 120, 120};

    // [bench]
    std::size_t bench_runs = 100;
    std::size_t bench_warmup = 10;

    void validate() const {
        if (model.q_order < 1 || model.q_order > 10)
            throw ConfigError("model.q_order must be in [1, 10], got " + std::to_string(model.q_order));
        for (int q : q_sweep)
            if (q < 1 || q > 10) throw ConfigError("run.q_sweep entries must be in [1, 10], got " + std::to_string(q));
        model_geometry(model); // throws ConfigError on an impossible shape chain
        train.validate();
        if (folds_k < 2) throw ConfigError("data.folds must be >= 2");
        if (fold && *fold >= folds_k) throw ConfigError("run.fold out of range");
        if (bench_runs < 1) throw ConfigError("bench.runs must be >= 1");
        if (!(epsilon > 0.0)) throw ConfigError("data.epsilon must be > 0");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const char* first = v.data();
    const char* last = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) throw ConfigError(key + ": '" + v + "' is not a valid number");
    return out;
}

inline bool parse_bool(const std::string& key, std::string v) {
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
    return out;
}

template <class T, std::size_t N>
std::array<T, N> parse_array(const std::string& key, const std::string& v) {
    const auto list = parse_list<T>(key, v);
    if (list.size() != N) throw ConfigError(key + ": expected " + std::to_string(N) + " comma-separated values");
    std::array<T, N> out{};
    std::copy(list.begin(), list.end(), out.begin());
    return out;
}

template <class T, std::size_t N>
std::string join(const std::array<T, N>& a) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(a[i]);
    return s;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct ConfigKey {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

// clang-format off
inline const std::map<std::string, ConfigKey>& config_schema() {
    using R = RunConfig;
    using S = const std::string&;
    static const std::map<std::string, ConfigKey> schema{
        {"paths.manifest", {[](R& c, S, S v) { c.manifest = v; }, [](const R& c) { return c.manifest.string(); }}},
        {"paths.out",      {[](R& c, S, S v) { c.out_dir = v; }, [](const R& c) { return c.out_dir.string(); }}},
        {"paths.plan",     {[](R& c, S, S v) { c.plan = v; }, [](const R& c) { return c.plan.string(); }}},
        {"paths.weights",  {[](R& c, S, S v) { c.weights = v; }, [](const R& c) { return c.weights.string(); }}},

        {"model.q_order",      {[](R& c, S k, S v) { c.model.q_order = parse_number<int>(k, v); },
                                [](const R& c) { return std::to_string(c.model.q_order); }}},
        {"model.input_shape",  {[](R& c, S k, S v) { c.model.input_shape = parse_array<std::size_t, 3>(k, v); },
                                [](const R& c) { return join(c.model.input_shape); }}},
        {"model.filters",      {[](R& c, S k, S v) { c.model.filters = parse_array<std::size_t, kBlocks>(k, v); },
                                [](const R& c) { return join(c.model.filters); }}},
        {"model.kernel_sizes", {[](R& c, S k, S v) { c.model.kernel_sizes = parse_array<std::size_t, kBlocks>(k, v); },
                                [](const R& c) { return join(c.model.kernel_sizes); }}},
        {"model.dense_units",  {[](R& c, S k, S v) { c.model.dense_units = parse_number<std::size_t>(k, v); },
                                [](const R& c) { return std::to_string(c.model.dense_units); }}},
        {"model.classes",      {[](R& c, S k, S v) { c.model.classes = parse_number<std::size_t>(k, v); },
                                [](const R& c) { return std::to_string(c.model.classes); }}},

        {"train.initial_lr",          {[](R& c, S k, S v) { c.train.initial_lr = parse_number<double>(k, v); },
                                       [](const R& c) { return format_double(c.train.initial_lr); }}},
        {"train.batch_size",          {[](R& c, S k, S v) { c.train.batch_size = parse_number<std::size_t>(k, v); },
                                       [](const R& c) { return std::to_string(c.train.batch_size); }}},
        {"train.max_epochs",          {[](R& c, S k, S v) { c.train.max_epochs = parse_number<std::size_t>(k, v); },
                                       [](const R& c) { return std::to_string(c.train.max_epochs); }}},
        {"train.shuffle",             {[](R& c, S k, S v) { c.train.shuffle = parse_bool(k, v); },
                                       [](const R& c) { return std::string(c.train.shuffle ? "true" : "false"); }}},
        {"train.min_delta",           {[](R& c, S k, S v) { c.train.min_delta = parse_number<double>(k, v); },
                                       [](const R& c) { return format_double(c.train.min_delta); }}},
        {"train.plateau_factor",      {[](R& c, S k, S v) { c.train.plateau_factor = parse_number<double>(k, v); },
                                       [](const R& c) { return format_double(c.train.plateau_factor); }}},
        {"train.plateau_patience",    {[](R& c, S k, S v) { c.train.plateau_patience = parse_number<int>(k, v); },
                                       [](const R& c) { return std::to_string(c.train.plateau_patience); }}},
        {"train.min_lr",              {[](R& c, S k, S v) { c.train.min_lr = parse_number<double>(k, v); },
                                       [](const R& c) { return format_double(c.train.min_lr); }}},
        {"train.early_stop_patience", {[](R& c, S k, S v) { c.train.early_stop_patience = parse_number<int>(k, v); },
                                       [](const R& c) { return std::to_string(c.train.early_stop_patience); }}},
        {"train.threads",             {[](R& c, S k, S v) { c.train.threads = parse_number<unsigned>(k, v); },
                                       [](const R& c) { return std::to_string(c.train.threads); }}},

        {"data.resize_half",   {[](R& c, S k, S v) { c.resize_half = parse_bool(k, v); },
                                [](const R& c) { return std::string(c.resize_half ? "true" : "false"); }}},
        {"data.normalization", {[](R& c, S k, S v) {
                                    if (v == "per_image") c.normalization = NormalizationMode::per_image;
                                    else if (v == "dataset") c.normalization = NormalizationMode::dataset;
                                    else throw ConfigError(k + ": expected per_image or dataset, got '" + v + "'");
                                },
                                [](const R& c) { return std::string(c.normalization == NormalizationMode::per_image ? "per_image" : "dataset"); }}},
        {"data.epsilon",       {[](R& c, S k, S v) { c.epsilon = parse_number<double>(k, v); },
                                [](const R& c) { return format_double(c.epsilon); }}},
        {"data.folds",         {[](R& c, S k, S v) { c.folds_k = parse_number<std::size_t>(k, v); },
                                [](const R& c) { return std::to_string(c.folds_k); }}},

        {"run.seed",           {[](R& c, S k, S v) { c.seed = parse_number<std::uint64_t>(k, v); c.train.seed = c.seed; },
                                [](const R& c) { return std::to_string(c.seed); }}},
        {"run.fold",           {[](R& c, S k, S v) {
                                    if (v == "all") c.fold.reset();
                                    else {
                                        const auto f = parse_number<std::size_t>(k, v);
                                        if (f < 1) throw ConfigError(k + ": folds are numbered from 1");
                                        c.fold = f - 1;
                                    }
                                },
                                [](const R& c) { return c.fold ? std::to_string(*c.fold + 1) : std::string("all"); }}},
        {"run.q_sweep",        {[](R& c, S k, S v) { c.q_sweep = v.empty() ? std::vector<int>{} : parse_list<int>(k, v); },
                                [](const R& c) {
                                    std::string s;
                                    for (std::size_t i = 0; i < c.q_sweep.size(); ++i) s += (i ? "," : "") + std::to_string(c.q_sweep[i]);
                                    return s;
                                }}},
        {"run.parallel_folds", {[](R& c, S k, S v) { c.parallel_folds = parse_bool(k, v); },
                                [](const R& c) { return std::string(c.parallel_folds ? "true" : "false"); }}},

        {"synth.width",  {[](R& c, S k, S v) { c.synth_width = parse_number<std::size_t>(k, v); },
                          [](const R& c) { return std::to_string(c.synth_width); }}},
        {"synth.height", {[](R& c, S k, S v) { c.synth_height = parse_number<std::size_t>(k, v); },
                          [](const R& c) { return std::to_string(c.synth_height); }}},
        {"synth.counts", {[](R& c, S k, S v) {
                              const auto list = parse_list<std::size_t>(k, v);
                              if (list.size() == 1) c.synth_counts.fill(list[0]);
                              else if (list.size() == kNumClasses) std::copy(list.begin(), list.end(), c.synth_counts.begin());
                              else throw ConfigError(k + ": expected 1 or 3 comma-separated counts");
                          },
                          [](const R& c) { return join(c.synth_counts); }}},

        {"bench.runs",   {[](R& c, S k, S v) { c.bench_runs = parse_number<std::size_t>(k, v); },
                          [](const R& c) { return std::to_string(c.bench_runs); }}},
        {"bench.warmup", {[](R& c, S k, S v) { c.bench_warmup = parse_number<std::size_t>(k, v); },
                          [](const R& c) { return std::to_string(c.bench_warmup); }}},
    };
    return schema;
}
// clang-format on

} // namespace detail

using ConfigSetting = std::pair<std::string, std::string>; // "section.key", value

/// Parses `[section]` headers and `key = value` lines. '#' and ';' start
/// comments; keys outside any section must be written as "section.key".
inline std::vector<ConfigSetting> parse_config_text(std::istream& in, const std::string& source = "config") {
    std::vector<ConfigSetting> out;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find_first_of("#;");
        const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no) + ": ";
        if (body.front() == '[') {
            if (body.back() != ']') throw ConfigError(where + "unterminated section header");
            section = detail::trim(std::string_view(body).substr(1, body.size() - 2));
            if (section.empty()) throw ConfigError(where + "empty section name");
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
        std::string key = detail::trim(std::string_view(body).substr(0, eq));
        std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw ConfigError(where + "missing key");
        if (!section.empty()) key = section + "." + key;
        if (!detail::config_schema().contains(key)) throw ConfigError(where + "unknown key '" + key + "'");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

inline std::vector<ConfigSetting> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    return parse_config_text(in, path.string());
}

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& schema = detail::config_schema();
    const auto it = schema.find(key);
    if (it == schema.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second.set(cfg, key, value);
}

inline void apply_settings(RunConfig& cfg, const std::vector<ConfigSetting>& settings) {
    for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
}

/// Defaults, then the file (if any), then overrides, then validation.
inline RunConfig resolve_run_config(const std::optional<std::filesystem::path>& file,
                                    const std::vector<ConfigSetting>& overrides) {
    RunConfig cfg;
    if (file) apply_settings(cfg, read_config_file(*file));
    apply_settings(cfg, overrides);
    cfg.validate();
    return cfg;
}

/// The effective configuration in the same format the parser reads.
inline void write_run_config(const RunConfig& cfg, std::ostream& os) {
    std::string section;
    for (const auto& [key, entry] : detail::config_schema()) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
            section = sec;
        }
        os << key.substr(dot + 1) << " = " << entry.get(cfg) << '\n';
    }
}

inline std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, _] : detail::config_schema()) keys.push_back(k);
    return keys;
}

} // namespace selfonn
