#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "selfonn/errors.hpp"
#include "selfonn/image.hpp"
#include "selfonn/parallel.hpp"
#include "selfonn/trainer.hpp"

namespace selfonn {

inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<std::string_view, kNumClasses> kClassNames{"healthy", "misalignment", "broken_rotor"};
inline constexpr std::array<std::string_view, kNumClasses> kClassTitles{"Healthy", "Misalignment", "Broken Rotor"};

/// Accepts "healthy", "Misalignment", "broken_rotor", "Broken Rotor", "broken-rotor", ...
inline std::size_t parse_class_name(std::string_view name) {
    std::string key;
    for (char ch : name)
        if (std::isalnum(static_cast<unsigned char>(ch))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (key == "healthy") return 0;
    if (key == "misalignment") return 1;
    if (key == "brokenrotor") return 2;
    throw InputError("unknown class name '" + std::string(name) + "'");
}

struct SampleRecord {
    std::string path; // relative to the manifest's directory
    std::size_t label = 0;
    std::size_t ordinal = 0; // position within its class, in acquisition order
};

/// Ordered sample list; order is acquisition order and is never shuffled.
struct DatasetManifest {
    std::vector<SampleRecord> records;
    std::array<std::size_t, kNumClasses> class_counts{};
    std::filesystem::path base_dir;

    void add(std::string path, std::size_t label) {
        if (path.empty()) throw InputError("manifest record with empty path");
        if (label >= kNumClasses) throw InputError("manifest label " + std::to_string(label) + " out of range");
        records.push_back({std::move(path), label, class_counts[label]++});
    }

    std::size_t size() const noexcept { return records.size(); }
};

// Manifest text: one "relative/path.pgm<TAB>class_name" per line. Blank lines
// and lines starting with '#' are ignored.
inline DatasetManifest parse_manifest(std::istream& in, std::filesystem::path base_dir = {}) {
    DatasetManifest m;
    m.base_dir = std::move(base_dir);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw InputError("manifest line " + std::to_string(line_no) + ": missing TAB separator");
        try {
            m.add(line.substr(0, tab), parse_class_name(line.substr(tab + 1)));
        } catch (const InputError& e) {
            throw InputError("manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return m;
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path());
}

inline void write_manifest(const DatasetManifest& m, std::ostream& out) {
    for (const auto& r : m.records) out << r.path << '\t' << kClassNames[r.label] << '\n';
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_manifest(m, out);
    if (!out) throw IoError("write failed for " + path.string());
}

struct FoldPlan {
    std::size_t k = 5;
    std::vector<std::size_t> fold_of;                                // per manifest record, 0-based fold
    std::vector<std::array<std::size_t, kNumClasses>> counts;         // [fold][class]

    std::vector<std::size_t> members(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < fold_of.size(); ++i)
            if (fold_of[i] == fold) out.push_back(i);
        return out;
    }

    friend bool operator==(const FoldPlan&, const FoldPlan&) = default;
};

/// Per-class order in which folds receive the one extra sample when a class
/// does not divide evenly. Entries that are not a permutation of 0..k-1 fall
/// back to 0, 1, ..., k-1.
using RemainderPlacement = std::array<std::vector<std::size_t>, kNumClasses>;

/// Placement observed in the reference fold table: Misalignment's short fold is
/// the fourth, every other class fills folds front to back.
inline RemainderPlacement reference_placement() {
    return {std::vector<std::size_t>{0, 1, 2, 3, 4}, std::vector<std::size_t>{0, 1, 2, 4, 3},
            std::vector<std::size_t>{0, 1, 2, 3, 4}};
}

inline std::vector<std::size_t> class_fold_sizes(std::size_t n, std::size_t k, const std::vector<std::size_t>& priority) {
    std::vector<std::size_t> identity(k);
    for (std::size_t i = 0; i < k; ++i) identity[i] = i;
    const bool use_priority =
        priority.size() == k && std::is_permutation(priority.begin(), priority.end(), identity.begin());
    std::vector<std::size_t> sizes(k, n / k);
    for (std::size_t i = 0; i < n % k; ++i) ++sizes[use_priority ? priority[i] : i];
    return sizes;
}

/// Unshuffled stratified k-fold: each class, in manifest order, is cut into k
/// contiguous segments whose sizes differ by at most one.
inline FoldPlan stratified_ordered_kfold(const DatasetManifest& m, std::size_t k = 5,
                                         const RemainderPlacement& placement = reference_placement()) {
    if (k < 2) throw InputError("k must be >= 2");
    for (std::size_t c = 0; c < kNumClasses; ++c)
        if (m.class_counts[c] < k)
            throw InputError("class " + std::string(kClassNames[c]) + " has " + std::to_string(m.class_counts[c]) +
                             " samples, fewer than k=" + std::to_string(k));
    FoldPlan plan;
    plan.k = k;
    plan.counts.assign(k, {});
    std::array<std::vector<std::size_t>, kNumClasses> boundaries; // cumulative segment ends per class
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto sizes = class_fold_sizes(m.class_counts[c], k, placement[c]);
        std::size_t acc = 0;
        for (std::size_t f = 0; f < k; ++f) {
            acc += sizes[f];
            boundaries[c].push_back(acc);
            plan.counts[f][c] = sizes[f];
        }
    }
    plan.fold_of.resize(m.records.size());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        const auto& b = boundaries[r.label];
        plan.fold_of[i] = static_cast<std::size_t>(std::upper_bound(b.begin(), b.end(), r.ordinal) - b.begin());
    }
    return plan;
}

struct CvSplit {
    std::size_t test_fold = 0;
    std::size_t val_fold = 0;
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// k rotations: fold i is the test set, fold (i+1) mod k validates, the rest train.
inline std::vector<CvSplit> make_cv_splits(const FoldPlan& plan) {
    std::vector<CvSplit> splits;
    for (std::size_t i = 0; i < plan.k; ++i) {
        CvSplit s;
        s.test_fold = i;
        s.val_fold = (i + 1) % plan.k;
        for (std::size_t idx = 0; idx < plan.fold_of.size(); ++idx) {
            const std::size_t f = plan.fold_of[idx];
            if (f == s.test_fold)
                s.test.push_back(idx);
            else if (f == s.val_fold)
                s.val.push_back(idx);
            else
                s.train.push_back(idx);
        }
        splits.push_back(std::move(s));
    }
    return splits;
}

// Fold plan file: "# selfonn fold plan v1", "k = <k>", then one
// "<record index><TAB><fold, 1-based><TAB><class_name>" line per record.
inline void write_fold_plan(const FoldPlan& plan, const DatasetManifest& m, std::ostream& out) {
    out << "# selfonn fold plan v1\n";
    out << "k = " << plan.k << '\n';
    for (std::size_t i = 0; i < plan.fold_of.size(); ++i)
        out << i << '\t' << plan.fold_of[i] + 1 << '\t' << kClassNames[m.records[i].label] << '\n';
}

inline FoldPlan read_fold_plan(std::istream& in) {
    FoldPlan plan;
    std::string line;
    bool have_k = false;
    std::size_t line_no = 0;
    std::vector<std::size_t> labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        if (!have_k) {
            std::string key, eq;
            if (!(ls >> key >> eq >> plan.k) || key != "k" || eq != "=" || plan.k < 2)
                throw InputError("fold plan line " + std::to_string(line_no) + ": expected 'k = <int>'");
            have_k = true;
            plan.counts.assign(plan.k, {});
            continue;
        }
        std::size_t idx = 0, fold = 0;
        std::string cls;
        if (!(ls >> idx >> fold >> cls) || idx != plan.fold_of.size() || fold < 1 || fold > plan.k)
            throw InputError("fold plan line " + std::to_string(line_no) + ": malformed record");
        const std::size_t label = parse_class_name(cls);
        plan.fold_of.push_back(fold - 1);
        ++plan.counts[fold - 1][label];
    }
    if (!have_k) throw InputError("fold plan missing 'k = ' header");
    return plan;
}

/// Per-fold class counts laid out like the reference fold table.
inline std::string format_fold_table(const FoldPlan& plan) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "Class";
    for (std::size_t f = 0; f < plan.k; ++f) os << std::right << std::setw(7) << f + 1;
    os << std::setw(8) << "Total" << '\n';
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        os << std::left << std::setw(14) << kClassTitles[c];
        std::size_t total = 0;
        for (std::size_t f = 0; f < plan.k; ++f) {
            os << std::right << std::setw(7) << plan.counts[f][c];
            total += plan.counts[f][c];
        }
        os << std::setw(8) << total << '\n';
    }
    return os.str();
}

enum class NormalizationMode { per_image, dataset };

struct PreprocessOptions {
    bool resize_half = true;
    NormalizationMode normalization = NormalizationMode::per_image;
    double epsilon = kDefaultNormEpsilon;
    // Dataset-wide bounds; computed over the loaded images when unset.
    std::optional<double> dataset_min;
    std::optional<double> dataset_max;
    unsigned threads = 0;
};

/// Loads, resizes and normalises every manifest image into a training sample.
inline std::vector<LabeledSample> load_dataset(const DatasetManifest& m, const PreprocessOptions& opt = {}) {
    std::vector<ThermalImage> images(m.records.size());
    parallel_for(m.records.size(), opt.threads, [&](std::size_t i) {
        ThermalImage img = load_pgm16(m.base_dir / m.records[i].path);
        images[i] = opt.resize_half ? resize_half(img) : std::move(img);
    });
    double lo = 0.0, hi = 0.0;
    if (opt.normalization == NormalizationMode::dataset) {
        double mn = std::numeric_limits<double>::infinity(), mx = -mn;
        for (const auto& img : images) {
            const auto [a, b] = std::minmax_element(img.pixels.begin(), img.pixels.end());
            mn = std::min(mn, static_cast<double>(*a));
            mx = std::max(mx, static_cast<double>(*b));
        }
        lo = opt.dataset_min.value_or(mn);
        hi = opt.dataset_max.value_or(mx);
        if (!(hi >= lo)) throw ConfigError("dataset normalisation needs max >= min");
    }
    std::vector<LabeledSample> out(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        out[i].label = m.records[i].label;
        out[i].input = opt.normalization == NormalizationMode::per_image ? normalize_minmax(images[i], opt.epsilon)
                                                                       : normalize_with_range(images[i], lo, hi, opt.epsilon);
    }
    return out;
}

} // namespace selfonn
