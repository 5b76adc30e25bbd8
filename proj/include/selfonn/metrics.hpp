#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "selfonn/errors.hpp"

namespace selfonn {

/// k x k counts; rows are ground truth, columns predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t k = 3) : k_(k), counts_(k * k, 0) {
        if (k < 1) throw InputError("confusion matrix needs k >= 1");
    }

    static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
        ConfusionMatrix cm(rows.size());
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (rows[t].size() != rows.size()) throw InputError("confusion rows must form a square matrix");
            for (std::size_t p = 0; p < rows.size(); ++p) cm.counts_[t * cm.k_ + p] = rows[t][p];
        }
        return cm;
    }

    std::size_t classes() const noexcept { return k_; }
    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * k_ + pred); }

    void add(std::size_t truth, std::size_t pred, std::uint64_t n = 1) {
        if (truth >= k_ || pred >= k_)
            throw InputError("label pair (" + std::to_string(truth) + ", " + std::to_string(pred) + ") outside [0, " +
                             std::to_string(k_) + ")");
        counts_[truth * k_ + pred] += n;
    }

    std::uint64_t row_sum(std::size_t truth) const {
        std::uint64_t s = 0;
        for (std::size_t p = 0; p < k_; ++p) s += at(truth, p);
        return s;
    }
    std::uint64_t col_sum(std::size_t pred) const {
        std::uint64_t s = 0;
        for (std::size_t t = 0; t < k_; ++t) s += at(t, pred);
        return s;
    }
    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto v : counts_) s += v;
        return s;
    }
    std::uint64_t trace() const {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < k_; ++i) s += at(i, i);
        return s;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
        if (other.k_ != k_) throw InputError("cannot add confusion matrices of different sizes");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
        return *this;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred, std::size_t k = 3) {
    if (y_true.size() != y_pred.size())
        throw InputError("confusion: " + std::to_string(y_true.size()) + " labels vs " + std::to_string(y_pred.size()) +
                         " predictions");
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < y_true.size(); ++i) cm.add(y_true[i], y_pred[i]);
    return cm;
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
    // Set when the metric's denominator was zero and 0 was substituted.
    bool precision_undefined = false;
    bool recall_undefined = false;
    bool f1_undefined = false;
};

struct AveragedMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricReport {
    double accuracy = 0.0;
    std::uint64_t total = 0;
    std::vector<ClassMetrics> per_class;
    AveragedMetrics macro;
    AveragedMetrics weighted; // support-weighted
    bool zero_division = false;
};

/// One-vs-rest precision, recall and F1 per class, plus macro and
/// support-weighted averages. F1 uses 2TP / (2TP + FP + FN), the same value as
/// the harmonic mean of precision and recall. Weighted averages are formed as
/// sum_k (n_k * num_k / den_k) / N, which keeps weighted recall identical to
/// trace / N in floating point.
inline MetricReport metric_report(const ConfusionMatrix& cm) {
    const std::size_t k = cm.classes();
    const std::uint64_t total = cm.total();
    if (total == 0) throw InputError("metric_report on an empty confusion matrix");
    MetricReport r;
    r.total = total;
    const double n = static_cast<double>(total);
    r.accuracy = static_cast<double>(cm.trace()) / n;
    r.per_class.resize(k);

    double wp = 0.0, wr = 0.0, wf = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        const std::uint64_t tp = cm.at(c, c);
        const std::uint64_t support = cm.row_sum(c);
        const std::uint64_t predicted = cm.col_sum(c);
        const std::uint64_t f1_den = support + predicted; // 2TP + FP + FN
        ClassMetrics& m = r.per_class[c];
        m.support = support;
        auto ratio = [](std::uint64_t num, std::uint64_t den, bool& undefined) {
            if (den == 0) {
                undefined = true;
                return 0.0;
            }
            return static_cast<double>(num) / static_cast<double>(den);
        };
        auto weighted = [&](std::uint64_t num, std::uint64_t den) {
            return den == 0 ? 0.0 : static_cast<double>(support * num) / static_cast<double>(den);
        };
        m.precision = ratio(tp, predicted, m.precision_undefined);
        m.recall = ratio(tp, support, m.recall_undefined);
        m.f1 = ratio(2 * tp, f1_den, m.f1_undefined);
        r.zero_division = r.zero_division || m.precision_undefined || m.recall_undefined || m.f1_undefined;

        wp += weighted(tp, predicted);
        wr += weighted(tp, support);
        wf += weighted(2 * tp, f1_den);
        r.macro.precision += m.precision;
        r.macro.recall += m.recall;
        r.macro.f1 += m.f1;
    }
    const double kd = static_cast<double>(k);
    r.macro.precision /= kd;
    r.macro.recall /= kd;
    r.macro.f1 /= kd;
    r.weighted = {wp / n, wr / n, wf / n};
    return r;
}

enum class StdConvention { population, sample };

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
    double min = 0.0;
    double max = 0.0;
};

inline MeanStd mean_std(std::span<const double> v, StdConvention conv = StdConvention::population) {
    if (v.empty()) throw InputError("mean_std of an empty list");
    MeanStd s;
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    if (s.min == s.max) {
        s.mean = s.min;
        return s;
    }
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    const std::size_t dof = conv == StdConvention::population ? v.size() : v.size() - 1;
    s.std = dof == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(dof));
    // Rounding in the mean can land a hair outside [min, max] for near-equal values.
    s.mean = std::clamp(s.mean, s.min, s.max);
    return s;
}

/// Cross-fold summary; P/R/F1 are the support-weighted figures.
struct FoldAggregate {
    std::vector<MetricReport> folds;
    StdConvention convention = StdConvention::population;
    MeanStd accuracy, precision, recall, f1;
    MeanStd macro_precision, macro_recall, macro_f1;
};

inline FoldAggregate aggregate_folds(const std::vector<MetricReport>& reports,
                                     StdConvention conv = StdConvention::population) {
    if (reports.empty()) throw InputError("aggregate_folds needs at least one fold report");
    FoldAggregate a;
    a.folds = reports;
    a.convention = conv;
    auto collect = [&](auto get) {
        std::vector<double> v;
        for (const auto& r : reports) v.push_back(get(r));
        return mean_std(v, conv);
    };
    a.accuracy = collect([](const MetricReport& r) { return r.accuracy; });
    a.precision = collect([](const MetricReport& r) { return r.weighted.precision; });
    a.recall = collect([](const MetricReport& r) { return r.weighted.recall; });
    a.f1 = collect([](const MetricReport& r) { return r.weighted.f1; });
    a.macro_precision = collect([](const MetricReport& r) { return r.macro.precision; });
    a.macro_recall = collect([](const MetricReport& r) { return r.macro.recall; });
    a.macro_f1 = collect([](const MetricReport& r) { return r.macro.f1; });
    return a;
}

// ---- report files -----------------------------------------------------------
// Plain "key = value" lines; doubles are written with 17 significant digits.

inline void write_confusion(const ConfusionMatrix& cm, std::ostream& os) {
    os << "confusion.classes = " << cm.classes() << '\n';
    for (std::size_t t = 0; t < cm.classes(); ++t) {
        os << "confusion.row" << t << " =";
        for (std::size_t p = 0; p < cm.classes(); ++p) os << ' ' << cm.at(t, p);
        os << '\n';
    }
}

inline void write_metric_report(const MetricReport& r, std::ostream& os) {
    const auto old = os.precision(17);
    os << "accuracy = " << r.accuracy << '\n'
       << "total = " << r.total << '\n'
       << "weighted.precision = " << r.weighted.precision << '\n'
       << "weighted.recall = " << r.weighted.recall << '\n'
       << "weighted.f1 = " << r.weighted.f1 << '\n'
       << "macro.precision = " << r.macro.precision << '\n'
       << "macro.recall = " << r.macro.recall << '\n'
       << "macro.f1 = " << r.macro.f1 << '\n'
       << "zero_division = " << (r.zero_division ? "true" : "false") << '\n';
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        const std::string p = "class" + std::to_string(c);
        os << p << ".support = " << m.support << '\n'
           << p << ".precision = " << m.precision << '\n'
           << p << ".recall = " << m.recall << '\n'
           << p << ".f1 = " << m.f1 << '\n';
    }
    os.precision(old);
}

inline void write_fold_aggregate(const FoldAggregate& a, std::ostream& os) {
    const auto old = os.precision(17);
    os << "folds = " << a.folds.size() << '\n'
       << "std_convention = " << (a.convention == StdConvention::population ? "population" : "sample") << '\n';
    auto put = [&](const char* name, const MeanStd& s) {
        os << name << ".mean = " << s.mean << '\n'
           << name << ".std = " << s.std << '\n'
           << name << ".min = " << s.min << '\n'
           << name << ".max = " << s.max << '\n';
    };
    put("accuracy", a.accuracy);
    put("weighted.f1", a.f1);
    put("weighted.precision", a.precision);
    put("weighted.recall", a.recall);
    put("macro.f1", a.macro_f1);
    put("macro.precision", a.macro_precision);
    put("macro.recall", a.macro_recall);
    os.precision(old);
}

inline std::string format_confusion(const ConfusionMatrix& cm, std::span<const std::string_view> names) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "truth \\ pred";
    for (std::size_t p = 0; p < cm.classes(); ++p) os << std::right << std::setw(14) << names[p];
    os << '\n';
    for (std::size_t t = 0; t < cm.classes(); ++t) {
        os << std::left << std::setw(16) << names[t];
        for (std::size_t p = 0; p < cm.classes(); ++p) os << std::right << std::setw(14) << cm.at(t, p);
        os << '\n';
    }
    return os.str();
}

/// Header and one row in the "mean +/- std" layout: Accuracy, F1, Precision, Recall.
inline std::string format_table_header() {
    std::ostringstream os;
    os << std::left << std::setw(20) << "Model" << std::setw(18) << "Accuracy" << std::setw(18) << "F1-Score"
       << std::setw(18) << "Precision" << "Recall";
    return os.str();
}

inline std::string format_table_row(const std::string& model, const FoldAggregate& a) {
    auto cell = [](const MeanStd& s) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(3) << s.mean << " +/- " << s.std;
        return c.str();
    };
    std::ostringstream os;
    os << std::left << std::setw(20) << model << std::setw(18) << cell(a.accuracy) << std::setw(18) << cell(a.f1)
       << std::setw(18) << cell(a.precision) << cell(a.recall);
    return os.str();
}

} // namespace selfonn
