#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spectraflake/cube.hpp"

namespace spectraflake {

// n x n pixel counts, rows = target class, columns = predicted class.
struct ConfusionMatrix {
    std::size_t n = 0;
    std::vector<std::uint64_t> counts;

    explicit ConfusionMatrix(std::size_t classes = 0) : n(classes), counts(classes * classes, 0) {}

    std::uint64_t operator()(std::size_t target, std::size_t pred) const { return counts[target * n + pred]; }
    std::uint64_t& operator()(std::size_t target, std::size_t pred) { return counts[target * n + pred]; }

    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
        if (other.n != n) throw ValidationError("cannot add confusion matrices of different size");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
        return *this;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const LabelMask& pred, const LabelMask& target, std::size_t n) {
    if (pred.height != target.height || pred.width != target.width)
        throw ValidationError("confusion: prediction is " + std::to_string(pred.height) + "x" +
                              std::to_string(pred.width) + ", target is " + std::to_string(target.height) + "x" +
                              std::to_string(target.width));
    pred.check_range(n);
    target.check_range(n);
    ConfusionMatrix m(n);
    for (std::size_t i = 0; i < pred.labels.size(); ++i) ++m(target.labels[i], pred.labels[i]);
    return m;
}

// Percentages; nullopt marks an undefined 0/0 rate.
struct ClassMetrics {
    std::optional<double> iou;
    std::optional<double> precision;
    std::optional<double> recall;
};

namespace detail {
inline std::optional<double> percent(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}
} // namespace detail

inline std::vector<ClassMetrics> per_class(const ConfusionMatrix& m) {
    std::vector<ClassMetrics> out(m.n);
    for (std::size_t k = 0; k < m.n; ++k) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t j = 0; j < m.n; ++j) {
            row += m(k, j);
            col += m(j, k);
        }
        const std::uint64_t tp = m(k, k);
        const std::uint64_t fp = col - tp;
        const std::uint64_t fn = row - tp;
        out[k] = {detail::percent(tp, tp + fp + fn), detail::percent(tp, tp + fp), detail::percent(tp, tp + fn)};
    }
    return out;
}

struct MacroMetrics {
    double iou = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    // Classes contributing to each mean.
    std::size_t iou_classes = 0;
    std::size_t precision_classes = 0;
    std::size_t recall_classes = 0;
};

// Unweighted mean over classes, background included. Undefined rates are
// left out of their mean.
inline MacroMetrics macro(std::span<const ClassMetrics> classes) {
    MacroMetrics r;
    double si = 0, sp = 0, sr = 0;
    for (const auto& c : classes) {
        if (c.iou) { si += *c.iou; ++r.iou_classes; }
        if (c.precision) { sp += *c.precision; ++r.precision_classes; }
        if (c.recall) { sr += *c.recall; ++r.recall_classes; }
    }
    if (r.iou_classes == 0 && r.precision_classes == 0 && r.recall_classes == 0)
        throw ValidationError("macro: every class is undefined");
    r.iou = r.iou_classes ? si / static_cast<double>(r.iou_classes) : 0.0;
    r.precision = r.precision_classes ? sp / static_cast<double>(r.precision_classes) : 0.0;
    r.recall = r.recall_classes ? sr / static_cast<double>(r.recall_classes) : 0.0;
    return r;
}

// Rounds to one decimal place, half away from zero.
inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

struct EvalReport {
    ConfusionMatrix confusion;
    std::vector<ClassMetrics> per_class;
    MacroMetrics macro;
    std::vector<std::string> class_names;
};

inline EvalReport evaluate(const LabelMask& pred, const LabelMask& target, const ClassCatalog& catalog) {
    EvalReport r;
    r.confusion = confusion(pred, target, catalog.size());
    r.per_class = spectraflake::per_class(r.confusion);
    r.macro = spectraflake::macro(r.per_class);
    r.class_names = catalog.names();
    return r;
}

inline EvalReport evaluate(const ConfusionMatrix& m, const ClassCatalog& catalog) {
    if (m.n != catalog.size()) throw ValidationError("evaluate: confusion size does not match the catalog");
    EvalReport r;
    r.confusion = m;
    r.per_class = spectraflake::per_class(m);
    r.macro = spectraflake::macro(r.per_class);
    r.class_names = catalog.names();
    return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
    using nlohmann::json;
    auto opt = [](const std::optional<double>& v) -> json { return v ? json(round1(*v)) : json(nullptr); };
    json classes = json::array();
    for (std::size_t k = 0; k < r.per_class.size(); ++k) {
        const auto& c = r.per_class[k];
        classes.push_back({{"class", k < r.class_names.size() ? r.class_names[k] : std::to_string(k)},
                           {"iou", opt(c.iou)},
                           {"precision", opt(c.precision)},
                           {"recall", opt(c.recall)},
                           {"defined", c.iou.has_value()}});
    }
    json matrix = json::array();
    for (std::size_t i = 0; i < r.confusion.n; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < r.confusion.n; ++j) row.push_back(r.confusion(i, j));
        matrix.push_back(row);
    }
    return {{"confusion", matrix},
            {"per_class", classes},
            {"macro",
             {{"iou", round1(r.macro.iou)},
              {"precision", round1(r.macro.precision)},
              {"recall", round1(r.macro.recall)},
              {"iou_classes", r.macro.iou_classes},
              {"precision_classes", r.macro.precision_classes},
              {"recall_classes", r.macro.recall_classes}}}};
}

inline std::string format_table(const EvalReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1);
    auto cell = [&](const std::optional<double>& v) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(1);
        if (v) c << *v; else c << "n/a";
        return c.str();
    };
    os << std::left << std::setw(8) << "Class" << std::right << std::setw(8) << "IoU" << std::setw(11) << "Precision"
       << std::setw(8) << "Recall" << "\n";
    for (std::size_t k = 0; k < r.per_class.size(); ++k) {
        const auto& c = r.per_class[k];
        os << std::left << std::setw(8) << (k < r.class_names.size() ? r.class_names[k] : std::to_string(k))
           << std::right << std::setw(8) << cell(c.iou) << std::setw(11) << cell(c.precision) << std::setw(8)
           << cell(c.recall) << "\n";
    }
    os << std::left << std::setw(8) << "macro" << std::right << std::setw(8) << r.macro.iou << std::setw(11)
       << r.macro.precision << std::setw(8) << r.macro.recall << "\n";
    return os.str();
}

// "iou,precision,recall" for sweep scripts.
inline std::string format_csv_row(const EvalReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << r.macro.iou << "," << r.macro.precision << "," << r.macro.recall;
    return os.str();
}

} // namespace spectraflake
