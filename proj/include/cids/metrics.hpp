#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "cids/errors.hpp"

namespace cids {

struct ClassMetrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    size_t support = 0;
};

// Per-class precision/recall/F1 with 0/0 defined as 0, plus macro
// (unweighted) and weighted (support-weighted) averages and the raw
// confusion matrix (rows = true class, columns = predicted).
struct MetricsReport {
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
    std::vector<std::vector<size_t>> confusion;
    size_t total = 0;

    nlohmann::json to_json() const {
        nlohmann::json classes = nlohmann::json::array();
        for (const auto& c : per_class)
            classes.push_back({{"name", c.name},
                               {"precision", c.precision},
                               {"recall", c.recall},
                               {"f1", c.f1},
                               {"support", c.support}});
        return nlohmann::json{{"classes", classes},
                              {"macro_precision", macro_precision},
                              {"macro_recall", macro_recall},
                              {"macro_f1", macro_f1},
                              {"weighted_precision", weighted_precision},
                              {"weighted_recall", weighted_recall},
                              {"weighted_f1", weighted_f1},
                              {"confusion", confusion},
                              {"total", total}};
    }

    static MetricsReport from_json(const nlohmann::json& j) {
        MetricsReport r;
        for (const auto& c : j.at("classes"))
            r.per_class.push_back(ClassMetrics{c.at("name").get<std::string>(),
                                               c.at("precision").get<double>(),
                                               c.at("recall").get<double>(), c.at("f1").get<double>(),
                                               c.at("support").get<size_t>()});
        r.macro_precision = j.at("macro_precision").get<double>();
        r.macro_recall = j.at("macro_recall").get<double>();
        r.macro_f1 = j.at("macro_f1").get<double>();
        r.weighted_precision = j.at("weighted_precision").get<double>();
        r.weighted_recall = j.at("weighted_recall").get<double>();
        r.weighted_f1 = j.at("weighted_f1").get<double>();
        r.confusion = j.at("confusion").get<std::vector<std::vector<size_t>>>();
        r.total = j.at("total").get<size_t>();
        return r;
    }

    // Aligned plain-text table: one row per class, then macro avg and
    // weighted avg rows.
    std::string to_text() const {
        size_t name_width = 12;
        for (const auto& c : per_class) name_width = std::max(name_width, c.name.size());
        char buf[256];
        std::string out;
        std::snprintf(buf, sizeof(buf), "%-*s  %9s  %9s  %9s  %9s\n", static_cast<int>(name_width),
                      "", "precision", "recall", "f1-score", "support");
        out += buf;
        for (const auto& c : per_class) {
            std::snprintf(buf, sizeof(buf), "%-*s  %9.4f  %9.4f  %9.4f  %9zu\n",
                          static_cast<int>(name_width), c.name.c_str(), c.precision, c.recall, c.f1,
                          c.support);
            out += buf;
        }
        std::snprintf(buf, sizeof(buf), "%-*s  %9.4f  %9.4f  %9.4f  %9zu\n",
                      static_cast<int>(name_width), "macro avg", macro_precision, macro_recall,
                      macro_f1, total);
        out += buf;
        std::snprintf(buf, sizeof(buf), "%-*s  %9.4f  %9.4f  %9.4f  %9zu\n",
                      static_cast<int>(name_width), "weighted avg", weighted_precision,
                      weighted_recall, weighted_f1, total);
        out += buf;
        return out;
    }

    std::string to_csv() const {
        std::string out = "class,precision,recall,f1,support\n";
        char buf[256];
        auto row = [&](const std::string& name, double p, double r, double f, size_t support) {
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%zu\n", name.c_str(), p, r, f, support);
            out += buf;
        };
        for (const auto& c : per_class) row(c.name, c.precision, c.recall, c.f1, c.support);
        row("macro avg", macro_precision, macro_recall, macro_f1, total);
        row("weighted avg", weighted_precision, weighted_recall, weighted_f1, total);
        return out;
    }
};

inline MetricsReport metrics_from_confusion(const std::vector<std::vector<size_t>>& confusion,
                                            const std::vector<std::string>& names) {
    const size_t k = names.size();
    if (confusion.size() != k) throw ShapeError("confusion matrix size does not match class count");
    MetricsReport r;
    r.confusion = confusion;
    for (size_t i = 0; i < k; ++i) {
        if (confusion[i].size() != k)
            throw ShapeError("confusion matrix row " + std::to_string(i) + " has wrong width");
        ClassMetrics c;
        c.name = names[i];
        size_t tp = confusion[i][i], fp = 0, fn = 0;
        for (size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            fn += confusion[i][j];
            fp += confusion[j][i];
        }
        c.support = tp + fn;
        c.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        c.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
        c.f1 = (c.precision + c.recall) == 0.0
                   ? 0.0
                   : 2.0 * c.precision * c.recall / (c.precision + c.recall);
        r.total += c.support;
        r.per_class.push_back(std::move(c));
    }
    for (const auto& c : r.per_class) {
        r.macro_precision += c.precision / static_cast<double>(k);
        r.macro_recall += c.recall / static_cast<double>(k);
        r.macro_f1 += c.f1 / static_cast<double>(k);
        if (r.total > 0) {
            const double w = static_cast<double>(c.support) / static_cast<double>(r.total);
            r.weighted_precision += w * c.precision;
            r.weighted_recall += w * c.recall;
            r.weighted_f1 += w * c.f1;
        }
    }
    return r;
}

} // namespace cids
