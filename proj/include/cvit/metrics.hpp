#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvit/csv.hpp"
#include "cvit/model.hpp"
#include "cvit/samples.hpp"
#include "cvit/tensor.hpp"

// Evaluation on raw-scale risk maps: RMSE over every cell, plus the two
// ranking metrics computed per sample against the set of cells with any
// actual risk.

namespace cvit {

struct EvalReport {
    double rmse = 0.0;
    double recall = 0.0;
    double map = 0.0;
    std::size_t n_samples = 0;
    std::string filter = "all";
};

namespace detail {

inline void check_metric_inputs(const std::vector<Tensor>& preds,
                                const std::vector<Tensor>& targets, const char* op) {
    if (preds.empty())
        throw std::invalid_argument(std::string(op) + ": empty input");
    if (preds.size() != targets.size())
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(preds.size()) +
                                    " predictions vs " + std::to_string(targets.size()) +
                                    " targets");
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i].shape() != targets[i].shape())
            throw std::invalid_argument(std::string(op) + ": shape mismatch at sample " +
                                        std::to_string(i));
}

// Cell indices ordered by predicted value descending; ties break toward the
// lower cell index so rankings are reproducible.
inline std::vector<std::size_t> rank_cells(const std::vector<double>& pred) {
    std::vector<std::size_t> order(pred.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pred[a] != pred[b]) return pred[a] > pred[b];
        return a < b;
    });
    return order;
}

}  // namespace detail

inline double rmse(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets) {
    detail::check_metric_inputs(preds, targets, "rmse");
    double sq_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < preds.size(); ++n) {
        const auto& p = preds[n].data();
        const auto& t = targets[n].data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double d = p[i] - t[i];
            sq_sum += d * d;
        }
        count += p.size();
    }
    return std::sqrt(sq_sum / static_cast<double>(count));
}

// Per sample: the top-|A| predicted cells are compared against the set A of
// cells with positive target risk; samples without positives are skipped.
inline double recall(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets) {
    detail::check_metric_inputs(preds, targets, "recall");
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t n = 0; n < preds.size(); ++n) {
        const auto& t = targets[n].data();
        std::size_t positives = 0;
        for (double v : t) positives += v > 0.0 ? 1 : 0;
        if (positives == 0) continue;
        const auto order = detail::rank_cells(preds[n].data());
        std::size_t hits = 0;
        for (std::size_t j = 0; j < positives; ++j) hits += t[order[j]] > 0.0 ? 1 : 0;
        acc += static_cast<double>(hits) / static_cast<double>(positives);
        ++counted;
    }
    if (counted == 0)
        throw std::domain_error("recall: no sample has a cell with positive risk");
    return acc / static_cast<double>(counted);
}

// Mean average precision of the full cell ranking: precision is accumulated
// at each rank that uncovers a true-risk cell, normalized by |A|.
inline double map_score(const std::vector<Tensor>& preds, const std::vector<Tensor>& targets) {
    detail::check_metric_inputs(preds, targets, "map_score");
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t n = 0; n < preds.size(); ++n) {
        const auto& t = targets[n].data();
        std::size_t positives = 0;
        for (double v : t) positives += v > 0.0 ? 1 : 0;
        if (positives == 0) continue;
        const auto order = detail::rank_cells(preds[n].data());
        std::size_t hits = 0;
        double ap = 0.0;
        for (std::size_t j = 0; j < order.size(); ++j) {
            if (t[order[j]] > 0.0) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(j + 1);
            }
        }
        acc += ap / static_cast<double>(positives);
        ++counted;
    }
    if (counted == 0)
        throw std::domain_error("map_score: no sample has a cell with positive risk");
    return acc / static_cast<double>(counted);
}

// Morning 7:00-9:00 and evening 16:00-19:00 peaks, endpoints included.
inline bool is_rush_hour(int hour_of_day) {
    return (hour_of_day >= 7 && hour_of_day <= 9) || (hour_of_day >= 16 && hour_of_day <= 19);
}

inline std::vector<Sample> rush_hour_filter(const std::vector<Sample>& samples) {
    std::vector<Sample> kept;
    for (const auto& s : samples)
        if (is_rush_hour(s.hour_of_day)) kept.push_back(s);
    return kept;
}

// Runs the model over a split and reports raw-scale metrics.
inline EvalReport evaluate(const CvitModel& model, const std::vector<Sample>& samples,
                           const NormStats& stats, bool rush_hours_only = false) {
    const std::vector<Sample>& subset = samples;
    std::vector<Sample> filtered;
    if (rush_hours_only) filtered = rush_hour_filter(samples);
    const auto& use = rush_hours_only ? filtered : subset;
    if (use.empty()) throw std::invalid_argument("evaluate: no samples to evaluate");
    std::vector<Tensor> preds, targets;
    preds.reserve(use.size());
    targets.reserve(use.size());
    for (const auto& s : use) {
        const Tensor pred_std =
            model.forward(standardize_history(s, stats), standardize_context(s, stats));
        preds.push_back(invert_risk(pred_std, stats));
        targets.push_back(s.target);
    }
    EvalReport report;
    report.rmse = rmse(preds, targets);
    report.recall = recall(preds, targets);
    report.map = map_score(preds, targets);
    report.n_samples = use.size();
    report.filter = rush_hours_only ? "rush_hours" : "all";
    return report;
}

inline std::string report_text(const EvalReport& r) {
    std::string out;
    out += "rmse: " + format_double(r.rmse) + "\n";
    out += "recall: " + format_double(r.recall) + "\n";
    out += "map: " + format_double(r.map) + "\n";
    out += "n_samples: " + std::to_string(r.n_samples) + "\n";
    out += "filter: " + r.filter + "\n";
    return out;
}

inline std::string report_csv(const EvalReport& r) {
    return "rmse,recall,map,n_samples,filter\n" + format_double(r.rmse) + "," +
           format_double(r.recall) + "," + format_double(r.map) + "," +
           std::to_string(r.n_samples) + "," + r.filter + "\n";
}

}  // namespace cvit
