#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cvit/context.hpp"
#include "cvit/grid.hpp"
#include "cvit/norm.hpp"
#include "cvit/tensor.hpp"

// Model input/target assembly: lagged history stacks, chronological splits,
// and standardization.

namespace cvit {

enum class LagSchedule { weekly_plus_recent, recent_only };

// Hours subtracted from the target hour for each history channel, oldest
// first. The default mixes same-hour weekly lags (4, 3, 2 and 1 weeks back)
// with the three preceding hours; the alternative is a plain sliding window.
inline std::array<std::int64_t, kHistoryLen> history_lags(LagSchedule schedule) {
    switch (schedule) {
        case LagSchedule::weekly_plus_recent: return {672, 504, 336, 168, 3, 2, 1};
        case LagSchedule::recent_only: return {7, 6, 5, 4, 3, 2, 1};
    }
    throw std::invalid_argument("history_lags: invalid schedule");
}

inline LagSchedule lag_schedule_from_string(const std::string& s) {
    if (s == "weekly_plus_recent") return LagSchedule::weekly_plus_recent;
    if (s == "recent_only") return LagSchedule::recent_only;
    throw std::invalid_argument("invalid lag schedule '" + s + "'");
}

inline const char* to_string(LagSchedule s) {
    return s == LagSchedule::weekly_plus_recent ? "weekly_plus_recent" : "recent_only";
}

// One training/evaluation unit. history and target hold raw (unstandardized)
// risk; context holds the encoded rows for the same lag hours with raw
// scalar slots. Standardization happens when tensors are fed to the model.
struct Sample {
    Tensor history;            // kHistoryLen x rows x cols
    Tensor context;            // kHistoryLen x kContextDim
    Tensor target;             // rows x cols
    std::int64_t target_hour;  // hours since the start of the frame series
    int hour_of_day;           // of the target hour
};

// Builds one sample per hour that has the full lag window available. Context
// rows are indexed by hour offset and must cover the whole series.
inline std::vector<Sample> build_samples(const FrameSeries& series,
                                         const std::vector<ContextRow>& context_rows,
                                         LagSchedule schedule = LagSchedule::weekly_plus_recent) {
    const auto lags = history_lags(schedule);
    const std::int64_t max_lag = *std::max_element(lags.begin(), lags.end());
    const auto n_hours = static_cast<std::int64_t>(series.frames.size());
    if (n_hours <= max_lag)
        throw std::invalid_argument("build_samples: need more than " + std::to_string(max_lag) +
                                    " hours of frames, got " + std::to_string(n_hours));
    if (context_rows.size() != series.frames.size())
        throw std::invalid_argument("build_samples: " + std::to_string(context_rows.size()) +
                                    " context rows for " + std::to_string(series.frames.size()) +
                                    " frames");
    const std::size_t cells = series.rows * series.cols;
    const NormStats raw;  // identity stats: keep scalar context slots raw
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(n_hours - max_lag));
    for (std::int64_t t = max_lag; t < n_hours; ++t) {
        Sample s;
        s.target_hour = t;
        s.hour_of_day = hour_of_day(series.start_epoch_hour + t);
        s.history = Tensor::zeros({kHistoryLen, series.rows, series.cols});
        s.context = Tensor::zeros({kHistoryLen, kContextDim});
        for (std::size_t c = 0; c < kHistoryLen; ++c) {
            const auto lag_hour = static_cast<std::size_t>(t - lags[c]);
            const auto& frame = series.frames[lag_hour].values.data();
            std::copy(frame.begin(), frame.end(), s.history.data().begin() + c * cells);
            const auto encoded = encode_context(context_rows[lag_hour], raw);
            std::copy(encoded.begin(), encoded.end(),
                      s.context.data().begin() + c * kContextDim);
        }
        s.target = Tensor::from({series.rows, series.cols},
                                series.frames[static_cast<std::size_t>(t)].values.data());
        samples.push_back(std::move(s));
    }
    return samples;
}

// History-only variant for forecasting: the target frame need not exist yet,
// so target_hour may equal the series length.
inline Sample build_history_only(const FrameSeries& series,
                                 const std::vector<ContextRow>& context_rows,
                                 std::int64_t target_hour,
                                 LagSchedule schedule = LagSchedule::weekly_plus_recent) {
    const auto lags = history_lags(schedule);
    const std::int64_t max_lag = *std::max_element(lags.begin(), lags.end());
    if (target_hour < max_lag)
        throw std::invalid_argument("insufficient history: target hour " +
                                    std::to_string(target_hour) + " needs the " +
                                    std::to_string(max_lag) + " preceding hours");
    if (target_hour > static_cast<std::int64_t>(series.frames.size()))
        throw std::invalid_argument("insufficient history: target hour " +
                                    std::to_string(target_hour) + " exceeds the " +
                                    std::to_string(series.frames.size()) + " available hours");
    const std::size_t cells = series.rows * series.cols;
    const NormStats raw;
    Sample s;
    s.target_hour = target_hour;
    s.hour_of_day = hour_of_day(series.start_epoch_hour + target_hour);
    s.history = Tensor::zeros({kHistoryLen, series.rows, series.cols});
    s.context = Tensor::zeros({kHistoryLen, kContextDim});
    for (std::size_t c = 0; c < kHistoryLen; ++c) {
        const auto lag_hour = static_cast<std::size_t>(target_hour - lags[c]);
        if (lag_hour >= context_rows.size())
            throw std::invalid_argument("insufficient context history for hour " +
                                        std::to_string(target_hour));
        const auto& frame = series.frames[lag_hour].values.data();
        std::copy(frame.begin(), frame.end(), s.history.data().begin() + c * cells);
        const auto encoded = encode_context(context_rows[lag_hour], raw);
        std::copy(encoded.begin(), encoded.end(), s.context.data().begin() + c * kContextDim);
    }
    s.target = Tensor::zeros({series.rows, series.cols});
    return s;
}

// ---------------------------------------------------------------------------
// Chronological split
// ---------------------------------------------------------------------------

struct SplitSpec {
    double train = 0.6, val = 0.2, test = 0.2;

    void validate() const {
        if (train <= 0.0 || val <= 0.0 || test <= 0.0)
            throw std::invalid_argument("SplitSpec: fractions must be positive");
        if (std::fabs(train + val + test - 1.0) > 1e-9)
            throw std::invalid_argument("SplitSpec: fractions must sum to 1");
    }
};

struct SplitResult {
    std::vector<Sample> train, val, test;
};

// First floor(train*n) target hours go to train, the next floor(val*n) to
// val, the remainder to test. Splits never share a target hour.
inline SplitResult chronological_split(std::vector<Sample> samples, const SplitSpec& spec) {
    spec.validate();
    if (samples.size() < 3)
        throw std::invalid_argument("chronological_split: need at least 3 samples, got " +
                                    std::to_string(samples.size()));
    std::stable_sort(samples.begin(), samples.end(),
                     [](const Sample& a, const Sample& b) { return a.target_hour < b.target_hour; });
    const auto n = static_cast<double>(samples.size());
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train * n));
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val * n));
    SplitResult result;
    result.train.assign(samples.begin(), samples.begin() + n_train);
    result.val.assign(samples.begin() + n_train, samples.begin() + n_train + n_val);
    result.test.assign(samples.begin() + n_train + n_val, samples.end());
    return result;
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

// Fits on the training split only: risk over every history and target cell,
// the scalar context quantities over their raw slots.
inline NormStats fit_norm(const std::vector<Sample>& train) {
    if (train.empty()) throw std::invalid_argument("fit_norm: empty training split");
    std::vector<double> risk, temp, inflow, outflow;
    for (const auto& s : train) {
        risk.insert(risk.end(), s.history.data().begin(), s.history.data().end());
        risk.insert(risk.end(), s.target.data().begin(), s.target.data().end());
        for (std::size_t c = 0; c < kHistoryLen; ++c) {
            const auto* row = s.context.data().data() + c * kContextDim;
            temp.push_back(row[kTempSlot]);
            inflow.push_back(row[kInflowSlot]);
            outflow.push_back(row[kOutflowSlot]);
        }
    }
    NormStats stats;
    stats.risk = ScalarStat::fit(risk.begin(), risk.end());
    stats.temperature = ScalarStat::fit(temp.begin(), temp.end());
    stats.inflow = ScalarStat::fit(inflow.begin(), inflow.end());
    stats.outflow = ScalarStat::fit(outflow.begin(), outflow.end());
    return stats;
}

inline Tensor standardize_history(const Sample& s, const NormStats& stats) {
    Tensor out = Tensor::from(s.history.shape(), s.history.data());
    for (double& v : out.data()) v = stats.risk.apply(v);
    return out;
}

inline Tensor standardize_target(const Sample& s, const NormStats& stats) {
    Tensor out = Tensor::from(s.target.shape(), s.target.data());
    for (double& v : out.data()) v = stats.risk.apply(v);
    return out;
}

inline Tensor standardize_context(const Sample& s, const NormStats& stats) {
    Tensor out = Tensor::from(s.context.shape(), s.context.data());
    for (std::size_t c = 0; c < kHistoryLen; ++c) {
        auto* row = out.data().data() + c * kContextDim;
        row[kTempSlot] = stats.temperature.apply(row[kTempSlot]);
        row[kInflowSlot] = stats.inflow.apply(row[kInflowSlot]);
        row[kOutflowSlot] = stats.outflow.apply(row[kOutflowSlot]);
    }
    return out;
}

inline Tensor invert_risk(const Tensor& standardized, const NormStats& stats) {
    Tensor out = Tensor::from(standardized.shape(), standardized.data());
    for (double& v : out.data()) v = stats.risk.invert(v);
    return out;
}

}  // namespace cvit
