#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cvit {

// Mean/std pair for one standardized quantity. The std is clamped away from
// zero so constant data maps to zeros instead of dividing by zero.
struct ScalarStat {
    double mean = 0.0;
    double std = 1.0;

    static constexpr double kMinStd = 1e-8;

    double apply(double v) const { return (v - mean) / std; }
    double invert(double v) const { return v * std + mean; }

    template <typename It>
    static ScalarStat fit(It begin, It end) {
        if (begin == end) throw std::invalid_argument("ScalarStat::fit: empty input");
        double sum = 0.0;
        std::size_t n = 0;
        for (It it = begin; it != end; ++it) {
            sum += *it;
            ++n;
        }
        const double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (It it = begin; it != end; ++it) sq += (*it - mean) * (*it - mean);
        ScalarStat stat;
        stat.mean = mean;
        stat.std = std::max(std::sqrt(sq / static_cast<double>(n)), kMinStd);
        return stat;
    }
};

// Standardization constants fitted on the training split and shared by every
// split afterwards.
struct NormStats {
    ScalarStat risk;
    ScalarStat temperature;
    ScalarStat inflow;
    ScalarStat outflow;
};

}  // namespace cvit
