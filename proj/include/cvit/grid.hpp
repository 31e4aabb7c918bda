#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvit/csv.hpp"
#include "cvit/datetime.hpp"
#include "cvit/tensor.hpp"

// Raw accident events, the city grid, and hourly risk maps.

namespace cvit {

// Number of lagged risk maps stacked into one model input.
inline constexpr std::size_t kHistoryLen = 7;

enum class Severity { minor, injured, fatal };

inline double risk_score(Severity s) {
    switch (s) {
        case Severity::minor: return 1.0;
        case Severity::injured: return 2.0;
        case Severity::fatal: return 3.0;
    }
    throw std::invalid_argument("risk_score: invalid severity");
}

inline Severity severity_from_string(const std::string& s) {
    if (s == "minor") return Severity::minor;
    if (s == "injured") return Severity::injured;
    if (s == "fatal") return Severity::fatal;
    throw std::invalid_argument("invalid severity '" + s + "'");
}

inline const char* to_string(Severity s) {
    switch (s) {
        case Severity::minor: return "minor";
        case Severity::injured: return "injured";
        case Severity::fatal: return "fatal";
    }
    return "?";
}

struct AccidentRecord {
    std::int64_t epoch_hour;  // UTC, hour resolution
    double latitude = 0.0;
    double longitude = 0.0;
    Severity severity = Severity::minor;
};

// Equally sized cells over a half-open bounding box: a coordinate exactly on
// an interior cell edge belongs to the higher-index cell, and the box's max
// edges are outside.
struct GridSpec {
    double min_lat = 0.0, max_lat = 1.0;
    double min_lon = 0.0, max_lon = 1.0;
    std::size_t rows = 20, cols = 20;

    void validate() const {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("GridSpec: rows and cols must be >= 1");
        if (!(min_lat < max_lat) || !(min_lon < max_lon))
            throw std::invalid_argument("GridSpec: degenerate bounding box");
        if (!std::isfinite(min_lat) || !std::isfinite(max_lat) || !std::isfinite(min_lon) ||
            !std::isfinite(max_lon))
            throw std::invalid_argument("GridSpec: bounding box must be finite");
    }

    bool contains(double lat, double lon) const {
        return lat >= min_lat && lat < max_lat && lon >= min_lon && lon < max_lon;
    }

    struct Cell {
        std::size_t row, col;
    };

    Cell cell_of(double lat, double lon) const {
        const double row_f = (lat - min_lat) / (max_lat - min_lat) * static_cast<double>(rows);
        const double col_f = (lon - min_lon) / (max_lon - min_lon) * static_cast<double>(cols);
        auto clamp = [](double f, std::size_t n) {
            const auto idx = static_cast<std::int64_t>(std::floor(f));
            if (idx < 0) return std::size_t{0};
            if (idx >= static_cast<std::int64_t>(n)) return n - 1;
            return static_cast<std::size_t>(idx);
        };
        return {clamp(row_f, rows), clamp(col_f, cols)};
    }

    // Center coordinates of a cell, used when synthesizing events.
    double cell_min_lat(std::size_t row) const {
        return min_lat + (max_lat - min_lat) * static_cast<double>(row) / static_cast<double>(rows);
    }
    double cell_min_lon(std::size_t col) const {
        return min_lon + (max_lon - min_lon) * static_cast<double>(col) / static_cast<double>(cols);
    }
    double lat_step() const { return (max_lat - min_lat) / static_cast<double>(rows); }
    double lon_step() const { return (max_lon - min_lon) / static_cast<double>(cols); }
};

// One hour's accident-risk map. hour_index counts hours since the start of
// the binned range.
struct RiskFrame {
    std::int64_t hour_index = 0;
    Tensor values;  // rows x cols, non-negative
};

struct HourRange {
    std::int64_t start_epoch_hour = 0;
    std::size_t count = 0;
};

struct FrameSeries {
    std::int64_t start_epoch_hour = 0;
    std::size_t rows = 0, cols = 0;
    std::vector<RiskFrame> frames;
};

struct BinResult {
    FrameSeries series;
    std::size_t dropped_outside_bbox = 0;
    std::size_t dropped_outside_hours = 0;
};

// Accumulates risk_score(severity) into the cell-hour containing each record.
// Records outside the bounding box or the hour range are counted and dropped.
inline BinResult bin_records(const std::vector<AccidentRecord>& records, const GridSpec& grid,
                             const HourRange& hours) {
    grid.validate();
    if (hours.count == 0) throw std::invalid_argument("bin_records: empty hour range");
    BinResult result;
    result.series.start_epoch_hour = hours.start_epoch_hour;
    result.series.rows = grid.rows;
    result.series.cols = grid.cols;
    result.series.frames.reserve(hours.count);
    for (std::size_t h = 0; h < hours.count; ++h)
        result.series.frames.push_back(
            {static_cast<std::int64_t>(h), Tensor::zeros({grid.rows, grid.cols})});
    for (const auto& rec : records) {
        const std::int64_t offset = rec.epoch_hour - hours.start_epoch_hour;
        if (offset < 0 || offset >= static_cast<std::int64_t>(hours.count)) {
            ++result.dropped_outside_hours;
            continue;
        }
        if (!grid.contains(rec.latitude, rec.longitude)) {
            ++result.dropped_outside_bbox;
            continue;
        }
        const auto cell = grid.cell_of(rec.latitude, rec.longitude);
        result.series.frames[static_cast<std::size_t>(offset)].values.at({cell.row, cell.col}) +=
            risk_score(rec.severity);
    }
    return result;
}

// Strict loader for the accident schema; any malformed row aborts with its
// line number so silently lost risk cannot skew totals.
inline std::vector<AccidentRecord> load_accidents_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    require_header(table, {"timestamp", "latitude", "longitude", "severity"}, path);
    std::vector<AccidentRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        try {
            if (row.size() != 4) throw std::invalid_argument("expected 4 fields");
            records.push_back({parse_iso_hour(row[0]), parse_double(row[1]),
                               parse_double(row[2]), severity_from_string(row[3])});
        } catch (const std::exception& e) {
            throw std::runtime_error("'" + path + "' line " +
                                     std::to_string(table.line_numbers[i]) + ": " + e.what());
        }
    }
    return records;
}

}  // namespace cvit
