#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvit/csv.hpp"
#include "cvit/datetime.hpp"
#include "cvit/grid.hpp"
#include "cvit/norm.hpp"

// Per-hour contextual features and their fixed numeric encoding.

namespace cvit {

enum class Weather { clear, cloudy, rainy, snowy, mist };
inline constexpr std::size_t kWeatherCount = 5;

inline Weather weather_from_string(const std::string& s) {
    if (s == "clear") return Weather::clear;
    if (s == "cloudy") return Weather::cloudy;
    if (s == "rainy") return Weather::rainy;
    if (s == "snowy") return Weather::snowy;
    if (s == "mist") return Weather::mist;
    throw std::invalid_argument("invalid weather condition '" + s + "'");
}

inline const char* to_string(Weather w) {
    switch (w) {
        case Weather::clear: return "clear";
        case Weather::cloudy: return "cloudy";
        case Weather::rainy: return "rainy";
        case Weather::snowy: return "snowy";
        case Weather::mist: return "mist";
    }
    return "?";
}

struct ContextRow {
    int hour_of_day = 0;   // 0..23
    int day_of_week = 0;   // 0 = Monday .. 6 = Sunday
    bool is_holiday = false;
    Weather weather = Weather::clear;
    double temperature = 0.0;  // degrees C
    double inflow = 0.0;       // trips/hour ending in the area
    double outflow = 0.0;      // trips/hour starting in the area
};

// Encoded layout, 40 values per hour:
//   [0, 24)   hour-of-day one-hot
//   [24, 31)  day-of-week one-hot
//   [31]      holiday flag
//   [32, 37)  weather one-hot
//   [37]      temperature (standardized)
//   [38]      inflow (standardized)
//   [39]      outflow (standardized)
inline constexpr std::size_t kContextDim = 40;
inline constexpr std::size_t kHourBlock = 0;
inline constexpr std::size_t kDayBlock = 24;
inline constexpr std::size_t kHolidaySlot = 31;
inline constexpr std::size_t kWeatherBlock = 32;
inline constexpr std::size_t kTempSlot = 37;
inline constexpr std::size_t kInflowSlot = 38;
inline constexpr std::size_t kOutflowSlot = 39;

// Scalar slots are standardized with the supplied stats; pass a
// default-constructed NormStats to keep them raw.
inline std::array<double, kContextDim> encode_context(const ContextRow& row,
                                                      const NormStats& stats) {
    if (row.hour_of_day < 0 || row.hour_of_day > 23)
        throw std::invalid_argument("encode_context: hour_of_day " +
                                    std::to_string(row.hour_of_day) + " out of range");
    if (row.day_of_week < 0 || row.day_of_week > 6)
        throw std::invalid_argument("encode_context: day_of_week " +
                                    std::to_string(row.day_of_week) + " out of range");
    const auto weather_idx = static_cast<std::size_t>(row.weather);
    if (weather_idx >= kWeatherCount)
        throw std::invalid_argument("encode_context: weather enum out of range");
    std::array<double, kContextDim> out{};
    out[kHourBlock + static_cast<std::size_t>(row.hour_of_day)] = 1.0;
    out[kDayBlock + static_cast<std::size_t>(row.day_of_week)] = 1.0;
    out[kHolidaySlot] = row.is_holiday ? 1.0 : 0.0;
    out[kWeatherBlock + weather_idx] = 1.0;
    out[kTempSlot] = stats.temperature.apply(row.temperature);
    out[kInflowSlot] = stats.inflow.apply(row.inflow);
    out[kOutflowSlot] = stats.outflow.apply(row.outflow);
    return out;
}

// ---------------------------------------------------------------------------
// Context CSV
// ---------------------------------------------------------------------------

struct RawContextEntry {
    std::int64_t epoch_hour;
    bool is_holiday;
    Weather weather;
    double temperature;
};

inline std::vector<RawContextEntry> load_context_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    require_header(table, {"timestamp", "is_holiday", "weather_condition", "temperature"}, path);
    std::vector<RawContextEntry> entries;
    entries.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        try {
            if (row.size() != 4) throw std::invalid_argument("expected 4 fields");
            bool holiday;
            if (row[1] == "0") holiday = false;
            else if (row[1] == "1") holiday = true;
            else throw std::invalid_argument("is_holiday must be 0 or 1, got '" + row[1] + "'");
            entries.push_back({parse_iso_hour(row[0]), holiday, weather_from_string(row[2]),
                               parse_double(row[3])});
        } catch (const std::exception& e) {
            throw std::runtime_error("'" + path + "' line " +
                                     std::to_string(table.line_numbers[i]) + ": " + e.what());
        }
    }
    return entries;
}

// ---------------------------------------------------------------------------
// Traffic flows from trip events
// ---------------------------------------------------------------------------

struct FlowSeries {
    std::vector<double> inflow;   // drop-offs inside the box, per hour
    std::vector<double> outflow;  // pick-ups inside the box, per hour
};

struct FlowResult {
    FlowSeries flows;
    std::size_t skipped_rows = 0;
};

// City-wide hourly totals. Malformed rows are skipped and counted; events
// outside the box or the hour range simply do not contribute.
inline FlowResult flows_from_trips(const std::string& path, const GridSpec& grid,
                                   const HourRange& hours) {
    const CsvTable table = read_csv(path);
    require_header(table,
                   {"pickup_ts", "pickup_lat", "pickup_lon", "dropoff_ts", "dropoff_lat",
                    "dropoff_lon"},
                   path);
    FlowResult result;
    result.flows.inflow.assign(hours.count, 0.0);
    result.flows.outflow.assign(hours.count, 0.0);
    for (const auto& row : table.rows) {
        if (row.size() != 6) {
            ++result.skipped_rows;
            continue;
        }
        try {
            const std::int64_t pickup_hour = parse_iso_hour(row[0]);
            const double pickup_lat = parse_double(row[1]);
            const double pickup_lon = parse_double(row[2]);
            const std::int64_t dropoff_hour = parse_iso_hour(row[3]);
            const double dropoff_lat = parse_double(row[4]);
            const double dropoff_lon = parse_double(row[5]);
            const std::int64_t p_off = pickup_hour - hours.start_epoch_hour;
            if (p_off >= 0 && p_off < static_cast<std::int64_t>(hours.count) &&
                grid.contains(pickup_lat, pickup_lon))
                result.flows.outflow[static_cast<std::size_t>(p_off)] += 1.0;
            const std::int64_t d_off = dropoff_hour - hours.start_epoch_hour;
            if (d_off >= 0 && d_off < static_cast<std::int64_t>(hours.count) &&
                grid.contains(dropoff_lat, dropoff_lon))
                result.flows.inflow[static_cast<std::size_t>(d_off)] += 1.0;
        } catch (const std::exception&) {
            ++result.skipped_rows;
        }
    }
    return result;
}

// Joins raw context entries with flows into one row per hour of the range.
// Every hour must be covered exactly once.
inline std::vector<ContextRow> build_context_rows(const std::vector<RawContextEntry>& entries,
                                                  const FlowSeries& flows,
                                                  const HourRange& hours) {
    if (flows.inflow.size() != hours.count || flows.outflow.size() != hours.count)
        throw std::invalid_argument("build_context_rows: flow series length mismatch");
    std::vector<ContextRow> rows(hours.count);
    std::vector<bool> seen(hours.count, false);
    for (const auto& entry : entries) {
        const std::int64_t off = entry.epoch_hour - hours.start_epoch_hour;
        if (off < 0 || off >= static_cast<std::int64_t>(hours.count)) continue;
        const auto idx = static_cast<std::size_t>(off);
        if (seen[idx])
            throw std::invalid_argument("build_context_rows: duplicate context row for hour " +
                                        format_iso_hour(entry.epoch_hour));
        seen[idx] = true;
        rows[idx] = {hour_of_day(entry.epoch_hour), day_of_week(entry.epoch_hour),
                     entry.is_holiday, entry.weather, entry.temperature,
                     flows.inflow[idx], flows.outflow[idx]};
    }
    for (std::size_t i = 0; i < hours.count; ++i) {
        if (!seen[i])
            throw std::invalid_argument(
                "build_context_rows: missing context row for hour " +
                format_iso_hour(hours.start_epoch_hour + static_cast<std::int64_t>(i)));
    }
    return rows;
}

}  // namespace cvit
