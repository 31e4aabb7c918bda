#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

// Hour-resolution UTC timestamps. The pipeline keys everything off integer
// hours since the Unix epoch; calendar math follows Howard Hinnant's
// chrono-compatible civil-date algorithms.

namespace cvit {

namespace detail {

inline std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);              // [0, 399]
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;    // [0, 365]
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;             // [0, 146096]
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
    std::int64_t year;
    unsigned month, day;
};

inline CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {y + (m <= 2), m, d};
}

inline bool parse_uint(std::string_view s, std::size_t pos, std::size_t len, unsigned& out) {
    if (pos + len > s.size()) return false;
    unsigned v = 0;
    for (std::size_t i = 0; i < len; ++i) {
        const char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + static_cast<unsigned>(c - '0');
    }
    out = v;
    return true;
}

}  // namespace detail

// Parses "YYYY-MM-DD[T| ]HH[:MM[:SS]][Z]" to whole hours since the Unix
// epoch (UTC). Minutes and seconds, when present, are truncated.
inline std::int64_t parse_iso_hour(std::string_view s) {
    const auto fail = [&]() -> std::int64_t {
        throw std::invalid_argument("invalid timestamp '" + std::string(s) + "'");
    };
    unsigned year, month, day, hour;
    if (!detail::parse_uint(s, 0, 4, year)) return fail();
    if (s.size() < 13 || s[4] != '-' || s[7] != '-') return fail();
    if (!detail::parse_uint(s, 5, 2, month) || !detail::parse_uint(s, 8, 2, day)) return fail();
    if (s[10] != 'T' && s[10] != ' ') return fail();
    if (!detail::parse_uint(s, 11, 2, hour)) return fail();
    std::size_t pos = 13;
    for (int part = 0; part < 2; ++part) {
        if (pos == s.size()) break;
        if (s[pos] == ':') {
            unsigned ignored;
            if (!detail::parse_uint(s, pos + 1, 2, ignored)) return fail();
            pos += 3;
        } else {
            break;
        }
    }
    if (pos < s.size() && s[pos] == 'Z') ++pos;
    if (pos != s.size()) return fail();
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23) return fail();
    return detail::days_from_civil(year, month, day) * 24 + hour;
}

inline std::string format_iso_hour(std::int64_t epoch_hour) {
    std::int64_t day = epoch_hour / 24;
    int hour = static_cast<int>(epoch_hour % 24);
    if (hour < 0) {
        hour += 24;
        --day;
    }
    const auto civil = detail::civil_from_days(day);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02d:00:00",
                  static_cast<long long>(civil.year), civil.month, civil.day, hour);
    return buf;
}

inline int hour_of_day(std::int64_t epoch_hour) {
    return static_cast<int>(((epoch_hour % 24) + 24) % 24);
}

// 0 = Monday ... 6 = Sunday (the epoch, 1970-01-01, was a Thursday).
inline int day_of_week(std::int64_t epoch_hour) {
    std::int64_t day = epoch_hour / 24;
    if (epoch_hour % 24 < 0) --day;
    return static_cast<int>(((day + 3) % 7 + 7) % 7);
}

}  // namespace cvit
