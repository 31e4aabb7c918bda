#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <vector>

#include "cvit/datetime.hpp"
#include "cvit/grid.hpp"
#include "cvit/rng.hpp"
#include "cvit/samples.hpp"
#include "helpers.hpp"

using cvit::AccidentRecord;
using cvit::GridSpec;
using cvit::HourRange;
using cvit::Severity;
using test_helpers::TempDir;

namespace {

GridSpec unit_grid(std::size_t rows = 4, std::size_t cols = 4) {
    GridSpec g;
    g.min_lat = 0.0;
    g.max_lat = 1.0;
    g.min_lon = 0.0;
    g.max_lon = 1.0;
    g.rows = rows;
    g.cols = cols;
    return g;
}

}  // namespace

TEST_CASE("calendar helpers") {
    // 2018-01-01 was a Monday
    const std::int64_t h = cvit::parse_iso_hour("2018-01-01T00:00:00");
    REQUIRE(cvit::day_of_week(h) == 0);
    REQUIRE(cvit::hour_of_day(h) == 0);
    REQUIRE(cvit::hour_of_day(h + 25) == 1);
    REQUIRE(cvit::day_of_week(h + 24 * 6) == 6);
    REQUIRE(cvit::format_iso_hour(h + 5) == "2018-01-01T05:00:00");
    REQUIRE(cvit::parse_iso_hour("2018-01-01 05:30:59Z") == h + 5);
    REQUIRE(cvit::parse_iso_hour("2018-01-01T05") == h + 5);
    REQUIRE(cvit::parse_iso_hour(cvit::format_iso_hour(h + 9999)) == h + 9999);
    REQUIRE_THROWS_AS(cvit::parse_iso_hour("2018-13-01T00:00:00"), std::invalid_argument);
    REQUIRE_THROWS_AS(cvit::parse_iso_hour("not a time"), std::invalid_argument);
}

TEST_CASE("risk scores per severity") {
    REQUIRE(cvit::risk_score(Severity::minor) == 1.0);
    REQUIRE(cvit::risk_score(Severity::injured) == 2.0);
    REQUIRE(cvit::risk_score(Severity::fatal) == 3.0);
}

TEST_CASE("three fatal and two minor accidents in one cell-hour give risk 11") {
    const GridSpec grid = unit_grid();
    std::vector<AccidentRecord> records;
    for (int i = 0; i < 3; ++i) records.push_back({100, 0.6, 0.6, Severity::fatal});
    for (int i = 0; i < 2; ++i) records.push_back({100, 0.6, 0.6, Severity::minor});
    const auto result = cvit::bin_records(records, grid, {100, 1});
    const auto cell = grid.cell_of(0.6, 0.6);
    REQUIRE(result.series.frames[0].values.at({cell.row, cell.col}) == 11.0);
}

TEST_CASE("bin_records with no records yields all-zero frames") {
    const auto result = cvit::bin_records({}, unit_grid(), {0, 5});
    REQUIRE(result.series.frames.size() == 5);
    for (const auto& frame : result.series.frames)
        for (double v : frame.values.data()) REQUIRE(v == 0.0);
}

TEST_CASE("a single minor accident lands in exactly one cell") {
    const GridSpec grid = unit_grid();
    const auto result = cvit::bin_records({{0, 0.5, 0.5, Severity::minor}}, grid, {0, 2});
    double total = 0.0;
    std::size_t nonzero = 0;
    for (double v : result.series.frames[0].values.data()) {
        total += v;
        if (v != 0.0) ++nonzero;
    }
    REQUIRE(nonzero == 1);
    REQUIRE(total == 1.0);
    for (double v : result.series.frames[1].values.data()) REQUIRE(v == 0.0);
}

TEST_CASE("bin_records matches a per-record accumulation oracle") {
    const GridSpec grid = unit_grid(5, 3);
    cvit::Rng rng(99);
    std::vector<AccidentRecord> records;
    for (int i = 0; i < 50; ++i) {
        records.push_back({static_cast<std::int64_t>(rng.below(10)), rng.uniform(-0.2, 1.2),
                           rng.uniform(-0.2, 1.2),
                           static_cast<Severity>(rng.below(3))});
    }
    const auto result = cvit::bin_records(records, grid, {0, 10});

    // independent oracle: accumulate each record into a plain map
    std::map<std::tuple<std::int64_t, std::size_t, std::size_t>, double> oracle;
    std::size_t outside = 0;
    for (const auto& rec : records) {
        if (!grid.contains(rec.latitude, rec.longitude)) {
            ++outside;
            continue;
        }
        const double lat_step = 1.0 / 5.0, lon_step = 1.0 / 3.0;
        const auto row = static_cast<std::size_t>(rec.latitude / lat_step);
        const auto col = static_cast<std::size_t>(rec.longitude / lon_step);
        oracle[{rec.epoch_hour, row, col}] += cvit::risk_score(rec.severity);
    }
    REQUIRE(result.dropped_outside_bbox == outside);
    for (std::size_t h = 0; h < 10; ++h)
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 3; ++c) {
                const auto it = oracle.find({static_cast<std::int64_t>(h), r, c});
                const double expect = it == oracle.end() ? 0.0 : it->second;
                REQUIRE(result.series.frames[h].values.at({r, c}) == expect);
            }
}

TEST_CASE("total binned risk is conserved and order-independent") {
    const GridSpec grid = unit_grid();
    cvit::Rng rng(7);
    std::vector<AccidentRecord> records;
    double expected_total = 0.0;
    for (int i = 0; i < 200; ++i) {
        AccidentRecord rec{static_cast<std::int64_t>(rng.below(24)), rng.uniform(0.0, 1.0),
                           rng.uniform(0.0, 1.0), static_cast<Severity>(rng.below(3))};
        expected_total += cvit::risk_score(rec.severity);
        records.push_back(rec);
    }
    const auto result = cvit::bin_records(records, grid, {0, 24});
    double total = 0.0;
    for (const auto& frame : result.series.frames)
        for (double v : frame.values.data()) total += v;
    REQUIRE(total == expected_total);

    auto shuffled = records;
    rng.shuffle(shuffled);
    const auto result2 = cvit::bin_records(shuffled, grid, {0, 24});
    for (std::size_t h = 0; h < 24; ++h)
        REQUIRE(result.series.frames[h].values.data() == result2.series.frames[h].values.data());
}

TEST_CASE("bin_records rejects an empty hour range and counts drops") {
    REQUIRE_THROWS_AS(cvit::bin_records({}, unit_grid(), {0, 0}), std::invalid_argument);
    const auto result = cvit::bin_records({{5, 0.5, 0.5, Severity::minor},
                                           {99, 0.5, 0.5, Severity::minor},
                                           {5, 2.0, 0.5, Severity::fatal}},
                                          unit_grid(), {0, 10});
    REQUIRE(result.dropped_outside_hours == 1);
    REQUIRE(result.dropped_outside_bbox == 1);
}

TEST_CASE("cell edges belong to the higher-index cell") {
    const GridSpec grid = unit_grid();
    REQUIRE(grid.cell_of(0.25, 0.0).row == 1);
    REQUIRE(grid.cell_of(0.0, 0.5).col == 2);
    REQUIRE_FALSE(grid.contains(1.0, 0.5));  // max edge is outside
    REQUIRE_FALSE(grid.contains(0.5, 1.0));
    REQUIRE(grid.contains(0.0, 0.0));
}

TEST_CASE("accident CSV loader is strict") {
    TempDir dir("accidents");
    test_helpers::write_file(dir.file("ok.csv"),
                             "timestamp,latitude,longitude,severity\n"
                             "2018-01-01T00:00:00,0.5,0.5,minor\n"
                             "2018-01-01T01:00:00,0.25,0.75,fatal\n");
    const auto records = cvit::load_accidents_csv(dir.file("ok.csv"));
    REQUIRE(records.size() == 2);
    REQUIRE(records[1].severity == Severity::fatal);
    REQUIRE(records[1].epoch_hour == records[0].epoch_hour + 1);

    test_helpers::write_file(dir.file("bad.csv"),
                             "timestamp,latitude,longitude,severity\n"
                             "2018-01-01T00:00:00,0.5,0.5,minor\n"
                             "2018-01-01T01:00:00,0.5,0.5,catastrophic\n");
    REQUIRE_THROWS_WITH(cvit::load_accidents_csv(dir.file("bad.csv")),
                        Catch::Matchers::ContainsSubstring("line 3"));

    test_helpers::write_file(dir.file("header.csv"), "time,lat,lon,sev\n");
    REQUIRE_THROWS_AS(cvit::load_accidents_csv(dir.file("header.csv")), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Sample assembly
// ---------------------------------------------------------------------------

namespace {

cvit::FrameSeries make_series(std::size_t hours, std::size_t rows = 2, std::size_t cols = 2) {
    cvit::FrameSeries series;
    series.start_epoch_hour = cvit::parse_iso_hour("2018-01-01T00:00:00");
    series.rows = rows;
    series.cols = cols;
    for (std::size_t h = 0; h < hours; ++h)
        series.frames.push_back({static_cast<std::int64_t>(h), cvit::Tensor::zeros({rows, cols})});
    return series;
}

std::vector<cvit::ContextRow> make_context(const cvit::FrameSeries& series) {
    std::vector<cvit::ContextRow> rows;
    for (std::size_t h = 0; h < series.frames.size(); ++h) {
        const auto hour = series.start_epoch_hour + static_cast<std::int64_t>(h);
        cvit::ContextRow row;
        row.hour_of_day = cvit::hour_of_day(hour);
        row.day_of_week = cvit::day_of_week(hour);
        row.temperature = 10.0 + row.hour_of_day;
        row.inflow = 5.0;
        row.outflow = 6.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

TEST_CASE("673 hours of frames give exactly one sample targeting hour 672") {
    const auto series = make_series(673);
    const auto samples = cvit::build_samples(series, make_context(series));
    REQUIRE(samples.size() == 1);
    REQUIRE(samples[0].target_hour == 672);
    for (double v : samples[0].history.data()) REQUIRE(v == 0.0);
    for (double v : samples[0].target.data()) REQUIRE(v == 0.0);
    REQUIRE(samples[0].history.shape() == cvit::Shape{7, 2, 2});
    REQUIRE(samples[0].context.shape() == cvit::Shape{7, cvit::kContextDim});
}

TEST_CASE("an impulse one week back lands in history channel 3") {
    auto series = make_series(700);
    const std::int64_t t = 680;
    series.frames[static_cast<std::size_t>(t - 168)].values.at({1, 0}) = 9.0;
    const auto samples = cvit::build_samples(series, make_context(series));
    const auto& sample = samples[static_cast<std::size_t>(t - 672)];
    REQUIRE(sample.target_hour == t);
    const std::size_t cells = 4;
    for (std::size_t c = 0; c < cvit::kHistoryLen; ++c) {
        const double expect = c == 3 ? 9.0 : 0.0;
        REQUIRE(sample.history.data()[c * cells + 2] == expect);  // cell (1,0) flattened
    }
}

TEST_CASE("every history channel copies the frame at its documented lag") {
    auto series = make_series(676, 2, 2);
    cvit::Rng rng(3);
    for (auto& frame : series.frames)
        for (double& v : frame.values.data()) v = std::floor(rng.uniform(0.0, 4.0));
    const auto samples = cvit::build_samples(series, make_context(series));
    const auto lags = cvit::history_lags(cvit::LagSchedule::weekly_plus_recent);
    for (const auto& sample : samples) {
        for (std::size_t c = 0; c < cvit::kHistoryLen; ++c) {
            const auto& frame =
                series.frames[static_cast<std::size_t>(sample.target_hour - lags[c])];
            for (std::size_t i = 0; i < 4; ++i)
                REQUIRE(sample.history.data()[c * 4 + i] == frame.values.data()[i]);
        }
        const auto& target_frame = series.frames[static_cast<std::size_t>(sample.target_hour)];
        REQUIRE(sample.target.data() == target_frame.values.data());
    }
}

TEST_CASE("build_samples rejects short series") {
    const auto series = make_series(672);
    REQUIRE_THROWS_WITH(cvit::build_samples(series, make_context(series)),
                        Catch::Matchers::ContainsSubstring("672"));
}

TEST_CASE("recent-only lag schedule needs just eight hours") {
    const auto series = make_series(9);
    const auto samples =
        cvit::build_samples(series, make_context(series), cvit::LagSchedule::recent_only);
    REQUIRE(samples.size() == 2);
    REQUIRE(samples[0].target_hour == 7);
}

TEST_CASE("chronological split proportions") {
    auto series = make_series(672 + 10);
    auto samples = cvit::build_samples(series, make_context(series));
    REQUIRE(samples.size() == 10);
    const auto split = cvit::chronological_split(samples, {});
    REQUIRE(split.train.size() == 6);
    REQUIRE(split.val.size() == 2);
    REQUIRE(split.test.size() == 2);

    auto series2 = make_series(672 + 100);
    const auto split2 =
        cvit::chronological_split(cvit::build_samples(series2, make_context(series2)), {});
    REQUIRE(split2.train.size() == 60);
    REQUIRE(split2.val.size() == 20);
    REQUIRE(split2.test.size() == 20);

    auto series3 = make_series(672 + 7);
    const auto split3 =
        cvit::chronological_split(cvit::build_samples(series3, make_context(series3)), {});
    REQUIRE(split3.train.size() == 4);  // floor(4.2)
    REQUIRE(split3.val.size() == 1);    // floor(1.4)
    REQUIRE(split3.test.size() == 2);   // remainder
}

TEST_CASE("splits are chronological and disjoint in target hours") {
    auto series = make_series(672 + 50);
    const auto split =
        cvit::chronological_split(cvit::build_samples(series, make_context(series)), {});
    std::vector<std::int64_t> seen;
    for (const auto* part : {&split.train, &split.val, &split.test})
        for (const auto& s : *part) seen.push_back(s.target_hour);
    std::vector<std::int64_t> sorted = seen;
    std::sort(sorted.begin(), sorted.end());
    REQUIRE(seen == sorted);  // contiguous chronological order across parts
    REQUIRE(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    REQUIRE(split.train.back().target_hour < split.val.front().target_hour);
    REQUIRE(split.val.back().target_hour < split.test.front().target_hour);
}

TEST_CASE("chronological split needs at least three samples") {
    auto series = make_series(674);
    auto samples = cvit::build_samples(series, make_context(series));
    REQUIRE(samples.size() == 2);
    REQUIRE_THROWS_AS(cvit::chronological_split(samples, {}), std::invalid_argument);
}

TEST_CASE("normalization stats") {
    SECTION("constant data clamps the std and maps to zero") {
        std::vector<double> data{4, 4, 4};
        const auto s = cvit::ScalarStat::fit(data.begin(), data.end());
        REQUIRE(s.std == cvit::ScalarStat::kMinStd);
        REQUIRE(s.apply(4.0) == 0.0);
    }
    SECTION("data {0, 2} gives mean 1, std 1") {
        std::vector<double> data{0, 2};
        const auto s = cvit::ScalarStat::fit(data.begin(), data.end());
        REQUIRE(s.mean == 1.0);
        REQUIRE(s.std == 1.0);
        REQUIRE(s.apply(0.0) == -1.0);
        REQUIRE(s.apply(2.0) == 1.0);
    }
    SECTION("apply then invert is the identity") {
        cvit::Rng rng(21);
        std::vector<double> data;
        for (int i = 0; i < 100; ++i) data.push_back(rng.uniform(-50.0, 50.0));
        const auto s = cvit::ScalarStat::fit(data.begin(), data.end());
        for (double v : data) REQUIRE(std::fabs(s.invert(s.apply(v)) - v) < 1e-10);
    }
    SECTION("empty input is rejected") {
        std::vector<double> data;
        REQUIRE_THROWS_AS(cvit::ScalarStat::fit(data.begin(), data.end()),
                          std::invalid_argument);
        REQUIRE_THROWS_AS(cvit::fit_norm({}), std::invalid_argument);
    }
}

TEST_CASE("fit_norm standardizes samples end to end") {
    auto series = make_series(672 + 20);
    cvit::Rng rng(17);
    for (auto& frame : series.frames)
        for (double& v : frame.values.data()) v = std::floor(rng.uniform(0.0, 3.0));
    const auto samples = cvit::build_samples(series, make_context(series));
    const auto stats = cvit::fit_norm(samples);
    REQUIRE(stats.risk.std > 0.0);
    const auto& s = samples[0];
    const auto hist = cvit::standardize_history(s, stats);
    for (std::size_t i = 0; i < hist.size(); ++i)
        REQUIRE(hist.data()[i] == stats.risk.apply(s.history.data()[i]));
    const auto tgt = cvit::standardize_target(s, stats);
    const auto back = cvit::invert_risk(tgt, stats);
    for (std::size_t i = 0; i < back.size(); ++i)
        REQUIRE(std::fabs(back.data()[i] - s.target.data()[i]) < 1e-10);
    const auto ctx = cvit::standardize_context(s, stats);
    // one-hot blocks untouched, scalar slots transformed
    REQUIRE(ctx.data()[0 * cvit::kContextDim + cvit::kHourBlock + s.hour_of_day] ==
            s.context.data()[0 * cvit::kContextDim + cvit::kHourBlock + s.hour_of_day]);
    REQUIRE(ctx.data()[cvit::kTempSlot] ==
            stats.temperature.apply(s.context.data()[cvit::kTempSlot]));
}
