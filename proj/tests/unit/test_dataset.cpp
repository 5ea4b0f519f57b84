#include "pumpsched/dataset.hpp"
#include "pumpsched/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace pumpsched;
using namespace pumpsched::dataset;

namespace {

const char* kHeader = "timestamp,demand,tank_level,kw_np1,kw_np2,kw_np3,kw_np4\n";

std::vector<SensorRecord> minutes(MinuteStamp start, std::size_t n)
{
    std::vector<SensorRecord> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].timestamp = start + static_cast<std::int64_t>(i);
        out[i].demand = 200.0 + static_cast<double>(i % 7);
        out[i].tank_level = 52.0;
    }
    return out;
}

std::vector<std::string> issues_of(const std::string& text)
{
    std::istringstream in(text);
    return read_log(in).issues;
}

} // namespace

TEST(MinuteStamp, ParseAndFormat)
{
    const auto t = MinuteStamp::parse("2024-03-05T07:09");
    ASSERT_TRUE(t.has_value());
    EXPECT_EQ(t->to_string(), "2024-03-05T07:09");
    EXPECT_EQ(t->minute_of_day(), 7 * 60 + 9);
    EXPECT_EQ(t->month(), 3u);
    EXPECT_EQ(t->year(), 2024);
    EXPECT_EQ(t->month_key(), "2024-03");
    EXPECT_EQ(t->date_string(), "2024-03-05");
    EXPECT_EQ(MinuteStamp::parse("2024-03-05 07:09:00"), t);
    EXPECT_FALSE(MinuteStamp::parse("2024-03-05T07:09:30"));
    EXPECT_FALSE(MinuteStamp::parse("2024-02-30T00:00"));
    EXPECT_FALSE(MinuteStamp::parse("2024-03-05T24:00"));
    EXPECT_FALSE(MinuteStamp::parse("yesterday"));
}

TEST(MinuteStamp, DayRolloverAndLeapYear)
{
    const auto t = MinuteStamp::from_civil(2024, 2, 28, 23, 59);
    EXPECT_EQ((t + 1).to_string(), "2024-02-29T00:00");
    EXPECT_EQ((t + 1 + kMinutesPerDay).to_string(), "2024-03-01T00:00");
    EXPECT_EQ((t + 1) - t, 1);
}

TEST(ParseLog, HeaderAndOneRow)
{
    std::istringstream in(std::string(kHeader) + "2024-01-01T00:00,250,52,0,0,0,0\n");
    const auto recs = parse_log(in);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].timestamp, MinuteStamp::from_civil(2024, 1, 1));
    EXPECT_EQ(recs[0].demand, 250.0);
    EXPECT_EQ(recs[0].tank_level, 52.0);
    EXPECT_FALSE(recs[0].flow.has_value());
}

TEST(ParseLog, KwFieldMapping)
{
    std::istringstream in(std::string(kHeader) + "2024-01-01T00:00,250,52,0,12.5,0,0\n");
    const auto recs = parse_log(in);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].kw, (std::array<double, 4>{0.0, 12.5, 0.0, 0.0}));
}

TEST(ParseLog, ColumnOrderIsFree)
{
    std::istringstream in("kw_np4,kw_np3,kw_np2,kw_np1,tank_level,demand,timestamp\n1,2,3,4,50,100,2024-01-01T00:05\n");
    const auto recs = parse_log(in);
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].kw, (std::array<double, 4>{4.0, 3.0, 2.0, 1.0}));
    EXPECT_EQ(recs[0].demand, 100.0);
    EXPECT_EQ(recs[0].tank_level, 50.0);
}

TEST(ParseLog, MissingColumnIsSchemaError)
{
    std::istringstream in("timestamp,demand,kw_np1,kw_np2,kw_np3,kw_np4\n2024-01-01T00:00,1,0,0,0,0\n");
    try {
        parse_log(in);
        FAIL() << "expected SchemaError";
    } catch (const SchemaError& e) {
        EXPECT_NE(std::string(e.what()).find("tank_level"), std::string::npos);
    }
    std::istringstream empty("");
    EXPECT_THROW(parse_log(empty), SchemaError);
}

TEST(ParseLog, DuplicateTimestampNamesBothLines)
{
    std::istringstream in(std::string(kHeader) + "2024-01-01T00:00,250,52,0,0,0,0\n"
                          + "2024-01-01T00:00,250,52,0,0,0,0\n");
    try {
        parse_log(in);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        ASSERT_EQ(e.issues().size(), 1u);
        EXPECT_NE(e.issues()[0].find("lines 2 and 3"), std::string::npos) << e.issues()[0];
    }
}

TEST(ParseLog, BackwardsTimestampIsValidationError)
{
    const auto issues = issues_of(std::string(kHeader) + "2024-01-01T00:05,250,52,0,0,0,0\n"
                                  + "2024-01-01T00:04,250,52,0,0,0,0\n");
    ASSERT_EQ(issues.size(), 1u);
    EXPECT_NE(issues[0].find("line 3"), std::string::npos);
    EXPECT_NE(issues[0].find("line 2"), std::string::npos);
}

TEST(ParseLog, EveryBadRowIsReportedWithItsLine)
{
    const auto issues = issues_of(std::string(kHeader) + "2024-01-01T00:00,250,52,0,0,0,0\n"
                                  + "2024-01-01T00:01,abc,52,0,0,0,0\n" + "2024-01-01T00:02,250,60,0,0,0,0\n"
                                  + "2024-01-01T00:03,-1,52,0,0,0,0\n" + "garbage,250,52,0,0,0,0\n"
                                  + "2024-01-01T00:05,250,52,0,-3,0,0\n");
    ASSERT_EQ(issues.size(), 5u);
    EXPECT_NE(issues[0].find("line 3"), std::string::npos);
    EXPECT_NE(issues[1].find("line 4"), std::string::npos);
    EXPECT_NE(issues[1].find("outside [47, 57]"), std::string::npos);
    EXPECT_NE(issues[2].find("line 5"), std::string::npos);
    EXPECT_NE(issues[3].find("line 6"), std::string::npos);
    EXPECT_NE(issues[4].find("line 7"), std::string::npos);
}

TEST(ParseLog, FlowColumnsOptionalPerRow)
{
    std::istringstream in("timestamp,demand,tank_level,kw_np1,kw_np2,kw_np3,kw_np4,q_np1,q_np2,q_np3,q_np4\n"
                          "2024-01-01T00:00,250,52,0,40,0,0,0,470,0,0\n"
                          "2024-01-01T00:01,250,52,0,0,0,0,,,,\n");
    const auto recs = parse_log(in);
    ASSERT_EQ(recs.size(), 2u);
    ASSERT_TRUE(recs[0].flow.has_value());
    EXPECT_EQ((*recs[0].flow)[1], 470.0);
    EXPECT_FALSE(recs[1].flow.has_value());
}

TEST(ParseLog, RoundTripFieldForField)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto recs = minutes(MinuteStamp::from_civil(2023, 12, 31, 23, 50), 40);
    for (auto& r : recs) {
        r.demand = 1000.0 * u(rng);
        r.tank_level = 47.0 + 10.0 * u(rng);
        r.kw[static_cast<std::size_t>(u(rng) * 4)] = 80.0 * u(rng);
        if (u(rng) < 0.5) r.flow = std::array<double, 4>{u(rng), 500.0 * u(rng), 0.0, 1e-7 * u(rng)};
    }
    std::ostringstream out;
    write_log(out, recs);
    std::istringstream in(out.str());
    EXPECT_EQ(parse_log(in), recs);

    std::ostringstream again;
    write_log(again, recs);
    EXPECT_EQ(again.str(), out.str());
}

TEST(ParseLog, TrajectoryRoundTrip)
{
    auto recs = minutes(MinuteStamp::from_civil(2024, 6, 1), 5);
    std::vector<TrajectoryFields> fields{{Action::NOP, 0.0, false},
                                         {Action::NP2, -4.789052598597656, false},
                                         {Action::NP2, 1.0 / 3.0, true},
                                         {Action::NP4, -1e-300, true},
                                         {Action::NOP, 12.0, true}};
    std::ostringstream out;
    write_trajectory(out, recs, fields);
    EXPECT_NE(out.str().find(",action,reward,water_quality\n"), std::string::npos);
    std::istringstream in(out.str());
    const auto parsed = read_log(in);
    ASSERT_TRUE(parsed.ok());
    EXPECT_EQ(parsed.records, recs);
    ASSERT_TRUE(parsed.trajectory.has_value());
    EXPECT_EQ(*parsed.trajectory, fields);
}

TEST(ParseLog, TrajectoryColumnsMustComeTogether)
{
    std::istringstream in("timestamp,demand,tank_level,kw_np1,kw_np2,kw_np3,kw_np4,action\n");
    EXPECT_THROW(read_log(in), SchemaError);
}

TEST(BehavioralAction, Examples)
{
    SensorRecord r;
    r.kw = {0.0, 12.5, 0.0, 0.0};
    EXPECT_EQ(behavioral_action(r).action, Action::NP2);
    EXPECT_FALSE(behavioral_action(r).parallel);
    r.kw = {0.0, 0.0, 0.0, 0.0};
    EXPECT_EQ(behavioral_action(r).action, Action::NOP);
    r.kw = {30.0, 12.5, 0.0, 0.0};
    EXPECT_EQ(behavioral_action(r).action, Action::NP1);
    EXPECT_TRUE(behavioral_action(r).parallel);
}

TEST(BehavioralAction, ToleranceAndTies)
{
    SensorRecord r;
    r.kw = {0.1, 0.05, 0.0, 0.0};
    EXPECT_EQ(behavioral_action(r).action, Action::NOP);
    r.kw = {0.0, 0.0, 20.0, 20.0};
    EXPECT_EQ(behavioral_action(r).action, Action::NP3);
    EXPECT_TRUE(behavioral_action(r).parallel);
}

TEST(BehavioralAction, TotalAndWarningCountProperty)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto recs = minutes(MinuteStamp::from_civil(2024, 1, 1), 5000);
    std::size_t expected_parallel = 0;
    for (auto& r : recs) {
        int above = 0;
        for (double& kw : r.kw) {
            const double x = u(rng);
            kw = x < 0.6 ? 0.0 : x < 0.7 ? 0.1 * u(rng) : 50.0 * u(rng) + 0.2;
            above += kw > kDefaultKwTolerance ? 1 : 0;
        }
        expected_parallel += above >= 2 ? 1 : 0;
    }
    const auto seq = behavioral_actions(recs);
    ASSERT_EQ(seq.actions.size(), recs.size());
    for (Action a : seq.actions) EXPECT_LT(index_of(a), kActionCount);
    EXPECT_EQ(seq.parallel_warnings, expected_parallel);
    EXPECT_EQ(seq.warnings.size(), expected_parallel);
}

TEST(RepairGaps, ShortGapsFilledLongGapsReported)
{
    auto recs = minutes(MinuteStamp::from_civil(2024, 1, 1), 100);
    recs.erase(recs.begin() + 10, recs.begin() + 13); // 3-minute gap
    recs.erase(recs.begin() + 50, recs.begin() + 60); // 10-minute gap
    const auto rep = repair_gaps(recs);
    EXPECT_EQ(rep.filled_minutes, 3u);
    ASSERT_EQ(rep.unrepaired.size(), 1u);
    EXPECT_NE(rep.unrepaired[0].find("(10 minutes)"), std::string::npos);
    EXPECT_EQ(rep.records.size(), 90u);
    EXPECT_EQ(rep.records[10].demand, rep.records[9].demand);
    EXPECT_EQ(rep.records[12].timestamp, rep.records[9].timestamp + 3);
}

TEST(SliceEpisodes, TwoDays)
{
    const auto rep = slice_episodes(minutes(MinuteStamp::from_civil(2024, 1, 1), 2880));
    ASSERT_EQ(rep.episodes.size(), 2u);
    EXPECT_EQ(rep.episodes[0].start_index, 0u);
    EXPECT_EQ(rep.episodes[1].start_index, 1440u);
    EXPECT_EQ(rep.dropped_trailing, 0u);
}

TEST(SliceEpisodes, TrailingPartialDayDropped)
{
    const auto rep = slice_episodes(minutes(MinuteStamp::from_civil(2024, 1, 1), 3000));
    EXPECT_EQ(rep.episodes.size(), 2u);
    EXPECT_EQ(rep.dropped_trailing, 120u);
}

TEST(SliceEpisodes, GapExcludesOnlyItsDay)
{
    auto recs = minutes(MinuteStamp::from_civil(2024, 1, 1), 2880);
    recs.erase(recs.begin() + 700, recs.begin() + 720);
    const auto rep = slice_episodes(recs);
    ASSERT_EQ(rep.episodes.size(), 1u);
    EXPECT_EQ(rep.episodes[0].records.front().timestamp, MinuteStamp::from_civil(2024, 1, 2));
    ASSERT_EQ(rep.excluded.size(), 1u);
    EXPECT_NE(rep.excluded[0].find("2024-01-01T00:00"), std::string::npos);
}

TEST(SliceEpisodes, AlignsToMidnightAndSkipsMissingDays)
{
    auto recs = minutes(MinuteStamp::from_civil(2024, 1, 1, 22, 0), 120 + 3 * 1440);
    recs.erase(recs.begin() + 120 + 1440, recs.begin() + 120 + 2880); // all of Jan 3 missing
    const auto rep = slice_episodes(recs);
    EXPECT_EQ(rep.dropped_leading, 120u);
    ASSERT_EQ(rep.episodes.size(), 2u);
    EXPECT_EQ(rep.episodes[0].records.front().timestamp, MinuteStamp::from_civil(2024, 1, 2));
    EXPECT_EQ(rep.episodes[1].records.front().timestamp, MinuteStamp::from_civil(2024, 1, 4));
    EXPECT_TRUE(rep.excluded.empty());
}

TEST(SliceEpisodes, EverySliceIsContiguousProperty)
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto recs = minutes(MinuteStamp::from_civil(2024, 1, 1, 0, static_cast<int>(rng() % 300)), 6 * 1440);
        const std::size_t holes = rng() % 4;
        for (std::size_t h = 0; h < holes; ++h) {
            const std::size_t at = rng() % (recs.size() - 30);
            recs.erase(recs.begin() + static_cast<std::ptrdiff_t>(at),
                       recs.begin() + static_cast<std::ptrdiff_t>(at + 1 + rng() % 20));
        }
        SliceConfig cfg;
        cfg.day_offset = static_cast<int>(rng() % 3) * 60;
        const auto rep = slice_episodes(recs, cfg);
        for (const auto& ep : rep.episodes) {
            ASSERT_EQ(ep.records.size(), 1440u);
            EXPECT_EQ(ep.records.front().timestamp.minute_of_day(), cfg.day_offset);
            EXPECT_EQ(ep.records.front(), recs[ep.start_index]);
            for (std::size_t i = 1; i < ep.records.size(); ++i)
                ASSERT_EQ(ep.records[i].timestamp - ep.records[i - 1].timestamp, 1);
        }
    }
}

TEST(SynthesizeDemand, Deterministic)
{
    EXPECT_EQ(synthesize_demand(2, 42), synthesize_demand(2, 42));
    EXPECT_NE(synthesize_demand(2, 42), synthesize_demand(2, 43));
    EXPECT_THROW(synthesize_demand(0, 1), DomainError);
}

TEST(SynthesizeDemand, NoiselessIsDailyPeriodic)
{
    DemandProfileConfig p;
    p.noise_amplitude = 0.0;
    p.seasonal_amplitude = 0.0;
    const auto recs = synthesize_demand(3, 1, p);
    ASSERT_EQ(recs.size(), 3u * 1440u);
    for (std::size_t i = 0; i + 1440 < recs.size(); ++i) EXPECT_DOUBLE_EQ(recs[i].demand, recs[i + 1440].demand);
}

TEST(SynthesizeDemand, MeanWithinTwoPercentOverThirtyDays)
{
    DemandProfileConfig p;
    p.seasonal_amplitude = 0.0;
    const auto recs = synthesize_demand(30, 9, p);
    const double mean = std::accumulate(recs.begin(), recs.end(), 0.0,
                                        [](double s, const SensorRecord& r) { return s + r.demand; })
                      / static_cast<double>(recs.size());
    EXPECT_NEAR(mean, p.mean, 0.02 * p.mean);
    for (const auto& r : recs) EXPECT_GE(r.demand, 0.0);
}

TEST(SynthesizeDemand, ValidatesCleanly)
{
    const auto recs = synthesize_demand(2, 7);
    std::ostringstream out;
    write_log(out, recs);
    std::istringstream in(out.str());
    const auto parsed = read_log(in);
    EXPECT_TRUE(parsed.ok());
    EXPECT_EQ(parsed.records.size(), 2880u);
}
