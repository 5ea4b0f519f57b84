#pragma once

// Minute-resolution operation logs: CSV ingestion and validation, behavioral
// action extraction, episode slicing and synthetic demand traces.
//
// CSV schema (header order is free, names are fixed):
//   timestamp,demand,tank_level,kw_np1,kw_np2,kw_np3,kw_np4[,q_np1..q_np4]
// Trajectory exports append action,reward,water_quality.

#include "pumpsched/action.hpp"
#include "pumpsched/time.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pumpsched::dataset {

struct SensorRecord {
    MinuteStamp timestamp;
    double demand = 0.0;
    double tank_level = 0.0;
    std::array<double, kPumpCount> kw{};
    std::optional<std::array<double, kPumpCount>> flow;

    bool operator==(const SensorRecord&) const = default;
};

// Columns present only in trajectory exports.
struct TrajectoryFields {
    Action action = Action::NOP;
    double reward = 0.0;
    bool water_quality = false;

    bool operator==(const TrajectoryFields&) const = default;
};

struct LogLimits {
    double min_level = 47.0;
    double max_level = 57.0;
};

struct ParsedLog {
    std::vector<SensorRecord> records;
    // Parallel to records when the file carries trajectory columns.
    std::optional<std::vector<TrajectoryFields>> trajectory;
    // 1-based source line of each record.
    std::vector<std::size_t> lines;
    // Human-readable problems, each naming its line.
    std::vector<std::string> issues;

    bool ok() const noexcept { return issues.empty(); }
};

// Reads every row and collects row-level problems. Throws SchemaError when a
// required column is missing.
ParsedLog read_log(std::istream& in, const LogLimits& limits = {});

// Strict variant: throws ValidationError listing every offending line.
std::vector<SensorRecord> parse_log(std::istream& in, const LogLimits& limits = {});

// Shortest round-trip number formatting; flow columns are written when any
// record carries them.
void write_log(std::ostream& out, std::span<const SensorRecord> records);

void write_trajectory(std::ostream& out, std::span<const SensorRecord> records,
                      std::span<const TrajectoryFields> fields);

std::string format_number(double v);

inline constexpr double kDefaultKwTolerance = 0.1;

struct BehavioralAction {
    Action action = Action::NOP;
    // More than one pump above tolerance; action is the max-kW pump.
    bool parallel = false;
};

BehavioralAction behavioral_action(const SensorRecord& record, double kw_tolerance = kDefaultKwTolerance);

struct BehavioralSequence {
    std::vector<Action> actions;
    std::size_t parallel_warnings = 0;
    std::vector<std::string> warnings;
};

BehavioralSequence behavioral_actions(std::span<const SensorRecord> records,
                                      double kw_tolerance = kDefaultKwTolerance);

struct GapRepair {
    std::vector<SensorRecord> records;
    std::size_t filled_minutes = 0;
    // Gaps longer than the fill limit, as "start..end (N minutes)" strings.
    std::vector<std::string> unrepaired;
};

// Forward-fills missing minutes for gaps of at most max_fill minutes.
GapRepair repair_gaps(std::span<const SensorRecord> records, int max_fill = 5);

struct EpisodeSlice {
    std::size_t start_index = 0;
    std::vector<SensorRecord> records;
};

struct SliceConfig {
    int episode_length = kMinutesPerDay;
    // Minute of day at which episodes begin.
    int day_offset = 0;
};

struct SliceReport {
    std::vector<EpisodeSlice> episodes;
    std::size_t dropped_leading = 0;
    std::size_t dropped_trailing = 0;
    // One entry per window excluded for discontinuity.
    std::vector<std::string> excluded;
};

SliceReport slice_episodes(std::span<const SensorRecord> log, const SliceConfig& cfg = {});

struct DemandProfileConfig {
    double mean = 250.0;                // m^3/h, long-run mean without seasonality
    double daily_amplitude = 0.35;      // relative, 24 h harmonic
    double semidaily_amplitude = 0.2;   // relative, 12 h harmonic (second peak)
    int peak_minute = 420;              // main peak; the second follows 12 h later
    double seasonal_amplitude = 0.1;    // relative, yearly harmonic
    int seasonal_peak_day = 196;        // day of year with the highest demand
    double noise_amplitude = 0.05;      // relative bound of the noise term
    double noise_smoothing = 0.9;       // AR(1) coefficient in [0, 1)
    MinuteStamp start = MinuteStamp::from_civil(2024, 1, 1);
    double placeholder_level = 52.0;    // tank_level written into demand-only rows
};

// Demand-only records (kW columns zero). Deterministic per seed.
std::vector<SensorRecord> synthesize_demand(int days, std::uint64_t seed, const DemandProfileConfig& profile = {});

} // namespace pumpsched::dataset
