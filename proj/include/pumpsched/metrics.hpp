#pragma once

// Operation analytics over trajectories: switch counts, energy per month,
// tank-level profiles and constraint reports.

#include "pumpsched/action.hpp"
#include "pumpsched/dataset.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pumpsched::metrics {

enum class SwitchCounting {
    PerPump,      // every pump ON->OFF or OFF->ON counts 1 (NP1 -> NP2 = 2)
    ActionChange, // any change of action counts 1
};

std::size_t count_switches(std::span<const Action> actions, SwitchCounting mode = SwitchCounting::PerPump);

struct AggregateConfig {
    double safety_level = 50.0;
    double quality_level = 53.0;
    double dt_minutes = 1.0;
    std::vector<double> quantiles{0.05, 0.25, 0.5, 0.75, 0.95};
    SwitchCounting counting = SwitchCounting::PerPump;
};

struct OperationReport {
    std::size_t minutes = 0;
    std::size_t days = 0;
    std::map<std::string, std::size_t> daily_switches; // YYYY-MM-DD
    std::map<std::string, double> monthly_kwh;         // YYYY-MM
    double total_kwh = 0.0;
    std::size_t total_switches = 0;
    double mean_daily_switches = 0.0;
    std::vector<double> quantiles;
    // 1440 rows of level quantiles by minute of day; empty rows where no data.
    std::vector<std::vector<double>> tank_profile;
    std::size_t safety_violation_minutes = 0;
    std::vector<std::string> water_exchange_days;
    std::array<double, kPumpCount> pump_usage_share{};
    std::array<std::size_t, kPumpCount> pump_running_minutes{};
};

// actions[i] is the action applied in records[i]. An empty trajectory gives
// an empty report.
OperationReport aggregate(std::span<const dataset::SensorRecord> records, std::span<const Action> actions,
                          const AggregateConfig& cfg = {});

struct DiffRow {
    std::string field;
    std::optional<double> a;
    std::optional<double> b;
    std::optional<double> abs_delta;
    std::optional<double> pct_delta;
    std::string flag;
};

struct Comparison {
    std::vector<DiffRow> rows;
    std::vector<std::string> warnings;

    const DiffRow* find(const std::string& field) const;
};

// Per-field deltas b - a and (b - a) / |a| in percent.
Comparison compare(const OperationReport& a, const OperationReport& b);

nlohmann::json to_json(const OperationReport& report);
nlohmann::json to_json(const Comparison& cmp);

void write_tank_profile_csv(std::ostream& out, const OperationReport& report);
void write_monthly_kwh_csv(std::ostream& out, const OperationReport& report);

} // namespace pumpsched::metrics
