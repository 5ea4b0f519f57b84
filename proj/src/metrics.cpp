#include "pumpsched/metrics.hpp"

#include "pumpsched/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace pumpsched::metrics {

std::size_t count_switches(std::span<const Action> actions, SwitchCounting mode)
{
    std::size_t n = 0;
    for (std::size_t i = 1; i < actions.size(); ++i) {
        if (mode == SwitchCounting::PerPump) {
            n += static_cast<std::size_t>(pump_toggles(actions[i - 1], actions[i]));
        } else if (actions[i] != actions[i - 1]) {
            ++n;
        }
    }
    return n;
}

namespace {

// Linear interpolation between closest ranks.
double quantile(std::vector<double>& sorted, double p)
{
    if (sorted.size() == 1) return sorted.front();
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

} // namespace

OperationReport aggregate(std::span<const dataset::SensorRecord> records, std::span<const Action> actions,
                          const AggregateConfig& cfg)
{
    if (records.size() != actions.size()) throw DomainError("aggregate: records and actions differ in length");
    OperationReport rep;
    rep.quantiles = cfg.quantiles;
    if (records.empty()) return rep;

    rep.minutes = records.size();
    std::vector<std::vector<double>> by_minute(kMinutesPerDay);
    std::map<std::string, double> day_min_level;
    std::size_t running_total = 0;

    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string day = r.timestamp.date_string();
        rep.daily_switches.try_emplace(day, 0);
        if (i > 0) {
            const std::size_t s = cfg.counting == SwitchCounting::PerPump
                                      ? static_cast<std::size_t>(pump_toggles(actions[i - 1], actions[i]))
                                      : (actions[i] != actions[i - 1] ? 1u : 0u);
            rep.daily_switches[day] += s;
            rep.total_switches += s;
        }
        double kw = 0.0;
        for (double p : r.kw) kw += p;
        const double kwh = kw * cfg.dt_minutes / 60.0;
        rep.monthly_kwh[r.timestamp.month_key()] += kwh;
        rep.total_kwh += kwh;

        by_minute[static_cast<std::size_t>(r.timestamp.minute_of_day())].push_back(r.tank_level);
        if (r.tank_level < cfg.safety_level) ++rep.safety_violation_minutes;
        auto [it, inserted] = day_min_level.try_emplace(day, r.tank_level);
        if (!inserted) it->second = std::min(it->second, r.tank_level);

        if (is_pump(actions[i])) {
            ++rep.pump_running_minutes[index_of(actions[i])];
            ++running_total;
        }
    }

    rep.days = rep.daily_switches.size();
    rep.mean_daily_switches = static_cast<double>(rep.total_switches) / static_cast<double>(rep.days);
    for (const auto& [day, lvl] : day_min_level) {
        if (lvl < cfg.quality_level) rep.water_exchange_days.push_back(day);
    }
    for (std::size_t p = 0; p < kPumpCount; ++p) {
        rep.pump_usage_share[p] = running_total == 0 ? 0.0
                                                     : static_cast<double>(rep.pump_running_minutes[p])
                                                           / static_cast<double>(running_total);
    }
    rep.tank_profile.resize(kMinutesPerDay);
    for (std::size_t m = 0; m < by_minute.size(); ++m) {
        auto& levels = by_minute[m];
        if (levels.empty()) continue;
        std::sort(levels.begin(), levels.end());
        for (double q : cfg.quantiles) rep.tank_profile[m].push_back(quantile(levels, q));
    }
    return rep;
}

const DiffRow* Comparison::find(const std::string& field) const
{
    for (const auto& r : rows) {
        if (r.field == field) return &r;
    }
    return nullptr;
}

namespace {

DiffRow diff(std::string field, std::optional<double> a, std::optional<double> b)
{
    DiffRow row;
    row.field = std::move(field);
    row.a = a;
    row.b = b;
    if (a && b) {
        row.abs_delta = *b - *a;
        if (*a != 0.0) {
            row.pct_delta = (*b - *a) / std::abs(*a) * 100.0;
        } else if (*b == 0.0) {
            row.pct_delta = 0.0;
        }
    } else {
        row.flag = a ? "missing in b" : "missing in a";
    }
    return row;
}

} // namespace

Comparison compare(const OperationReport& a, const OperationReport& b)
{
    Comparison cmp;
    if (a.minutes != b.minutes) {
        cmp.warnings.push_back("horizons differ: " + std::to_string(a.minutes) + " vs " + std::to_string(b.minutes)
                               + " minutes");
    }
    auto num = [](auto v) { return std::optional<double>(static_cast<double>(v)); };
    cmp.rows.push_back(diff("minutes", num(a.minutes), num(b.minutes)));
    cmp.rows.push_back(diff("total_kwh", a.total_kwh, b.total_kwh));
    cmp.rows.push_back(diff("total_switches", num(a.total_switches), num(b.total_switches)));
    cmp.rows.push_back(diff("mean_daily_switches", a.mean_daily_switches, b.mean_daily_switches));
    cmp.rows.push_back(diff("safety_violation_minutes", num(a.safety_violation_minutes), num(b.safety_violation_minutes)));
    cmp.rows.push_back(diff("water_exchange_days", num(a.water_exchange_days.size()), num(b.water_exchange_days.size())));
    for (std::size_t p = 0; p < kPumpCount; ++p) {
        cmp.rows.push_back(diff("pump_usage_share." + std::string(to_string(action_from_index(p))),
                                a.pump_usage_share[p], b.pump_usage_share[p]));
    }
    std::set<std::string> months;
    for (const auto& [m, v] : a.monthly_kwh) months.insert(m);
    for (const auto& [m, v] : b.monthly_kwh) months.insert(m);
    for (const auto& m : months) {
        auto pick = [&](const OperationReport& r) -> std::optional<double> {
            auto it = r.monthly_kwh.find(m);
            return it == r.monthly_kwh.end() ? std::nullopt : std::optional<double>(it->second);
        };
        cmp.rows.push_back(diff("monthly_kwh." + m, pick(a), pick(b)));
    }
    return cmp;
}

nlohmann::json to_json(const OperationReport& r)
{
    nlohmann::json shares = nlohmann::json::object();
    nlohmann::json running = nlohmann::json::object();
    for (std::size_t p = 0; p < kPumpCount; ++p) {
        const std::string name(to_string(action_from_index(p)));
        shares[name] = r.pump_usage_share[p];
        running[name] = r.pump_running_minutes[p];
    }
    return nlohmann::json{
        {"minutes", r.minutes},
        {"days", r.days},
        {"total_kwh", r.total_kwh},
        {"total_switches", r.total_switches},
        {"mean_daily_switches", r.mean_daily_switches},
        {"daily_switches", r.daily_switches},
        {"monthly_kwh", r.monthly_kwh},
        {"safety_violation_minutes", r.safety_violation_minutes},
        {"water_exchange_days", r.water_exchange_days},
        {"pump_usage_share", shares},
        {"pump_running_minutes", running},
        {"tank_profile_quantiles", r.quantiles},
    };
}

nlohmann::json to_json(const Comparison& cmp)
{
    nlohmann::json rows = nlohmann::json::array();
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    for (const auto& r : cmp.rows) {
        nlohmann::json row{{"field", r.field}, {"a", opt(r.a)}, {"b", opt(r.b)}, {"abs_delta", opt(r.abs_delta)},
                           {"pct_delta", opt(r.pct_delta)}};
        if (!r.flag.empty()) row["flag"] = r.flag;
        rows.push_back(std::move(row));
    }
    return nlohmann::json{{"rows", rows}, {"warnings", cmp.warnings}};
}

void write_tank_profile_csv(std::ostream& out, const OperationReport& report)
{
    out << "minute_of_day";
    for (double q : report.quantiles) out << ",q" << dataset::format_number(q);
    out << '\n';
    for (std::size_t m = 0; m < report.tank_profile.size(); ++m) {
        if (report.tank_profile[m].empty()) continue;
        out << m;
        for (double v : report.tank_profile[m]) out << ',' << dataset::format_number(v);
        out << '\n';
    }
}

void write_monthly_kwh_csv(std::ostream& out, const OperationReport& report)
{
    out << "month,kwh\n";
    for (const auto& [m, kwh] : report.monthly_kwh) out << m << ',' << dataset::format_number(kwh) << '\n';
}

} // namespace pumpsched::metrics
