#include "pumpsched/dataset.hpp"

#include "pumpsched/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>

namespace pumpsched::dataset {

namespace {

constexpr std::array<const char*, kPumpCount> kKwColumns{"kw_np1", "kw_np2", "kw_np3", "kw_np4"};
constexpr std::array<const char*, kPumpCount> kFlowColumns{"q_np1", "q_np2", "q_np3", "q_np4"};

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

bool parse_double(std::string_view s, double& out)
{
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size() && std::isfinite(out);
}

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

struct ColumnMap {
    int timestamp = -1;
    int demand = -1;
    int tank_level = -1;
    std::array<int, kPumpCount> kw{-1, -1, -1, -1};
    std::array<int, kPumpCount> flow{-1, -1, -1, -1};
    int action = -1;
    int reward = -1;
    int water_quality = -1;

    bool has_flow() const { return flow[0] >= 0; }
    bool has_trajectory() const { return action >= 0; }
};

ColumnMap map_header(std::string_view header)
{
    std::map<std::string, int, std::less<>> index;
    const auto cols = split(header);
    for (std::size_t i = 0; i < cols.size(); ++i) index.emplace(std::string(cols[i]), static_cast<int>(i));
    auto find = [&](std::string_view name) {
        auto it = index.find(name);
        return it == index.end() ? -1 : it->second;
    };

    ColumnMap m;
    std::vector<std::string> missing;
    auto require = [&](const char* name, int& slot) {
        slot = find(name);
        if (slot < 0) missing.emplace_back(name);
    };
    require("timestamp", m.timestamp);
    require("demand", m.demand);
    require("tank_level", m.tank_level);
    for (std::size_t p = 0; p < kPumpCount; ++p) require(kKwColumns[p], m.kw[p]);

    int flow_present = 0;
    for (std::size_t p = 0; p < kPumpCount; ++p) flow_present += find(kFlowColumns[p]) >= 0 ? 1 : 0;
    if (flow_present > 0) {
        for (std::size_t p = 0; p < kPumpCount; ++p) require(kFlowColumns[p], m.flow[p]);
    }
    const int traj_present = (find("action") >= 0) + (find("reward") >= 0) + (find("water_quality") >= 0);
    if (traj_present > 0) {
        require("action", m.action);
        require("reward", m.reward);
        require("water_quality", m.water_quality);
    }
    if (!missing.empty()) {
        std::string msg = "missing required column(s):";
        for (const auto& c : missing) msg += " " + c;
        throw SchemaError(msg);
    }
    return m;
}

} // namespace

std::string format_number(double v)
{
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

ParsedLog read_log(std::istream& in, const LogLimits& limits)
{
    ParsedLog log;
    std::string line;
    std::size_t line_no = 0;
    std::optional<ColumnMap> cols;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (!cols) {
            cols = map_header(line);
            if (cols->has_trajectory()) log.trajectory.emplace();
            continue;
        }
        const auto cells = split(line);
        auto cell = [&](int idx) -> std::string_view {
            return idx >= 0 && static_cast<std::size_t>(idx) < cells.size() ? cells[idx] : std::string_view{};
        };
        std::vector<std::string> row_issues;
        auto number = [&](int idx, const char* name, double& out) {
            if (!parse_double(cell(idx), out)) row_issues.push_back(at_line(line_no) + "bad value for " + name);
        };

        SensorRecord rec;
        if (auto ts = MinuteStamp::parse(cell(cols->timestamp))) {
            rec.timestamp = *ts;
        } else {
            row_issues.push_back(at_line(line_no) + "bad timestamp '" + std::string(cell(cols->timestamp)) + "'");
        }
        number(cols->demand, "demand", rec.demand);
        number(cols->tank_level, "tank_level", rec.tank_level);
        for (std::size_t p = 0; p < kPumpCount; ++p) number(cols->kw[p], kKwColumns[p], rec.kw[p]);
        if (cols->has_flow()) {
            bool all_empty = true;
            for (std::size_t p = 0; p < kPumpCount; ++p) all_empty = all_empty && cell(cols->flow[p]).empty();
            if (!all_empty) {
                std::array<double, kPumpCount> q{};
                for (std::size_t p = 0; p < kPumpCount; ++p) {
                    number(cols->flow[p], kFlowColumns[p], q[p]);
                    if (q[p] < 0.0) row_issues.push_back(at_line(line_no) + kFlowColumns[p] + " must be >= 0");
                }
                rec.flow = q;
            }
        }

        if (rec.demand < 0.0) row_issues.push_back(at_line(line_no) + "demand must be >= 0");
        if (rec.tank_level < limits.min_level || rec.tank_level > limits.max_level)
            row_issues.push_back(at_line(line_no) + "tank_level " + format_number(rec.tank_level) + " outside ["
                                 + format_number(limits.min_level) + ", " + format_number(limits.max_level) + "]");
        for (std::size_t p = 0; p < kPumpCount; ++p) {
            if (rec.kw[p] < 0.0) row_issues.push_back(at_line(line_no) + kKwColumns[p] + " must be >= 0");
        }

        TrajectoryFields traj;
        if (cols->has_trajectory()) {
            if (auto a = parse_action(cell(cols->action))) {
                traj.action = *a;
            } else {
                row_issues.push_back(at_line(line_no) + "bad action '" + std::string(cell(cols->action)) + "'");
            }
            number(cols->reward, "reward", traj.reward);
            const auto wq = cell(cols->water_quality);
            if (wq == "1" || wq == "true") {
                traj.water_quality = true;
            } else if (wq != "0" && wq != "false") {
                row_issues.push_back(at_line(line_no) + "bad water_quality '" + std::string(wq) + "'");
            }
        }

        if (!row_issues.empty()) {
            log.issues.insert(log.issues.end(), row_issues.begin(), row_issues.end());
            continue;
        }
        if (!log.records.empty()) {
            const auto& prev = log.records.back();
            if (rec.timestamp == prev.timestamp) {
                log.issues.push_back("duplicate timestamp " + rec.timestamp.to_string() + " on lines "
                                     + std::to_string(log.lines.back()) + " and " + std::to_string(line_no));
            } else if (rec.timestamp < prev.timestamp) {
                log.issues.push_back(at_line(line_no) + "timestamp " + rec.timestamp.to_string() + " precedes "
                                     + prev.timestamp.to_string() + " on line " + std::to_string(log.lines.back()));
            }
        }
        log.records.push_back(rec);
        log.lines.push_back(line_no);
        if (log.trajectory) log.trajectory->push_back(traj);
    }
    if (!cols) throw SchemaError("empty input: no header row");
    return log;
}

std::vector<SensorRecord> parse_log(std::istream& in, const LogLimits& limits)
{
    ParsedLog log = read_log(in, limits);
    if (!log.ok()) throw ValidationError(std::move(log.issues));
    return std::move(log.records);
}

namespace {

void write_header(std::ostream& out, bool flow)
{
    out << "timestamp,demand,tank_level";
    for (auto c : kKwColumns) out << ',' << c;
    if (flow) {
        for (auto c : kFlowColumns) out << ',' << c;
    }
}

void write_row(std::ostream& out, const SensorRecord& r, bool flow)
{
    out << r.timestamp.to_string() << ',' << format_number(r.demand) << ',' << format_number(r.tank_level);
    for (double kw : r.kw) out << ',' << format_number(kw);
    if (flow) {
        if (r.flow) {
            for (double q : *r.flow) out << ',' << format_number(q);
        } else {
            out << ",,,,";
        }
    }
}

bool any_flow(std::span<const SensorRecord> records)
{
    return std::any_of(records.begin(), records.end(), [](const SensorRecord& r) { return r.flow.has_value(); });
}

} // namespace

void write_log(std::ostream& out, std::span<const SensorRecord> records)
{
    const bool flow = any_flow(records);
    write_header(out, flow);
    out << '\n';
    for (const auto& r : records) {
        write_row(out, r, flow);
        out << '\n';
    }
}

void write_trajectory(std::ostream& out, std::span<const SensorRecord> records, std::span<const TrajectoryFields> fields)
{
    if (records.size() != fields.size()) throw DomainError("write_trajectory: records and fields differ in length");
    const bool flow = any_flow(records);
    write_header(out, flow);
    out << ",action,reward,water_quality\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        write_row(out, records[i], flow);
        out << ',' << to_string(fields[i].action) << ',' << format_number(fields[i].reward) << ','
            << (fields[i].water_quality ? 1 : 0) << '\n';
    }
}

BehavioralAction behavioral_action(const SensorRecord& record, double kw_tolerance)
{
    BehavioralAction out;
    int running = 0;
    double best = 0.0;
    for (std::size_t p = 0; p < kPumpCount; ++p) {
        if (record.kw[p] > kw_tolerance) {
            ++running;
            // Strict comparison keeps the lower pump index on equal kW.
            if (record.kw[p] > best) {
                best = record.kw[p];
                out.action = action_from_index(p);
            }
        }
    }
    out.parallel = running > 1;
    return out;
}

BehavioralSequence behavioral_actions(std::span<const SensorRecord> records, double kw_tolerance)
{
    BehavioralSequence seq;
    seq.actions.reserve(records.size());
    for (const auto& r : records) {
        const auto b = behavioral_action(r, kw_tolerance);
        seq.actions.push_back(b.action);
        if (b.parallel) {
            ++seq.parallel_warnings;
            seq.warnings.push_back("parallel pump operation at " + r.timestamp.to_string() + ", using "
                                   + std::string(to_string(b.action)));
        }
    }
    return seq;
}

GapRepair repair_gaps(std::span<const SensorRecord> records, int max_fill)
{
    GapRepair out;
    out.records.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (i > 0) {
            const auto& prev = records[i - 1];
            const std::int64_t missing = (records[i].timestamp - prev.timestamp) - 1;
            if (missing > 0 && missing <= max_fill) {
                for (std::int64_t m = 1; m <= missing; ++m) {
                    SensorRecord fill = prev;
                    fill.timestamp = prev.timestamp + m;
                    out.records.push_back(fill);
                }
                out.filled_minutes += static_cast<std::size_t>(missing);
            } else if (missing > max_fill) {
                out.unrepaired.push_back((prev.timestamp + 1).to_string() + ".."
                                         + (records[i].timestamp + (-1)).to_string() + " ("
                                         + std::to_string(missing) + " minutes)");
            }
        }
        out.records.push_back(records[i]);
    }
    return out;
}

SliceReport slice_episodes(std::span<const SensorRecord> log, const SliceConfig& cfg)
{
    if (cfg.episode_length <= 0) throw DomainError("slice_episodes: episode length must be > 0");
    SliceReport rep;
    const std::size_t n = log.size();
    std::size_t i = 0;
    while (i < n && log[i].timestamp.minute_of_day() != cfg.day_offset) ++i;
    rep.dropped_leading = i;
    if (i == n) return rep;

    MinuteStamp window_start = log[i].timestamp;
    const auto len = static_cast<std::size_t>(cfg.episode_length);
    while (i < n) {
        const MinuteStamp window_end = window_start + cfg.episode_length;
        std::size_t j = i;
        while (j < n && log[j].timestamp < window_end) ++j;
        if (j == n && (log[n - 1].timestamp - window_start) < cfg.episode_length - 1) {
            // Horizon ends inside this window.
            rep.dropped_trailing = j - i;
            break;
        }
        bool contiguous = (j - i) == len && log[i].timestamp == window_start;
        for (std::size_t k = i + 1; contiguous && k < j; ++k) {
            contiguous = (log[k].timestamp - log[k - 1].timestamp) == 1;
        }
        if (contiguous) {
            rep.episodes.push_back(EpisodeSlice{i, std::vector<SensorRecord>(log.begin() + i, log.begin() + j)});
        } else {
            rep.excluded.push_back("window " + window_start.to_string() + " has " + std::to_string(j - i) + " of "
                                   + std::to_string(len) + " minutes");
        }
        i = j;
        if (i < n) {
            // Skip whole missing windows.
            const std::int64_t ahead = log[i].timestamp - window_end;
            window_start = window_end + (ahead / cfg.episode_length) * cfg.episode_length;
        }
    }
    return rep;
}

std::vector<SensorRecord> synthesize_demand(int days, std::uint64_t seed, const DemandProfileConfig& profile)
{
    if (days < 1) throw DomainError("synthesize_demand: days must be >= 1");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    const std::size_t total = static_cast<std::size_t>(days) * kMinutesPerDay;
    std::vector<SensorRecord> out;
    out.reserve(total);
    double noise = 0.0;
    for (std::size_t t = 0; t < total; ++t) {
        SensorRecord r;
        r.timestamp = profile.start + static_cast<std::int64_t>(t);
        const double minute = r.timestamp.minute_of_day();
        const double day_phase = two_pi * (minute - profile.peak_minute) / kMinutesPerDay;
        const double shape = 1.0 + profile.daily_amplitude * std::cos(day_phase)
                           + profile.semidaily_amplitude * std::cos(2.0 * day_phase);

        const auto day = std::chrono::sys_days{std::chrono::days{r.timestamp.day_index()}};
        const std::chrono::year_month_day ymd{day};
        const auto jan1 = std::chrono::sys_days{ymd.year() / std::chrono::January / 1};
        const double day_of_year = static_cast<double>((day - jan1).count()) + 1.0 + minute / kMinutesPerDay;
        const double season = 1.0 + profile.seasonal_amplitude
                                        * std::cos(two_pi * (day_of_year - profile.seasonal_peak_day) / 365.25);

        if (profile.noise_amplitude > 0.0) {
            noise = profile.noise_smoothing * noise + (1.0 - profile.noise_smoothing) * unit(rng);
        }
        r.demand = std::max(0.0, profile.mean * season * (shape + profile.noise_amplitude * noise));
        r.tank_level = profile.placeholder_level;
        out.push_back(r);
    }
    return out;
}

} // namespace pumpsched::dataset
