#include "pumpsched/workflows.hpp"

#include "pumpsched/errors.hpp"
#include "pumpsched/replay.hpp"

#include <ctime>
#include <fstream>
#include <numeric>

#ifndef PUMPSCHED_VERSION
#define PUMPSCHED_VERSION "unknown"
#endif

namespace pumpsched::workflows {

std::string version() { return PUMPSCHED_VERSION; }

std::string utc_now()
{
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

nlohmann::json RunManifest::to_json() const
{
    return nlohmann::json{{"subcommand", subcommand}, {"config_path", config_path}, {"seed", seed},
                          {"inputs", inputs},         {"outputs", outputs},         {"started_at", started_at},
                          {"finished_at", finished_at}, {"version", version},       {"config", config}};
}

void write_manifest(const fs::path& dir, const RunManifest& manifest)
{
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
    out << manifest.to_json().dump(2) << '\n';
}

namespace {

std::ofstream open_out(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

RunManifest begin(const RunContext& ctx, const AppConfig& cfg)
{
    fs::create_directories(ctx.out_dir);
    RunManifest m;
    m.subcommand = ctx.subcommand;
    m.config_path = ctx.config_path;
    m.seed = ctx.seed;
    m.started_at = utc_now();
    m.config = to_json(cfg);
    return m;
}

void finish(const RunContext& ctx, RunManifest& m)
{
    m.finished_at = utc_now();
    write_manifest(ctx.out_dir, m);
}

dataset::LogLimits limits_of(const AppConfig& cfg)
{
    return dataset::LogLimits{cfg.plant.tank.min_level, cfg.plant.tank.max_level};
}

metrics::AggregateConfig aggregate_cfg(const AppConfig& cfg)
{
    metrics::AggregateConfig a;
    a.safety_level = cfg.env.safety_level;
    a.quality_level = cfg.env.quality_level;
    a.dt_minutes = cfg.env.dt_minutes;
    return a;
}

double start_level(const std::vector<dataset::SensorRecord>& records, const AppConfig& cfg)
{
    return std::clamp(records.front().tank_level, cfg.plant.tank.min_level, cfg.plant.tank.max_level);
}

void write_reports(const fs::path& dir, const std::string& stem, const metrics::OperationReport& report,
                   RunManifest& m)
{
    const auto json_path = dir / (stem + ".json");
    open_out(json_path) << metrics::to_json(report).dump(2) << '\n';
    const auto profile_path = dir / (stem + "_tank_profile.csv");
    {
        auto out = open_out(profile_path);
        metrics::write_tank_profile_csv(out, report);
    }
    const auto kwh_path = dir / (stem + "_monthly_kwh.csv");
    {
        auto out = open_out(kwh_path);
        metrics::write_monthly_kwh_csv(out, report);
    }
    m.outputs.insert(m.outputs.end(), {json_path.string(), profile_path.string(), kwh_path.string()});
}

fs::path write_trajectory_file(const fs::path& path, const rollout::Trajectory& t)
{
    auto out = open_out(path);
    dataset::write_trajectory(out, t.records, t.fields);
    return path;
}

} // namespace

std::vector<dataset::SensorRecord> read_log_file(const fs::path& path, const AppConfig& cfg)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return dataset::parse_log(in, limits_of(cfg));
}

std::vector<dataset::SensorRecord> demand_window(const std::optional<fs::path>& log, std::size_t minutes,
                                                 std::uint64_t seed, const AppConfig& cfg)
{
    if (minutes == 0) throw DomainError("horizon must be > 0 minutes");
    if (!log) {
        const int days = static_cast<int>((minutes + kMinutesPerDay - 1) / kMinutesPerDay);
        auto records = dataset::synthesize_demand(days, seed, cfg.demand);
        records.resize(minutes);
        return records;
    }
    auto records = read_log_file(*log, cfg);
    if (records.empty()) throw ValidationError({"demand log " + log->string() + " is empty"});
    for (std::size_t i = 1; i < records.size() && i < minutes; ++i) {
        const auto step = records[i].timestamp - records[i - 1].timestamp;
        if (step != 1) {
            throw ValidationError({"demand missing between " + records[i - 1].timestamp.to_string() + " and "
                                   + records[i].timestamp.to_string() + " (" + std::to_string(step - 1)
                                   + " minutes)"});
        }
    }
    if (records.size() < minutes) {
        const auto last = records.back().timestamp;
        throw ValidationError({"demand missing after " + last.to_string() + ": horizon needs "
                               + std::to_string(minutes) + " minutes, log has " + std::to_string(records.size())
                               + " (gap " + (last + 1).to_string() + " to "
                               + (records.front().timestamp + (static_cast<std::int64_t>(minutes) - 1)).to_string()
                               + ")"});
    }
    records.resize(minutes);
    return records;
}

agent::QEnsemble load_policy(const fs::path& checkpoint, const AppConfig& cfg)
{
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint " + checkpoint.string());
    auto ck = agent::load_checkpoint(in);
    std::vector<std::string> issues;
    if (ck.online.input_size() != env::kFeatureCount) {
        issues.push_back("checkpoint expects " + std::to_string(ck.online.input_size()) + " inputs, observation has "
                         + std::to_string(env::kFeatureCount));
    }
    if (ck.online.heads() != cfg.train.heads) {
        issues.push_back("checkpoint has " + std::to_string(ck.online.heads()) + " heads, config asks for "
                         + std::to_string(cfg.train.heads));
    }
    if (ck.config.hidden != cfg.train.hidden) issues.push_back("checkpoint hidden layer sizes differ from config");
    if (ck.online.shared_trunk() != cfg.train.shared_trunk) issues.push_back("checkpoint trunk layout differs from config");
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return std::move(ck.online);
}

SimulateResult run_simulate(const AppConfig& cfg, const RunContext& ctx, const std::optional<fs::path>& demand_log,
                            const ScheduleSource& schedule, std::size_t minutes)
{
    RunManifest m = begin(ctx, cfg);
    if (demand_log) m.inputs.push_back(demand_log->string());
    auto records = demand_window(demand_log, minutes, ctx.seed, cfg);

    std::unique_ptr<rollout::Policy> policy;
    double level = cfg.initial_level;
    const std::string& s = schedule.spec;
    if (s == "nop" || s == "NOP") {
        policy = std::make_unique<rollout::FixedPolicy>(Action::NOP);
    } else if (auto a = parse_action(s); a) {
        policy = std::make_unique<rollout::FixedPolicy>(*a);
    } else if (s == "rule") {
        policy = std::make_unique<rollout::RuleOperator>(cfg.op);
    } else if (s == "dataset") {
        if (!demand_log) throw ValidationError({"schedule 'dataset' needs a demand log with kW columns"});
        policy = std::make_unique<rollout::SchedulePolicy>(dataset::behavioral_actions(records).actions);
        level = start_level(records, cfg);
    } else if (s.starts_with("checkpoint:")) {
        const fs::path ck = s.substr(11);
        m.inputs.push_back(ck.string());
        policy = std::make_unique<rollout::GreedyPolicy>(load_policy(ck, cfg));
    } else {
        throw ValidationError({"unknown schedule '" + s + "'"});
    }

    auto trace = std::make_shared<const env::DemandTrace>(env::DemandTrace::from_records(records));
    env::PumpEnv e(cfg.plant, cfg.env);
    e.reset(level, trace);
    SimulateResult r;
    r.trajectory = rollout::run(e, *policy, records.size());
    r.report = metrics::aggregate(r.trajectory.records, r.trajectory.actions(), aggregate_cfg(cfg));
    r.trajectory_path = write_trajectory_file(ctx.out_dir / "trajectory.csv", r.trajectory);
    m.outputs.push_back(r.trajectory_path.string());
    write_reports(ctx.out_dir, "report", r.report, m);
    finish(ctx, m);
    return r;
}

TrainResult run_train(const AppConfig& cfg_in, const RunContext& ctx, const fs::path& dataset_path)
{
    AppConfig cfg = cfg_in;
    cfg.train.seed = ctx.seed;
    RunManifest m = begin(ctx, cfg);
    m.inputs.push_back(dataset_path.string());

    const auto log = read_log_file(dataset_path, cfg);
    auto behavior = rollout::replay_behavior(log, cfg);

    TrainResult res;
    res.transitions = behavior.transitions.size();
    res.episodes = behavior.episodes;

    replay::PrioritizedBuffer<env::Transition> buffer(cfg.replay);
    for (const auto& t : behavior.transitions) buffer.push(t);
    if (buffer.size() < cfg.train.batch_size) {
        throw ValidationError({"dataset yields " + std::to_string(buffer.size())
                               + " transitions, fewer than one batch of " + std::to_string(cfg.train.batch_size)});
    }

    agent::RemTrainer trainer(cfg.train);
    std::mt19937_64 sample_rng(ctx.seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::size_t step = 0; step < cfg.train_steps; ++step) {
        const double beta = cfg.replay.beta_at(step, cfg.train_steps);
        auto batch = buffer.sample(cfg.train.batch_size, beta, sample_rng);
        const auto out = trainer.train_step(batch.items, batch.weights);
        buffer.update_priorities(batch.handles, out.td_errors);
        if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.train_steps) {
            const double mean_td = std::accumulate(out.td_errors.begin(), out.td_errors.end(), 0.0)
                                   / static_cast<double>(out.td_errors.size());
            res.log.push_back(TrainLogRow{step + 1, out.loss, mean_td, beta});
        }
    }

    res.checkpoint_path = ctx.out_dir / "checkpoint.bin";
    {
        auto out = open_out(res.checkpoint_path);
        trainer.save_checkpoint(out);
    }
    const auto log_path = ctx.out_dir / "training_log.csv";
    {
        auto out = open_out(log_path);
        out << "step,loss,mean_abs_td,beta\n";
        for (const auto& r : res.log) {
            out << r.step << ',' << dataset::format_number(r.loss) << ',' << dataset::format_number(r.mean_abs_td)
                << ',' << dataset::format_number(r.beta) << '\n';
        }
    }
    res.online = trainer.online();
    m.outputs.insert(m.outputs.end(), {res.checkpoint_path.string(), log_path.string()});
    finish(ctx, m);
    return res;
}

EvalResult run_eval(const AppConfig& cfg, const RunContext& ctx, const fs::path& checkpoint,
                    const std::optional<fs::path>& dataset_path, std::size_t minutes)
{
    RunManifest m = begin(ctx, cfg);
    m.inputs.push_back(checkpoint.string());
    if (dataset_path) m.inputs.push_back(dataset_path->string());

    rollout::GreedyPolicy greedy(load_policy(checkpoint, cfg));
    auto records = demand_window(dataset_path, minutes, ctx.seed, cfg);
    const double level = dataset_path ? start_level(records, cfg) : cfg.initial_level;
    auto trace = std::make_shared<const env::DemandTrace>(env::DemandTrace::from_records(records));

    std::unique_ptr<rollout::Policy> baseline;
    if (dataset_path) {
        baseline = std::make_unique<rollout::SchedulePolicy>(dataset::behavioral_actions(records).actions);
    } else {
        baseline = std::make_unique<rollout::RuleOperator>(cfg.op);
    }

    EvalResult r;
    env::PumpEnv e(cfg.plant, cfg.env);
    e.reset(level, trace);
    r.agent = rollout::run(e, greedy, records.size());
    e.reset(level, trace);
    r.behavioral = rollout::run(e, *baseline, records.size());

    const auto acfg = aggregate_cfg(cfg);
    r.agent_report = metrics::aggregate(r.agent.records, r.agent.actions(), acfg);
    r.behavioral_report = metrics::aggregate(r.behavioral.records, r.behavioral.actions(), acfg);
    r.comparison = metrics::compare(r.behavioral_report, r.agent_report);

    m.outputs.push_back(write_trajectory_file(ctx.out_dir / "agent_trajectory.csv", r.agent).string());
    m.outputs.push_back(write_trajectory_file(ctx.out_dir / "behavioral_trajectory.csv", r.behavioral).string());
    write_reports(ctx.out_dir, "agent_report", r.agent_report, m);
    write_reports(ctx.out_dir, "behavioral_report", r.behavioral_report, m);
    const auto cmp_path = ctx.out_dir / "comparison.json";
    open_out(cmp_path) << metrics::to_json(r.comparison).dump(2) << '\n';
    m.outputs.push_back(cmp_path.string());
    finish(ctx, m);
    return r;
}

dataset::ParsedLog run_validate(const RunContext& ctx, const fs::path& path, const AppConfig& cfg)
{
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    auto parsed = dataset::read_log(in, limits_of(cfg));
    (void)ctx;
    return parsed;
}

std::vector<dataset::SensorRecord> run_synth(const AppConfig& cfg, const RunContext& ctx, int days)
{
    if (days <= 0) throw DomainError("days must be > 0");
    RunManifest m = begin(ctx, cfg);
    auto records = rollout::synthesize_operation(days, ctx.seed, cfg);
    const auto path = ctx.out_dir / "synth.csv";
    {
        auto out = open_out(path);
        dataset::write_log(out, records);
    }
    m.outputs.push_back(path.string());
    finish(ctx, m);
    return records;
}

dataset::SliceReport run_slice(const AppConfig& cfg, const RunContext& ctx, const fs::path& path)
{
    RunManifest m = begin(ctx, cfg);
    m.inputs.push_back(path.string());
    const auto records = read_log_file(path, cfg);
    dataset::SliceConfig sc;
    sc.episode_length = cfg.env.episode_length;
    auto report = dataset::slice_episodes(records, sc);
    for (std::size_t i = 0; i < report.episodes.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "episode_%03zu.csv", i);
        const auto p = ctx.out_dir / name;
        auto out = open_out(p);
        dataset::write_log(out, report.episodes[i].records);
        m.outputs.push_back(p.string());
    }
    finish(ctx, m);
    return report;
}

std::vector<hydraulics::CalibrationResult> run_calibrate(const AppConfig& cfg, const RunContext& ctx,
                                                         const fs::path& path)
{
    RunManifest m = begin(ctx, cfg);
    m.inputs.push_back(path.string());
    const auto records = read_log_file(path, cfg);
    std::array<std::vector<hydraulics::PumpSample>, kPumpCount> samples;
    for (const auto& r : records) {
        if (!r.flow) continue;
        const auto b = dataset::behavioral_action(r);
        if (!is_pump(b.action) || b.parallel) continue;
        const auto p = index_of(b.action);
        if ((*r.flow)[p] <= 0.0) continue;
        samples[p].push_back(hydraulics::PumpSample{(*r.flow)[p], r.kw[p], r.tank_level, r.demand});
    }
    std::vector<hydraulics::CalibrationResult> out;
    nlohmann::json pumps = nlohmann::json::array();
    for (std::size_t p = 0; p < kPumpCount; ++p) {
        const auto& prior = cfg.plant.pumps[p];
        if (samples[p].size() < 3) {
            hydraulics::CalibrationResult keep;
            keep.pump = prior;
            keep.samples = samples[p].size();
            out.push_back(keep);
        } else {
            out.push_back(hydraulics::calibrate_pump(prior, samples[p], cfg.plant.system, cfg.plant.rho));
        }
        const auto& q = out.back().pump;
        pumps.push_back({{"id", hydraulics::to_string(q.id)},
                         {"h0", q.shutoff_head},
                         {"c", q.head_coeff},
                         {"q_bep", q.q_bep},
                         {"eta_bep", q.eta_bep},
                         {"eta_coeff", q.eta_coeff},
                         {"samples", out.back().samples},
                         {"head_rmse", out.back().head_rmse}});
    }
    const auto p = ctx.out_dir / "calibration.json";
    open_out(p) << nlohmann::json{{"pumps", pumps}}.dump(2) << '\n';
    m.outputs.push_back(p.string());
    finish(ctx, m);
    return out;
}

} // namespace pumpsched::workflows
