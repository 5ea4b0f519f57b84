#include "pumpsched/rollout.hpp"

#include "pumpsched/errors.hpp"

#include <algorithm>

namespace pumpsched::rollout {

Action SchedulePolicy::act(const env::PumpEnv&)
{
    if (next_ >= schedule_.size()) throw StateError("schedule exhausted after " + std::to_string(next_) + " steps");
    return schedule_[next_++];
}

Action RuleOperator::choose_pump(const env::PumpEnv& env, double level) const
{
    if (level < cfg_.emergency_level) return Action::NP1;
    const double demand = env.observation().demand;
    // Smallest pump from NP2 downwards that still beats demand with margin,
    // otherwise the largest.
    for (Action a : {Action::NP2, Action::NP1}) {
        const auto op = env.preview(a);
        if (!op.dead_headed && op.q > 1.2 * demand) return a;
    }
    return Action::NP1;
}

Action RuleOperator::act(const env::PumpEnv& env)
{
    const auto& obs = env.observation();
    const double level = obs.tank_level;
    const bool night = obs.minute_of_day >= cfg_.night_start_minute && obs.minute_of_day < cfg_.night_end_minute;
    if (running_ != Action::NOP) {
        const double stop = night ? std::max(cfg_.stop_level, cfg_.night_fill_level) : cfg_.stop_level;
        if (level >= stop) {
            running_ = Action::NOP;
        } else if (level < cfg_.emergency_level && running_ != Action::NP1) {
            running_ = Action::NP1;
        }
    } else if (level <= cfg_.start_level || (night && level < cfg_.night_fill_level)) {
        running_ = choose_pump(env, level);
    }
    return running_;
}

Action GreedyPolicy::act(const env::PumpEnv& env)
{
    const auto x = env::encode_observation(env.observation(), env.config().encoding);
    return agent::greedy_policy(q_, x);
}

std::vector<Action> Trajectory::actions() const
{
    std::vector<Action> out;
    out.reserve(fields.size());
    for (const auto& f : fields) out.push_back(f.action);
    return out;
}

double Trajectory::total_reward() const
{
    double s = 0.0;
    for (const auto& f : fields) s += f.reward;
    return s;
}

dataset::SensorRecord record_of(const env::StepResult& res, Action a)
{
    dataset::SensorRecord rec;
    rec.timestamp = res.info.time;
    rec.demand = res.info.demand;
    rec.tank_level = res.info.level_before;
    std::array<double, kPumpCount> flow{};
    if (is_pump(a)) {
        rec.kw[index_of(a)] = res.info.kw;
        flow[index_of(a)] = res.info.q;
    }
    rec.flow = flow;
    return rec;
}

Trajectory run(env::PumpEnv& env, Policy& policy, std::size_t steps, const RolloutOptions& opts)
{
    Trajectory t;
    t.records.reserve(steps);
    t.fields.reserve(steps);
    t.infos.reserve(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const env::FeatureVector before = env::encode_observation(env.observation(), env.config().encoding);
        const Action a = policy.act(env);
        const auto res = env.step(a);

        t.records.push_back(record_of(res, a));
        t.fields.push_back(dataset::TrajectoryFields{a, res.reward, res.obs.water_quality});
        t.infos.push_back(res.info);
        if (opts.collect_transitions) {
            t.transitions.push_back(env::Transition{before, a, res.reward,
                                                    env::encode_observation(res.obs, env.config().encoding),
                                                    res.info.episode_end});
        }
    }
    return t;
}

std::vector<dataset::SensorRecord> synthesize_operation(int days, std::uint64_t seed, const AppConfig& cfg)
{
    auto demand = dataset::synthesize_demand(days, seed, cfg.demand);
    auto trace = std::make_shared<const env::DemandTrace>(env::DemandTrace::from_records(demand));
    env::PumpEnv e(cfg.plant, cfg.env);
    e.reset(cfg.initial_level, trace);
    RuleOperator op(cfg.op);
    auto traj = run(e, op, trace->size());
    return std::move(traj.records);
}

BehavioralReplay replay_behavior(std::span<const dataset::SensorRecord> log, const AppConfig& cfg)
{
    BehavioralReplay out;
    const auto repaired = dataset::repair_gaps(log);
    for (const auto& g : repaired.unrepaired) out.notes.push_back("unrepaired gap " + g);
    dataset::SliceConfig slice_cfg;
    slice_cfg.episode_length = cfg.env.episode_length;
    const auto slices = dataset::slice_episodes(repaired.records, slice_cfg);
    for (const auto& x : slices.excluded) out.notes.push_back("excluded " + x);
    if (slices.episodes.empty()) throw ValidationError({"dataset holds no complete episode"});
    out.episodes = slices.episodes.size();

    // Group contiguous episodes into runs that share one trace.
    std::vector<std::vector<dataset::SensorRecord>> runs;
    std::size_t next_start = 0;
    for (const auto& ep : slices.episodes) {
        if (runs.empty() || ep.start_index != next_start) runs.emplace_back();
        runs.back().insert(runs.back().end(), ep.records.begin(), ep.records.end());
        next_start = ep.start_index + ep.records.size();
    }

    env::PumpEnv e(cfg.plant, cfg.env);
    for (const auto& recs : runs) {
        const auto behavior = dataset::behavioral_actions(recs);
        out.parallel_warnings += behavior.parallel_warnings;
        auto trace = std::make_shared<const env::DemandTrace>(env::DemandTrace::from_records(recs));
        const double level = std::clamp(recs.front().tank_level, cfg.plant.tank.min_level, cfg.plant.tank.max_level);
        e.reset(level, trace);
        SchedulePolicy schedule(behavior.actions);
        RolloutOptions opts;
        opts.collect_transitions = true;
        auto traj = run(e, schedule, recs.size(), opts);
        out.transitions.insert(out.transitions.end(), traj.transitions.begin(), traj.transitions.end());
    }
    return out;
}

} // namespace pumpsched::rollout
