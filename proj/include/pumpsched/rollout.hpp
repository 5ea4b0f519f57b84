#pragma once

// Driving the environment with a schedule and recording what happened in the
// dataset export schema.

#include "pumpsched/agent.hpp"
#include "pumpsched/config.hpp"
#include "pumpsched/dataset.hpp"
#include "pumpsched/env.hpp"

#include <memory>
#include <string>
#include <vector>

namespace pumpsched::rollout {

class Policy {
public:
    virtual ~Policy() = default;
    virtual Action act(const env::PumpEnv& env) = 0;
    virtual std::string name() const = 0;
};

class FixedPolicy final : public Policy {
public:
    explicit FixedPolicy(Action a) : action_(a) {}
    Action act(const env::PumpEnv&) override { return action_; }
    std::string name() const override { return "fixed:" + std::string(to_string(action_)); }

private:
    Action action_;
};

// Replays a recorded action sequence step by step.
class SchedulePolicy final : public Policy {
public:
    explicit SchedulePolicy(std::vector<Action> schedule) : schedule_(std::move(schedule)) {}
    Action act(const env::PumpEnv& env) override;
    std::string name() const override { return "schedule"; }

private:
    std::vector<Action> schedule_;
    std::size_t next_ = 0;
};

// Hysteresis operator imitating the daily strategy of the human operators:
// fill the tank at night ahead of the morning peak, let it drain during the
// day, restart at a low mark, prefer NP2.
class RuleOperator final : public Policy {
public:
    explicit RuleOperator(OperatorConfig cfg) : cfg_(cfg) {}
    Action act(const env::PumpEnv& env) override;
    std::string name() const override { return "rule"; }

private:
    Action choose_pump(const env::PumpEnv& env, double level) const;

    OperatorConfig cfg_;
    Action running_ = Action::NOP;
};

class GreedyPolicy final : public Policy {
public:
    explicit GreedyPolicy(agent::QEnsemble q) : q_(std::move(q)) {}
    Action act(const env::PumpEnv& env) override;
    std::string name() const override { return "greedy"; }

private:
    agent::QEnsemble q_;
};

struct Trajectory {
    std::vector<dataset::SensorRecord> records;
    std::vector<dataset::TrajectoryFields> fields;
    std::vector<env::StepInfo> infos;
    std::vector<env::Transition> transitions;

    std::vector<Action> actions() const;
    double total_reward() const;
};

struct RolloutOptions {
    bool collect_transitions = false;
};

// Export row for one step: wall-clock minute, level before the action and
// the kW/Q the action produced.
dataset::SensorRecord record_of(const env::StepResult& res, Action a);

// Steps env for the given number of steps, one record_of row per step.
Trajectory run(env::PumpEnv& env, Policy& policy, std::size_t steps, const RolloutOptions& opts = {});

// Demand trace plus the rule operator's response: a behavioral log in the
// dataset schema.
std::vector<dataset::SensorRecord> synthesize_operation(int days, std::uint64_t seed, const AppConfig& cfg);

// Rebuilds transitions from a behavioral log by replaying its actions
// through the simulator. Runs of contiguous episodes are replayed
// reset-free; each run starts at its recorded tank level.
struct BehavioralReplay {
    std::vector<env::Transition> transitions;
    std::size_t episodes = 0;
    std::size_t parallel_warnings = 0;
    std::vector<std::string> notes;
};

BehavioralReplay replay_behavior(std::span<const dataset::SensorRecord> log, const AppConfig& cfg);

} // namespace pumpsched::rollout
