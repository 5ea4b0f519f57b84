#pragma once

// Episodic, reset-free pump scheduling environment.
//
// One step is one dt (default one minute). Episodes are fixed-length windows
// over a continuous trajectory: at rollover the per-episode accumulators are
// zeroed while the tank carries over.

#include "pumpsched/action.hpp"
#include "pumpsched/dataset.hpp"
#include "pumpsched/hydraulics.hpp"
#include "pumpsched/time.hpp"

#include <array>
#include <memory>
#include <optional>
#include <vector>

namespace pumpsched::env {

enum class RewardVariant { V1, V2 };

struct RewardThresholds {
    double low = 49.0;     // B = 1 at or below
    double safety = 50.0;  // linear band (low, safety); bonus band starts here
    double quality = 53.0; // water exchange threshold
    double high = 57.0;    // B = 1 at the top of the tank
};

struct RewardConfig {
    RewardVariant variant = RewardVariant::V1;
    double psi = 10.0;
    double omega_switch = 30.0;
    double omega_base = 1.0;
    RewardThresholds thresholds{};
    // Tolerance for the "level = high" test; clamped levels never hit it exactly.
    double level_eps = 1e-6;
    // V1 efficiency term as exp(-kW/Q) instead of exp(-Q/kW).
    bool eq1_literal = false;

    void validate() const;
};

// Everything one reward evaluation needs.
struct RewardContext {
    Action action = Action::NOP;
    Action prev_action = Action::NOP;
    // Running minutes per action accumulated before this step.
    std::array<double, kActionCount> time_running{};
    double tank_level = 0.0;
    // Flag as carried into this step.
    bool water_quality = false;
    double q = 0.0;
    double kw = 0.0;
};

// Tank-level term B.
double level_penalty(double tank_level, bool water_quality, const RewardConfig& cfg);

double reward_v1(const RewardContext& ctx, const RewardConfig& cfg = {});
double reward_v2(const RewardContext& ctx, const RewardConfig& cfg = {});
double compute_reward(const RewardContext& ctx, const RewardConfig& cfg);

struct Observation {
    double tank_level = 0.0;
    double demand = 0.0;
    int minute_of_day = 0;
    unsigned month = 1;
    Action prev_action = Action::NOP;
    std::array<double, kActionCount> time_running{};
    bool water_quality = false;

    bool operator==(const Observation&) const = default;
};

inline constexpr std::size_t kFeatureCount = 17;
using FeatureVector = std::array<double, kFeatureCount>;

struct EncodingConfig {
    double demand_scale = 1000.0;
    double min_level = 47.0;
    double level_span = 10.0;
    double time_scale = 1440.0;
};

// [level, demand, sin/cos minute, sin/cos month, prev action one-hot (5),
//  time running (5), water quality]
FeatureVector encode_observation(const Observation& obs, const EncodingConfig& cfg = {});

struct Transition {
    FeatureVector obs{};
    Action action = Action::NOP;
    double reward = 0.0;
    FeatureVector next_obs{};
    bool terminal = false;
};

// Exogenous demand indexed by step, each entry carrying its wall-clock minute.
class DemandTrace {
public:
    DemandTrace() = default;
    DemandTrace(std::vector<MinuteStamp> times, std::vector<double> demand);

    static DemandTrace from_records(std::span<const dataset::SensorRecord> records);
    static DemandTrace constant(double demand, std::size_t minutes, MinuteStamp start);

    std::size_t size() const noexcept { return demand_.size(); }
    double demand(std::size_t i) const { return demand_.at(i); }
    MinuteStamp time(std::size_t i) const { return times_.at(i); }

private:
    std::vector<MinuteStamp> times_;
    std::vector<double> demand_;
};

struct EnvConfig {
    RewardConfig reward{};
    EncodingConfig encoding{};
    double dt_minutes = 1.0;
    int episode_length = kMinutesPerDay;
    double safety_level = 50.0;
    double quality_level = 53.0;
    double pump_speed = 1.0;
};

struct StepInfo {
    bool pump_switch = false;
    int pumps_toggled = 0;
    double kw = 0.0;
    double q = 0.0;
    double head = 0.0;
    double demand = 0.0;
    bool overflow = false;
    bool empty = false;
    bool safety_violation = false;
    bool episode_end = false;
    bool dead_headed = false;
    std::size_t step = 0;
    // Wall-clock minute the action was applied in, and the level before it.
    MinuteStamp time;
    double level_before = 0.0;
};

struct StepResult {
    Observation obs;
    double reward = 0.0;
    StepInfo info;
};

class PumpEnv {
public:
    PumpEnv(hydraulics::PlantConfig plant, EnvConfig cfg);

    // start_index selects the first demand sample; minute of day and month
    // are taken from its timestamp.
    Observation reset(double initial_level, std::shared_ptr<const DemandTrace> demand, std::size_t start_index = 0);

    StepResult step(Action action);

    bool initialized() const noexcept { return trace_ != nullptr; }
    const Observation& observation() const;
    double tank_volume() const noexcept { return tank_.volume(); }
    std::size_t steps_taken() const noexcept { return steps_; }
    std::size_t episode_step() const noexcept { return episode_step_; }
    // Demand samples left, counting the one the next step consumes.
    std::size_t remaining() const noexcept;

    const hydraulics::PlantConfig& plant() const noexcept { return plant_; }
    const EnvConfig& config() const noexcept { return cfg_; }

    // Operating point a given action would produce at the current state.
    hydraulics::OperatingPoint preview(Action action) const;

private:
    hydraulics::OperatingPoint evaluate(Action action, double level, double demand) const;
    void zero_accumulators();

    hydraulics::PlantConfig plant_;
    EnvConfig cfg_;
    std::shared_ptr<const DemandTrace> trace_;
    std::size_t cursor_ = 0;
    hydraulics::TankState tank_;
    Observation obs_;
    Action last_applied_ = Action::NOP;
    std::size_t steps_ = 0;
    std::size_t episode_step_ = 0;
};

} // namespace pumpsched::env
