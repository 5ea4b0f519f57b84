#include "pumpsched/env.hpp"

#include "pumpsched/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace pumpsched::env {

void RewardConfig::validate() const
{
    if (!(psi > 0.0)) throw ConfigError("reward: psi must be > 0");
    if (!(omega_base >= 1.0 && omega_switch > omega_base))
        throw ConfigError("reward: require omega_switch > omega_base >= 1");
    const auto& t = thresholds;
    if (!(t.low < t.safety && t.safety < t.quality && t.quality < t.high))
        throw ConfigError("reward: thresholds must be strictly increasing");
}

double level_penalty(double level, bool water_quality, const RewardConfig& cfg)
{
    const auto& t = cfg.thresholds;
    if (level > t.low && level < t.safety) return std::abs(level - t.safety);
    if (level <= t.low || level >= t.high - cfg.level_eps) return 1.0;
    if (level >= t.safety && level < t.quality && !water_quality) return -1.0;
    return 0.0;
}

namespace {

void require_power(const RewardContext& ctx)
{
    if (!(ctx.kw > 0.0)) {
        throw ConfigError("reward: " + std::string(to_string(ctx.action))
                          + " is running with kW = 0; the pump curve must deliver power against this system curve");
    }
}

double running_term(const RewardContext& ctx, double omega)
{
    return std::log(1.0 / (ctx.time_running[index_of(ctx.action)] + omega));
}

} // namespace

double reward_v1(const RewardContext& ctx, const RewardConfig& cfg)
{
    const bool keep = ctx.prev_action == ctx.action || ctx.time_running[index_of(ctx.action)] == 0.0
                   || ctx.action == Action::NOP;
    const double omega = keep ? cfg.omega_base : cfg.omega_switch;
    const double b = level_penalty(ctx.tank_level, ctx.water_quality, cfg);
    if (ctx.action != Action::NOP) {
        require_power(ctx);
        const double efficiency = cfg.eq1_literal ? std::exp(-ctx.kw / ctx.q) : std::exp(-ctx.q / ctx.kw);
        return efficiency - b * cfg.psi + running_term(ctx, omega);
    }
    return -b * cfg.psi + running_term(ctx, omega);
}

double reward_v2(const RewardContext& ctx, const RewardConfig& cfg)
{
    const bool keep = ctx.prev_action == ctx.action || ctx.time_running[index_of(ctx.action)] == 0.0;
    const double omega = keep ? cfg.omega_base : cfg.omega_switch;
    const double b = level_penalty(ctx.tank_level, ctx.water_quality, cfg);
    if (ctx.action != Action::NOP) {
        require_power(ctx);
        return -std::exp(-1.0 / ctx.kw) - b * cfg.psi + running_term(ctx, omega);
    }
    return -b * cfg.psi + running_term(ctx, omega);
}

double compute_reward(const RewardContext& ctx, const RewardConfig& cfg)
{
    return cfg.variant == RewardVariant::V1 ? reward_v1(ctx, cfg) : reward_v2(ctx, cfg);
}

FeatureVector encode_observation(const Observation& obs, const EncodingConfig& cfg)
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    FeatureVector f{};
    std::size_t i = 0;
    f[i++] = (obs.tank_level - cfg.min_level) / cfg.level_span;
    f[i++] = obs.demand / cfg.demand_scale;
    const double minute_angle = two_pi * (obs.minute_of_day % kMinutesPerDay) / kMinutesPerDay;
    f[i++] = std::sin(minute_angle);
    f[i++] = std::cos(minute_angle);
    const double month_angle = two_pi * (static_cast<double>(obs.month) - 1.0) / 12.0;
    f[i++] = std::sin(month_angle);
    f[i++] = std::cos(month_angle);
    for (std::size_t a = 0; a < kActionCount; ++a) f[i++] = index_of(obs.prev_action) == a ? 1.0 : 0.0;
    for (std::size_t a = 0; a < kActionCount; ++a) f[i++] = obs.time_running[a] / cfg.time_scale;
    f[i++] = obs.water_quality ? 1.0 : 0.0;
    return f;
}

DemandTrace::DemandTrace(std::vector<MinuteStamp> times, std::vector<double> demand)
    : times_(std::move(times)), demand_(std::move(demand))
{
    if (times_.size() != demand_.size()) throw DomainError("DemandTrace: times and demand differ in length");
    for (double d : demand_) {
        if (!(d >= 0.0)) throw DomainError("DemandTrace: demand must be >= 0");
    }
}

DemandTrace DemandTrace::from_records(std::span<const dataset::SensorRecord> records)
{
    std::vector<MinuteStamp> t;
    std::vector<double> d;
    t.reserve(records.size());
    d.reserve(records.size());
    for (const auto& r : records) {
        t.push_back(r.timestamp);
        d.push_back(r.demand);
    }
    return DemandTrace(std::move(t), std::move(d));
}

DemandTrace DemandTrace::constant(double demand, std::size_t minutes, MinuteStamp start)
{
    std::vector<MinuteStamp> t(minutes);
    for (std::size_t i = 0; i < minutes; ++i) t[i] = start + static_cast<std::int64_t>(i);
    return DemandTrace(std::move(t), std::vector<double>(minutes, demand));
}

PumpEnv::PumpEnv(hydraulics::PlantConfig plant, EnvConfig cfg) : plant_(std::move(plant)), cfg_(std::move(cfg))
{
    plant_.validate();
    cfg_.reward.validate();
    if (!(cfg_.dt_minutes > 0.0)) throw ConfigError("env: dt must be > 0");
    if (cfg_.episode_length <= 0) throw ConfigError("env: episode length must be > 0");
    if (!(cfg_.pump_speed > 0.0 && cfg_.pump_speed <= 1.0)) throw ConfigError("env: pump speed must lie in (0, 1]");
}

Observation PumpEnv::reset(double initial_level, std::shared_ptr<const DemandTrace> demand, std::size_t start_index)
{
    const auto& tank = plant_.tank;
    if (!(initial_level >= tank.min_level && initial_level <= tank.max_level)) {
        throw DomainError("reset: initial level " + std::to_string(initial_level) + " outside ["
                          + std::to_string(tank.min_level) + ", " + std::to_string(tank.max_level) + "]");
    }
    if (!demand || start_index >= demand->size()) throw DomainError("reset: no demand sample at the start index");

    trace_ = std::move(demand);
    cursor_ = start_index;
    tank_ = hydraulics::TankState::at_level(initial_level, tank);
    obs_ = Observation{};
    obs_.tank_level = initial_level;
    obs_.demand = trace_->demand(cursor_);
    obs_.minute_of_day = trace_->time(cursor_).minute_of_day();
    obs_.month = trace_->time(cursor_).month();
    zero_accumulators();
    last_applied_ = Action::NOP;
    steps_ = 0;
    episode_step_ = 0;
    return obs_;
}

void PumpEnv::zero_accumulators()
{
    obs_.time_running.fill(0.0);
    obs_.water_quality = false;
    obs_.prev_action = Action::NOP;
}

const Observation& PumpEnv::observation() const
{
    if (!trace_) throw StateError("environment used before reset");
    return obs_;
}

std::size_t PumpEnv::remaining() const noexcept
{
    if (!trace_ || cursor_ >= trace_->size()) return 0;
    return trace_->size() - cursor_;
}

hydraulics::OperatingPoint PumpEnv::evaluate(Action action, double level, double demand) const
{
    if (!is_pump(action)) return {};
    const auto sys = hydraulics::system_curve(level, demand, plant_.system);
    return hydraulics::operating_point(plant_.pump(action), sys, cfg_.pump_speed, plant_.ackeret, plant_.rho);
}

hydraulics::OperatingPoint PumpEnv::preview(Action action) const
{
    if (!trace_) throw StateError("environment used before reset");
    if (cursor_ >= trace_->size()) throw StateError("demand trace exhausted");
    return evaluate(action, obs_.tank_level, trace_->demand(cursor_));
}

StepResult PumpEnv::step(Action action)
{
    if (!trace_) throw StateError("step called before reset");
    if (episode_step_ == static_cast<std::size_t>(cfg_.episode_length)) {
        zero_accumulators();
        episode_step_ = 0;
    }
    if (cursor_ >= trace_->size()) {
        throw StateError("demand trace exhausted at step " + std::to_string(steps_) + ": no demand after "
                         + trace_->time(trace_->size() - 1).to_string());
    }

    const double demand = trace_->demand(cursor_);
    const double level = obs_.tank_level;
    const auto op = evaluate(action, level, demand);
    const auto upd = hydraulics::tank_update(tank_, op.q, demand, cfg_.dt_minutes, plant_.tank);
    const double new_level = upd.tank.level(plant_.tank);

    RewardContext ctx;
    ctx.action = action;
    ctx.prev_action = obs_.prev_action;
    ctx.time_running = obs_.time_running;
    ctx.tank_level = new_level;
    ctx.water_quality = obs_.water_quality;
    ctx.q = op.q;
    ctx.kw = op.p_electric;

    StepResult out;
    out.reward = compute_reward(ctx, cfg_.reward);
    out.info.pumps_toggled = pump_toggles(last_applied_, action);
    out.info.pump_switch = out.info.pumps_toggled > 0;
    out.info.kw = op.p_electric;
    out.info.q = op.q;
    out.info.head = op.head;
    out.info.demand = demand;
    out.info.overflow = upd.overflow;
    out.info.empty = upd.empty;
    out.info.safety_violation = new_level < cfg_.safety_level;
    out.info.dead_headed = op.dead_headed;
    out.info.step = steps_;
    out.info.time = trace_->time(cursor_);
    out.info.level_before = level;

    tank_ = upd.tank;
    obs_.tank_level = new_level;
    obs_.time_running[index_of(action)] += cfg_.dt_minutes;
    obs_.water_quality = obs_.water_quality || new_level < cfg_.quality_level;
    obs_.prev_action = action;
    last_applied_ = action;

    ++cursor_;
    if (cursor_ < trace_->size()) {
        obs_.demand = trace_->demand(cursor_);
        const MinuteStamp t = trace_->time(cursor_);
        obs_.minute_of_day = t.minute_of_day();
        obs_.month = t.month();
    } else {
        // Past the end of the trace the last demand is held for the observation.
        const MinuteStamp t = out.info.time + static_cast<std::int64_t>(std::lround(cfg_.dt_minutes));
        obs_.minute_of_day = t.minute_of_day();
        obs_.month = t.month();
    }

    ++steps_;
    ++episode_step_;
    out.info.episode_end = episode_step_ == static_cast<std::size_t>(cfg_.episode_length);
    out.obs = obs_;
    return out;
}

} // namespace pumpsched::env
