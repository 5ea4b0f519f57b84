#include "pumpsched/hydraulics.hpp"

#include "pumpsched/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace pumpsched::hydraulics {

namespace {

void require_speed(double speed, const char* where)
{
    if (!(speed > 0.0) || !std::isfinite(speed)) {
        throw DomainError(std::string(where) + ": speed ratio must be > 0, got " + std::to_string(speed));
    }
}

} // namespace

std::string to_string(PumpId id)
{
    return std::string(pumpsched::to_string(action_from_index(static_cast<std::size_t>(id))));
}

double PumpModel::runout_flow() const { return std::sqrt(shutoff_head / head_coeff); }

void PumpModel::validate() const
{
    const std::string name = to_string(id);
    if (!(shutoff_head > 0.0)) throw ConfigError(name + ": shutoff head must be > 0");
    if (!(head_coeff > 0.0)) throw ConfigError(name + ": head coefficient must be > 0");
    if (!(eta_bep > 0.0 && eta_bep <= 1.0)) throw ConfigError(name + ": eta_bep must lie in (0, 1]");
    if (!(eta_coeff >= 0.0)) throw ConfigError(name + ": eta_coeff must be >= 0");
    if (!(q_bep > 0.0 && q_bep < runout_flow()))
        throw ConfigError(name + ": q_bep must lie in (0, runout flow)");
    if (!(rated_speed > 0.0)) throw ConfigError(name + ": rated speed must be > 0");
}

PlantConfig PlantConfig::defaults()
{
    PlantConfig cfg;
    cfg.pumps = {
        PumpModel{PumpId::NP1, 74.0, 4.0e-5, 620.0, 0.82, 0.5, 1.0},
        PumpModel{PumpId::NP2, 72.0, 7.0e-5, 470.0, 0.80, 0.5, 1.0},
        PumpModel{PumpId::NP3, 70.0, 1.35e-4, 340.0, 0.78, 0.5, 1.0},
        PumpModel{PumpId::NP4, 68.0, 2.8e-4, 230.0, 0.75, 0.5, 1.0},
    };
    return cfg;
}

void PlantConfig::validate() const
{
    for (std::size_t i = 0; i < pumps.size(); ++i) {
        if (static_cast<std::size_t>(pumps[i].id) != i) throw ConfigError("pumps must be listed in order NP1..NP4");
        pumps[i].validate();
    }
    for (std::size_t i = 1; i < pumps.size(); ++i) {
        if (!(pumps[i - 1].q_bep > pumps[i].q_bep))
            throw ConfigError("pump sizes must be ordered NP1 > NP2 > NP3 > NP4 in q_bep");
    }
    if (!(system.k0 >= 0.0) || !(system.beta >= 0.0) || !(system.c_d >= 0.0))
        throw ConfigError("system curve parameters must be >= 0");
    if (!(tank.area > 0.0) || !(tank.max_level > tank.min_level)) throw ConfigError("invalid tank geometry");
    if (!(rho > 0.0)) throw ConfigError("fluid density must be > 0");
}

SystemCurve system_curve(double tank_level, double demand, const SystemCurveConfig& params)
{
    if (!(demand >= 0.0)) throw DomainError("system_curve: demand must be >= 0");
    return SystemCurve{tank_level + params.c_d * demand, params.k0 / (1.0 + params.beta * demand)};
}

double pump_head(const PumpModel& pump, double q, double speed)
{
    require_speed(speed, "pump_head");
    return speed * speed * pump.shutoff_head - pump.head_coeff * q * q;
}

double corrected_peak_efficiency(double eta_rated, double speed, const AckeretConfig& ackeret)
{
    const double ratio = (1.0 - ackeret.v) + ackeret.v * std::pow(speed, ackeret.inv_alpha);
    return 1.0 - (1.0 - eta_rated) / ratio;
}

double efficiency_at(const PumpModel& pump, double q, double speed, const AckeretConfig& ackeret)
{
    require_speed(speed, "efficiency_at");
    // Points of the rated curve keep their efficiency when moved along the
    // affinity parabola, so the offset is measured against n * q_bep.
    const double rel = q / (speed * pump.q_bep) - 1.0;
    const double peak = corrected_peak_efficiency(pump.eta_bep, speed, ackeret);
    return std::max(0.0, peak - pump.eta_coeff * rel * rel);
}

double hydraulic_power(double q, double head, double rho)
{
    return q * rho * kGravity * head / 3.6e6;
}

double electrical_power(const OperatingPoint& point, double eta)
{
    if (!(eta > 0.0)) throw DomainError("electrical_power: efficiency must be > 0");
    if (point.dead_headed || point.q <= 0.0) return 0.0;
    return point.p_hydraulic / eta;
}

OperatingPoint operating_point(const PumpModel& pump, const SystemCurve& sys, double speed,
                               const AckeretConfig& ackeret, double rho)
{
    require_speed(speed, "operating_point");
    OperatingPoint op;
    const double shutoff = speed * speed * pump.shutoff_head;
    if (shutoff <= sys.static_head) {
        op.dead_headed = true;
        op.head = shutoff;
        op.eta = efficiency_at(pump, 0.0, speed, ackeret);
        return op;
    }
    op.q = std::sqrt((shutoff - sys.static_head) / (pump.head_coeff + sys.slope));
    op.head = sys.head_at(op.q);
    op.eta = efficiency_at(pump, op.q, speed, ackeret);
    op.p_hydraulic = hydraulic_power(op.q, op.head, rho);
    if (op.eta > 0.0) {
        op.p_electric = electrical_power(op, op.eta);
    } else {
        // Efficiency curve floored at zero: the point is outside the usable
        // range of the pump model.
        throw ConfigError("operating_point: " + to_string(pump.id) + " runs at zero efficiency (q = "
                          + std::to_string(op.q) + ")");
    }
    return op;
}

PumpModel scale_curve(const PumpModel& pump, double speed)
{
    require_speed(speed, "scale_curve");
    PumpModel out = pump;
    out.shutoff_head = speed * speed * pump.shutoff_head;
    out.q_bep = speed * pump.q_bep;
    return out;
}

TankState TankState::at_level(double level, const TankConfig& cfg)
{
    return TankState{(level - cfg.min_level) * cfg.area};
}

TankUpdate tank_update(const TankState& tank, double q_in, double demand, double dt_minutes, const TankConfig& cfg)
{
    if (!(dt_minutes > 0.0)) throw DomainError("tank_update: dt must be > 0");
    TankUpdate out;
    double volume = tank.volume() + (q_in - demand) * (dt_minutes / 60.0);
    const double cap = cfg.capacity();
    if (volume > cap) {
        out.overflow = true;
        volume = cap;
    } else if (volume < 0.0) {
        out.empty = true;
        volume = 0.0;
    }
    out.tank = TankState::with_volume(volume);
    return out;
}

namespace {

// Ordinary least squares y = a + b x. Returns false when x has no spread.
bool fit_line(std::span<const double> x, std::span<const double> y, double& a, double& b)
{
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 1e-12 * std::max(1.0, mx * mx)) {
        a = my;
        b = 0.0;
        return false;
    }
    b = sxy / sxx;
    a = my - b * mx;
    return true;
}

} // namespace

CalibrationResult calibrate_pump(const PumpModel& prior, std::span<const PumpSample> samples,
                                 const SystemCurveConfig& system, double rho)
{
    std::vector<double> q2, head, rel2, eta;
    for (const auto& s : samples) {
        if (!(s.q > 0.0) || !(s.kw > 0.0)) continue;
        const SystemCurve sys = system_curve(s.tank_level, s.demand, system);
        const double h = sys.head_at(s.q);
        q2.push_back(s.q * s.q);
        head.push_back(h);
        const double rel = s.q / prior.q_bep - 1.0;
        rel2.push_back(rel * rel);
        eta.push_back(hydraulic_power(s.q, h, rho) / s.kw);
    }
    if (q2.size() < 2) throw ValidationError({"calibrate " + to_string(prior.id) + ": need at least 2 running samples"});

    CalibrationResult result;
    result.pump = prior;
    result.samples = q2.size();

    double a = 0, b = 0;
    if (fit_line(q2, head, a, b)) {
        result.pump.shutoff_head = a;
        result.pump.head_coeff = -b;
    } else {
        // Single operating point: keep the curvature, move the curve through it.
        result.pump.shutoff_head = a + prior.head_coeff * q2.front();
    }
    if (fit_line(rel2, eta, a, b)) {
        result.pump.eta_bep = a;
        result.pump.eta_coeff = -b;
    } else {
        result.pump.eta_bep = a + prior.eta_coeff * rel2.front();
    }

    double sse = 0;
    for (std::size_t i = 0; i < q2.size(); ++i) {
        const double r = result.pump.shutoff_head - result.pump.head_coeff * q2[i] - head[i];
        sse += r * r;
    }
    result.head_rmse = std::sqrt(sse / static_cast<double>(q2.size()));
    result.pump.validate();
    return result;
}

} // namespace pumpsched::hydraulics
