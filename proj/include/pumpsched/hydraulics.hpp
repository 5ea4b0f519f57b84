#pragma once

// Pump and tank physics for the single-tank distribution system.
//
// Units throughout: flow in m^3/h, head and levels in m (geodetic), power in
// kW, time in minutes, speed as a ratio of rated speed.

#include "pumpsched/action.hpp"

#include <array>
#include <span>
#include <string>

namespace pumpsched::hydraulics {

inline constexpr double kGravity = 9.81;

enum class PumpId { NP1 = 0, NP2 = 1, NP3 = 2, NP4 = 3 };

std::string to_string(PumpId id);

// Quadratic head curve H(Q) = n^2 h0 - c Q^2 and a parabolic efficiency curve
// around the best efficiency point.
struct PumpModel {
    PumpId id = PumpId::NP1;
    double shutoff_head = 0.0; // h0, head at Q = 0 and rated speed
    double head_coeff = 0.0;   // c, m/(m^3/h)^2
    double q_bep = 0.0;        // flow at the best efficiency point, rated speed
    double eta_bep = 0.0;      // peak efficiency at rated speed
    double eta_coeff = 0.0;    // efficiency drop per unit squared relative BEP offset
    double rated_speed = 1.0;

    // Flow where the rated-speed head curve reaches zero.
    double runout_flow() const;

    // Throws ConfigError when the coefficients are unusable.
    void validate() const;
};

struct SystemCurveConfig {
    double k0 = 2.0e-5;   // loss coefficient at zero demand
    double beta = 1.5e-3; // slope reduction per m^3/h of demand
    double c_d = 2.0e-3;  // static head rise per m^3/h of demand
};

// Required head H(Q) = static_head + slope Q^2.
struct SystemCurve {
    double static_head = 0.0;
    double slope = 0.0;

    double head_at(double q) const noexcept { return static_head + slope * q * q; }
};

// Reynolds-number correction of peak efficiency under speed change:
//   (1 - eta_rated) / (1 - eta_n) = (1 - V) + V (n / n_rated)^inv_alpha
struct AckeretConfig {
    double v = 0.5;
    double inv_alpha = 0.2;

    static AckeretConfig identity() { return AckeretConfig{0.0, 0.0}; }
};

struct TankConfig {
    double area = 1600.0;
    double min_level = 47.0;
    double max_level = 57.0;

    double capacity() const noexcept { return (max_level - min_level) * area; }
};

// Tank content. Volume is the stored quantity so that long horizons keep the
// water ledger exact; level is derived.
class TankState {
public:
    TankState() = default;

    static TankState at_level(double level, const TankConfig& cfg);
    static TankState with_volume(double volume) { return TankState{volume}; }

    double volume() const noexcept { return volume_; }
    double level(const TankConfig& cfg) const noexcept { return cfg.min_level + volume_ / cfg.area; }

private:
    explicit TankState(double volume) : volume_(volume) {}
    double volume_ = 0.0;
};

struct TankUpdate {
    TankState tank;
    bool overflow = false;
    bool empty = false;
};

struct OperatingPoint {
    double q = 0.0;
    double head = 0.0;
    double p_hydraulic = 0.0;
    double p_electric = 0.0;
    double eta = 0.0;
    bool dead_headed = false;

    bool operator==(const OperatingPoint&) const = default;
};

struct PlantConfig {
    std::array<PumpModel, kPumpCount> pumps{};
    SystemCurveConfig system{};
    TankConfig tank{};
    AckeretConfig ackeret{};
    double rho = 1000.0;

    const PumpModel& pump(Action a) const { return pumps.at(index_of(a)); }

    // Placeholder coefficients; see config/default.json.
    static PlantConfig defaults();
    void validate() const;
};

SystemCurve system_curve(double tank_level, double demand, const SystemCurveConfig& params);

double pump_head(const PumpModel& pump, double q, double speed = 1.0);

// Peak efficiency after the Ackeret correction for the given speed ratio.
double corrected_peak_efficiency(double eta_rated, double speed, const AckeretConfig& ackeret);

double efficiency_at(const PumpModel& pump, double q, double speed, const AckeretConfig& ackeret);

double hydraulic_power(double q, double head, double rho);

double electrical_power(const OperatingPoint& point, double eta);

OperatingPoint operating_point(const PumpModel& pump, const SystemCurve& sys, double speed,
                               const AckeretConfig& ackeret, double rho = 1000.0);

// Affinity-scaled copy: h0 -> n^2 h0, q_bep -> n q_bep, same curvature.
PumpModel scale_curve(const PumpModel& pump, double speed);

TankUpdate tank_update(const TankState& tank, double q_in, double demand, double dt_minutes,
                       const TankConfig& cfg);

// One minute-scale sample of a running pump, as found in operation logs.
struct PumpSample {
    double q = 0.0;
    double kw = 0.0;
    double tank_level = 0.0;
    double demand = 0.0;
};

struct CalibrationResult {
    PumpModel pump;
    std::size_t samples = 0;
    double head_rmse = 0.0;
};

// Least-squares fit of (h0, c) from heads implied by the system curve and of
// (eta_bep, eta_coeff) from kW readings. q_bep is kept from the prior.
CalibrationResult calibrate_pump(const PumpModel& prior, std::span<const PumpSample> samples,
                                 const SystemCurveConfig& system, double rho = 1000.0);

} // namespace pumpsched::hydraulics
