#include "pumpsched/config.hpp"

#include "pumpsched/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace pumpsched {

using nlohmann::json;

env::RewardVariant parse_reward_variant(const std::string& s)
{
    if (s == "v1" || s == "V1") return env::RewardVariant::V1;
    if (s == "v2" || s == "V2") return env::RewardVariant::V2;
    throw ConfigError("unknown reward variant '" + s + "' (expected v1 or v2)");
}

std::string to_string(env::RewardVariant v) { return v == env::RewardVariant::V1 ? "v1" : "v2"; }

void AppConfig::validate() const
{
    plant.validate();
    env.reward.validate();
    train.validate();
    if (!(initial_level >= plant.tank.min_level && initial_level <= plant.tank.max_level))
        throw ConfigError("initial_level outside the tank range");
    if (replay.capacity == 0) throw ConfigError("replay capacity must be > 0");
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

hydraulics::PumpId pump_id(const std::string& s)
{
    if (s == "NP1") return hydraulics::PumpId::NP1;
    if (s == "NP2") return hydraulics::PumpId::NP2;
    if (s == "NP3") return hydraulics::PumpId::NP3;
    if (s == "NP4") return hydraulics::PumpId::NP4;
    throw ConfigError("unknown pump id '" + s + "'");
}

} // namespace

AppConfig config_from_json(const json& j)
{
    AppConfig cfg;
    try {
        if (j.contains("pumps")) {
            const auto& arr = j.at("pumps");
            if (!arr.is_array() || arr.size() != kPumpCount) throw ConfigError("'pumps' must list exactly 4 pumps");
            for (std::size_t i = 0; i < kPumpCount; ++i) {
                const auto& p = arr[i];
                auto& m = cfg.plant.pumps[i];
                m.id = pump_id(p.at("id").get<std::string>());
                m.shutoff_head = p.at("h0").get<double>();
                m.head_coeff = p.at("c").get<double>();
                m.q_bep = p.at("q_bep").get<double>();
                m.eta_bep = p.at("eta_bep").get<double>();
                m.eta_coeff = p.at("eta_coeff").get<double>();
                read(p, "rated_speed", m.rated_speed);
            }
        }
        if (j.contains("system")) {
            const auto& s = j.at("system");
            read(s, "k0", cfg.plant.system.k0);
            read(s, "beta", cfg.plant.system.beta);
            read(s, "c_d", cfg.plant.system.c_d);
        }
        if (j.contains("tank")) {
            const auto& t = j.at("tank");
            read(t, "area", cfg.plant.tank.area);
            read(t, "min_level", cfg.plant.tank.min_level);
            read(t, "max_level", cfg.plant.tank.max_level);
        }
        if (j.contains("ackeret")) {
            read(j.at("ackeret"), "V", cfg.plant.ackeret.v);
            read(j.at("ackeret"), "inv_alpha", cfg.plant.ackeret.inv_alpha);
        }
        read(j, "rho", cfg.plant.rho);

        if (j.contains("env")) {
            const auto& e = j.at("env");
            auto& r = cfg.env.reward;
            if (e.contains("reward")) r.variant = parse_reward_variant(e.at("reward").get<std::string>());
            read(e, "psi", r.psi);
            read(e, "omega_switch", r.omega_switch);
            read(e, "omega_base", r.omega_base);
            read(e, "eq1_literal", r.eq1_literal);
            read(e, "level_eps", r.level_eps);
            if (e.contains("thresholds")) {
                const auto& t = e.at("thresholds");
                read(t, "low", r.thresholds.low);
                read(t, "safety", r.thresholds.safety);
                read(t, "quality", r.thresholds.quality);
                read(t, "high", r.thresholds.high);
            }
            read(e, "dt_minutes", cfg.env.dt_minutes);
            read(e, "episode_length", cfg.env.episode_length);
            read(e, "safety_level", cfg.env.safety_level);
            read(e, "quality_level", cfg.env.quality_level);
            read(e, "demand_scale", cfg.env.encoding.demand_scale);
            read(e, "pump_speed", cfg.env.pump_speed);
            read(e, "initial_level", cfg.initial_level);
        }
        cfg.env.encoding.min_level = cfg.plant.tank.min_level;
        cfg.env.encoding.level_span = cfg.plant.tank.max_level - cfg.plant.tank.min_level;

        if (j.contains("demand")) {
            const auto& d = j.at("demand");
            auto& p = cfg.demand;
            read(d, "mean", p.mean);
            read(d, "daily_amplitude", p.daily_amplitude);
            read(d, "semidaily_amplitude", p.semidaily_amplitude);
            read(d, "peak_minute", p.peak_minute);
            read(d, "seasonal_amplitude", p.seasonal_amplitude);
            read(d, "seasonal_peak_day", p.seasonal_peak_day);
            read(d, "noise_amplitude", p.noise_amplitude);
            read(d, "noise_smoothing", p.noise_smoothing);
            if (d.contains("start")) {
                const auto s = d.at("start").get<std::string>();
                auto ts = MinuteStamp::parse(s);
                if (!ts) throw ConfigError("demand.start: bad timestamp '" + s + "'");
                p.start = *ts;
            }
        }
        if (j.contains("operator")) {
            const auto& o = j.at("operator");
            read(o, "start_level", cfg.op.start_level);
            read(o, "stop_level", cfg.op.stop_level);
            read(o, "night_fill_level", cfg.op.night_fill_level);
            read(o, "night_start_minute", cfg.op.night_start_minute);
            read(o, "night_end_minute", cfg.op.night_end_minute);
            read(o, "emergency_level", cfg.op.emergency_level);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            auto& c = cfg.train;
            read(t, "gamma", c.gamma);
            read(t, "learning_rate", c.learning_rate);
            read(t, "batch_size", c.batch_size);
            read(t, "heads", c.heads);
            read(t, "hidden", c.hidden);
            read(t, "shared_trunk", c.shared_trunk);
            read(t, "target_sync", c.target_sync);
            read(t, "grad_clip", c.grad_clip);
            read(t, "huber_delta", c.huber_delta);
            read(t, "steps", cfg.train_steps);
            read(t, "log_every", cfg.log_every);
        }
        if (j.contains("replay")) {
            const auto& r = j.at("replay");
            read(r, "capacity", cfg.replay.capacity);
            read(r, "alpha", cfg.replay.alpha);
            read(r, "eps", cfg.replay.eps);
            read(r, "beta_start", cfg.replay.beta_start);
            read(r, "beta_end", cfg.replay.beta_end);
        }
        if (j.contains("service")) {
            const auto& s = j.at("service");
            read(s, "session_ttl_seconds", cfg.service.session_ttl_seconds);
            read(s, "timed_rate", cfg.service.timed_rate);
            read(s, "export_dir", cfg.service.export_dir);
            read(s, "threads", cfg.service.threads);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

json to_json(const AppConfig& cfg)
{
    json pumps = json::array();
    for (const auto& p : cfg.plant.pumps) {
        pumps.push_back({{"id", hydraulics::to_string(p.id)},
                         {"h0", p.shutoff_head},
                         {"c", p.head_coeff},
                         {"q_bep", p.q_bep},
                         {"eta_bep", p.eta_bep},
                         {"eta_coeff", p.eta_coeff},
                         {"rated_speed", p.rated_speed}});
    }
    const auto& r = cfg.env.reward;
    const auto& d = cfg.demand;
    const auto& t = cfg.train;
    return json{
        {"pumps", pumps},
        {"system", {{"k0", cfg.plant.system.k0}, {"beta", cfg.plant.system.beta}, {"c_d", cfg.plant.system.c_d}}},
        {"tank",
         {{"area", cfg.plant.tank.area}, {"min_level", cfg.plant.tank.min_level}, {"max_level", cfg.plant.tank.max_level}}},
        {"ackeret", {{"V", cfg.plant.ackeret.v}, {"inv_alpha", cfg.plant.ackeret.inv_alpha}}},
        {"rho", cfg.plant.rho},
        {"env",
         {{"reward", to_string(r.variant)},
          {"psi", r.psi},
          {"omega_switch", r.omega_switch},
          {"omega_base", r.omega_base},
          {"eq1_literal", r.eq1_literal},
          {"level_eps", r.level_eps},
          {"thresholds",
           {{"low", r.thresholds.low},
            {"safety", r.thresholds.safety},
            {"quality", r.thresholds.quality},
            {"high", r.thresholds.high}}},
          {"dt_minutes", cfg.env.dt_minutes},
          {"episode_length", cfg.env.episode_length},
          {"safety_level", cfg.env.safety_level},
          {"quality_level", cfg.env.quality_level},
          {"demand_scale", cfg.env.encoding.demand_scale},
          {"pump_speed", cfg.env.pump_speed},
          {"initial_level", cfg.initial_level}}},
        {"demand",
         {{"mean", d.mean},
          {"daily_amplitude", d.daily_amplitude},
          {"semidaily_amplitude", d.semidaily_amplitude},
          {"peak_minute", d.peak_minute},
          {"seasonal_amplitude", d.seasonal_amplitude},
          {"seasonal_peak_day", d.seasonal_peak_day},
          {"noise_amplitude", d.noise_amplitude},
          {"noise_smoothing", d.noise_smoothing},
          {"start", d.start.to_string()}}},
        {"operator",
         {{"start_level", cfg.op.start_level},
          {"stop_level", cfg.op.stop_level},
          {"night_fill_level", cfg.op.night_fill_level},
          {"night_start_minute", cfg.op.night_start_minute},
          {"night_end_minute", cfg.op.night_end_minute},
          {"emergency_level", cfg.op.emergency_level}}},
        {"train",
         {{"gamma", t.gamma},
          {"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"heads", t.heads},
          {"hidden", t.hidden},
          {"shared_trunk", t.shared_trunk},
          {"target_sync", t.target_sync},
          {"grad_clip", t.grad_clip},
          {"huber_delta", t.huber_delta},
          {"steps", cfg.train_steps},
          {"log_every", cfg.log_every}}},
        {"replay",
         {{"capacity", cfg.replay.capacity},
          {"alpha", cfg.replay.alpha},
          {"eps", cfg.replay.eps},
          {"beta_start", cfg.replay.beta_start},
          {"beta_end", cfg.replay.beta_end}}},
        {"service",
         {{"session_ttl_seconds", cfg.service.session_ttl_seconds},
          {"timed_rate", cfg.service.timed_rate},
          {"export_dir", cfg.service.export_dir},
          {"threads", cfg.service.threads}}},
    };
}

AppConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    AppConfig cfg = config_from_json(j);
    cfg.validate();
    return cfg;
}

} // namespace pumpsched
