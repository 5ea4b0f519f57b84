#include "pumpsched/service/session.hpp"

#include "pumpsched/errors.hpp"
#include "pumpsched/rollout.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace pumpsched::service {

namespace {

Json observation_json(const env::Observation& o, MinuteStamp time)
{
    Json running = Json::object();
    for (Action a : kAllActions) running[std::string(to_string(a))] = o.time_running[index_of(a)];
    return Json{{"tank_level", o.tank_level},
                {"demand", o.demand},
                {"minute_of_day", o.minute_of_day},
                {"month", o.month},
                {"time", time.to_string()},
                {"prev_action", std::string(to_string(o.prev_action))},
                {"time_running", running},
                {"water_quality", o.water_quality}};
}

std::shared_ptr<const env::DemandTrace> make_trace(const Scenario& s, const AppConfig& cfg)
{
    switch (s.source) {
    case Scenario::Source::Constant:
        return std::make_shared<const env::DemandTrace>(
            env::DemandTrace::constant(s.constant_demand, s.minutes, cfg.demand.start));
    case Scenario::Source::File: {
        std::ifstream in(s.path);
        if (!in) throw ValidationError({"demand.path: cannot open " + s.path});
        const auto records =
            dataset::parse_log(in, dataset::LogLimits{cfg.plant.tank.min_level, cfg.plant.tank.max_level});
        return std::make_shared<const env::DemandTrace>(env::DemandTrace::from_records(records));
    }
    case Scenario::Source::Synth:
        break;
    }
    return std::make_shared<const env::DemandTrace>(
        env::DemandTrace::from_records(dataset::synthesize_demand(s.days, s.seed, cfg.demand)));
}

env::EnvConfig env_config(const AppConfig& cfg, const Scenario& s)
{
    env::EnvConfig e = cfg.env;
    e.reward.variant = s.reward;
    return e;
}

} // namespace

Scenario parse_scenario(const Json& body, const AppConfig& defaults)
{
    Scenario s;
    s.initial_level = defaults.initial_level;
    s.reward = defaults.env.reward.variant;
    s.rate = defaults.service.timed_rate;
    if (body.is_null()) return s;
    if (!body.is_object()) throw ValidationError({"scenario must be a JSON object"});

    std::vector<std::string> issues;
    auto number = [&](const Json& j, const char* key, double& out) {
        if (!j.contains(key)) return;
        if (!j.at(key).is_number()) {
            issues.push_back(std::string(key) + ": expected a number");
            return;
        }
        out = j.at(key).get<double>();
    };
    number(body, "initial_level", s.initial_level);
    if (!(s.initial_level >= defaults.plant.tank.min_level && s.initial_level <= defaults.plant.tank.max_level)) {
        std::ostringstream msg;
        msg << "initial_level: " << s.initial_level << " outside [" << defaults.plant.tank.min_level << ", "
            << defaults.plant.tank.max_level << "] m";
        issues.push_back(msg.str());
    }
    if (body.contains("reward")) {
        try {
            s.reward = parse_reward_variant(body.at("reward").get<std::string>());
        } catch (const std::exception&) {
            issues.push_back("reward: expected \"v1\" or \"v2\"");
        }
    }
    if (body.contains("demand")) {
        const auto& d = body.at("demand");
        const std::string source = d.value("source", "synth");
        if (source == "synth") {
            s.source = Scenario::Source::Synth;
            double days = s.days, seed = static_cast<double>(s.seed);
            number(d, "days", days);
            number(d, "seed", seed);
            if (days < 1 || days > 3660) issues.push_back("demand.days: must be within 1..3660");
            s.days = static_cast<int>(days);
            s.seed = static_cast<std::uint64_t>(std::max(0.0, seed));
        } else if (source == "constant") {
            s.source = Scenario::Source::Constant;
            double minutes = static_cast<double>(s.minutes);
            number(d, "value", s.constant_demand);
            number(d, "minutes", minutes);
            if (s.constant_demand < 0) issues.push_back("demand.value: must be >= 0");
            if (minutes < 1) issues.push_back("demand.minutes: must be >= 1");
            s.minutes = static_cast<std::size_t>(std::max(1.0, minutes));
        } else if (source == "file") {
            s.source = Scenario::Source::File;
            s.path = d.value("path", "");
            if (s.path.empty()) issues.push_back("demand.path: required for source \"file\"");
        } else {
            issues.push_back("demand.source: unknown '" + source + "'");
        }
    }
    if (body.contains("clock")) {
        const auto& c = body.at("clock");
        const std::string mode = c.value("mode", "manual");
        if (mode == "manual") {
            s.clock = ClockMode::Manual;
        } else if (mode == "timed") {
            s.clock = ClockMode::Timed;
            number(c, "rate", s.rate);
            if (!(s.rate > 0.0 && s.rate <= 1000.0)) issues.push_back("clock.rate: must be within (0, 1000]");
        } else {
            issues.push_back("clock.mode: expected \"manual\" or \"timed\"");
        }
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
    return s;
}

Json error_message(const std::string& code, const std::string& message, const Json& seq)
{
    Json j{{"v", kProtocolVersion}, {"kind", "error"}, {"code", code}, {"message", message}};
    if (!seq.is_null()) j["seq"] = seq;
    return j;
}

Session::Session(std::string id, const AppConfig& cfg, const Scenario& scenario, Clock::time_point now)
    : id_(std::move(id)), scenario_(scenario), env_(cfg.plant, env_config(cfg, scenario)),
      trace_(make_trace(scenario, cfg)), latched_(Action::NOP), created_(now), last_active_(now), last_tick_(now)
{
    if (trace_->size() == 0) throw ValidationError({"demand source is empty"});
    try {
        env_.reset(scenario.initial_level, trace_);
    } catch (const DomainError& e) {
        throw ValidationError({e.what()});
    }
}

Json Session::state_locked(const std::optional<env::StepResult>& step, const Json& seq) const
{
    const std::size_t idx = std::min(records_.size(), trace_->size() - 1);
    Json j{{"v", kProtocolVersion},
           {"kind", "state"},
           {"session", id_},
           {"step", records_.size()},
           {"observation", observation_json(env_.observation(), trace_->time(idx))},
           {"totals",
            {{"kwh", totals_.kwh}, {"switches", totals_.switches}, {"reward", totals_.reward}, {"steps", totals_.steps}}},
           {"clock",
            {{"mode", scenario_.clock == ClockMode::Manual ? "manual" : "timed"},
             {"rate", scenario_.rate},
             {"latched", std::string(to_string(latched_))}}},
           {"remaining", trace_->size() - records_.size()}};
    if (step) {
        const auto& i = step->info;
        j["action"] = std::string(to_string(fields_.back().action));
        j["reward"] = step->reward;
        j["info"] = Json{{"switch", i.pump_switch},
                         {"pumps_toggled", i.pumps_toggled},
                         {"kw", i.kw},
                         {"q", i.q},
                         {"head", i.head},
                         {"demand", i.demand},
                         {"overflow", i.overflow},
                         {"empty", i.empty},
                         {"safety_violation", i.safety_violation},
                         {"episode_end", i.episode_end},
                         {"dead_headed", i.dead_headed},
                         {"time", i.time.to_string()},
                         {"level_before", i.level_before}};
    } else {
        j["action"] = nullptr;
        j["reward"] = nullptr;
        j["info"] = nullptr;
    }
    if (!seq.is_null()) j["seq"] = seq;
    return j;
}

Json Session::state_message() const
{
    std::lock_guard lock(mu_);
    return state_locked(std::nullopt, nullptr);
}

std::vector<Json> Session::step_locked(Action a, const Json& seq)
{
    if (records_.size() >= trace_->size()) {
        exhausted_ = true;
        return {error_message("demand_exhausted", "demand trace exhausted after " + std::to_string(records_.size())
                                                      + " steps", seq)};
    }
    const auto res = env_.step(a);
    records_.push_back(rollout::record_of(res, a));
    fields_.push_back(dataset::TrajectoryFields{a, res.reward, res.obs.water_quality});
    totals_.kwh += res.info.kw * env_.config().dt_minutes / 60.0;
    totals_.switches += static_cast<std::size_t>(res.info.pumps_toggled);
    totals_.reward += res.reward;
    ++totals_.steps;
    last_action_ = a;

    std::vector<Json> out{state_locked(res, seq)};
    if (res.info.episode_end) {
        const std::size_t len = static_cast<std::size_t>(env_.config().episode_length);
        out.push_back(Json{{"v", kProtocolVersion},
                           {"kind", "episode_end"},
                           {"session", id_},
                           {"episode", records_.size() / len},
                           {"step", records_.size()}});
    }
    return out;
}

std::vector<Json> Session::act(const std::string& action_name, const Json& seq, Clock::time_point now)
{
    const auto a = parse_action(action_name);
    std::lock_guard lock(mu_);
    last_active_ = now;
    if (!a) return {error_message("bad_action", "unknown action '" + action_name + "' (expected NP1..NP4 or NOP)", seq)};
    if (scenario_.clock == ClockMode::Timed) {
        latched_ = *a;
        return {state_locked(std::nullopt, seq)};
    }
    latched_ = *a;
    try {
        return step_locked(*a, seq);
    } catch (const std::exception& e) {
        return {error_message("step_failed", e.what(), seq)};
    }
}

std::vector<Json> Session::tick(Clock::time_point now)
{
    std::lock_guard lock(mu_);
    std::vector<Json> out;
    if (scenario_.clock != ClockMode::Timed || exhausted_) {
        last_tick_ = now;
        return out;
    }
    const double elapsed = std::chrono::duration<double>(now - last_tick_).count();
    last_tick_ = now;
    pending_steps_ += elapsed * scenario_.rate;
    while (pending_steps_ >= 1.0 && !exhausted_) {
        pending_steps_ -= 1.0;
        try {
            auto msgs = step_locked(latched_, nullptr);
            out.insert(out.end(), msgs.begin(), msgs.end());
        } catch (const std::exception& e) {
            exhausted_ = true;
            out.push_back(error_message("step_failed", e.what()));
        }
    }
    return out;
}

std::string Session::export_csv() const
{
    std::vector<dataset::SensorRecord> records;
    std::vector<dataset::TrajectoryFields> fields;
    {
        std::lock_guard lock(mu_);
        records = records_;
        fields = fields_;
    }
    std::ostringstream out;
    dataset::write_trajectory(out, records, fields);
    return out.str();
}

std::size_t Session::rows() const
{
    std::lock_guard lock(mu_);
    return records_.size();
}

std::optional<std::filesystem::path> Session::flush(const std::filesystem::path& dir) const
{
    if (rows() == 0) return std::nullopt;
    std::filesystem::create_directories(dir);
    const auto path = dir / ("session-" + id_ + ".csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << export_csv();
    return path;
}

Json Session::summary() const
{
    std::lock_guard lock(mu_);
    const auto age = std::chrono::duration<double>(Clock::now() - created_).count();
    return Json{{"id", id_},
                {"steps", records_.size()},
                {"clock", scenario_.clock == ClockMode::Manual ? "manual" : "timed"},
                {"reward", to_string(scenario_.reward)},
                {"tank_level", env_.observation().tank_level},
                {"age_seconds", age}};
}

Clock::time_point Session::last_active() const
{
    std::lock_guard lock(mu_);
    return last_active_;
}

void Session::set_sink(Sink sink)
{
    std::lock_guard lock(mu_);
    sink_ = std::move(sink);
}

void Session::emit(const std::string& text) const
{
    Sink sink;
    {
        std::lock_guard lock(mu_);
        sink = sink_;
    }
    if (sink) sink(text);
}

SessionManager::SessionManager(AppConfig cfg) : cfg_(std::move(cfg)), salt_(std::random_device{}())
{
    salt_ = (salt_ << 32) ^ std::random_device{}();
}

std::string SessionManager::new_id()
{
    // splitmix64 over a counter and a per-process salt: unique and opaque.
    std::uint64_t z = salt_ + 0x9e3779b97f4a7c15ULL * ++counter_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(z));
    return buf;
}

Json SessionManager::create(const Json& body, Clock::time_point now)
{
    const Scenario s = parse_scenario(body, cfg_);
    std::string id;
    {
        std::lock_guard lock(mu_);
        id = new_id();
    }
    auto session = std::make_shared<Session>(id, cfg_, s, now);
    Json created{{"v", kProtocolVersion}, {"kind", "created"}, {"id", id}, {"state", session->state_message()}};
    std::lock_guard lock(mu_);
    sessions_.emplace(id, std::move(session));
    return created;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const
{
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

Json SessionManager::list() const
{
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mu_);
        for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    Json arr = Json::array();
    for (const auto& s : all) arr.push_back(s->summary());
    return Json{{"v", kProtocolVersion}, {"sessions", arr}};
}

std::size_t SessionManager::size() const
{
    std::lock_guard lock(mu_);
    return sessions_.size();
}

std::vector<Json> SessionManager::handle(const std::string& id, const std::string& text, Clock::time_point now)
{
    Json msg;
    try {
        msg = Json::parse(text);
    } catch (const Json::exception& e) {
        return {error_message("bad_json", e.what())};
    }
    const Json seq = msg.is_object() && msg.contains("seq") ? msg.at("seq") : Json(nullptr);
    if (!msg.is_object() || !msg.contains("kind") || !msg.at("kind").is_string()) {
        return {error_message("bad_message", "message must be an object with a string 'kind'", seq)};
    }
    if (msg.contains("v") && msg.at("v") != kProtocolVersion) {
        return {error_message("bad_version", "unsupported protocol version", seq)};
    }
    auto session = find(id);
    if (!session) return {error_message("unknown_session", "no session '" + id + "'", seq)};

    const std::string kind = msg.at("kind").get<std::string>();
    try {
        if (kind == "act") {
            if (!msg.contains("action") || !msg.at("action").is_string()) {
                return {error_message("bad_action", "act needs a string 'action'", seq)};
            }
            return session->act(msg.at("action").get<std::string>(), seq, now);
        }
        if (kind == "state") {
            auto s = session->state_message();
            if (!seq.is_null()) s["seq"] = seq;
            return {s};
        }
        if (kind == "export") {
            const auto path = session->flush(cfg_.service.export_dir);
            if (!path) return {error_message("empty_session", "session has no steps to export", seq)};
            Json j{{"v", kProtocolVersion}, {"kind", "exported"}, {"session", id}, {"path", path->string()},
                   {"rows", session->rows()}};
            if (!seq.is_null()) j["seq"] = seq;
            return {j};
        }
    } catch (const std::exception& e) {
        return {error_message("internal", e.what(), seq)};
    }
    return {error_message("bad_kind", "unsupported kind '" + kind + "'", seq)};
}

void SessionManager::tick(Clock::time_point now)
{
    std::vector<std::shared_ptr<Session>> all;
    std::vector<std::shared_ptr<Session>> expired;
    const auto ttl = std::chrono::duration<double>(cfg_.service.session_ttl_seconds);
    {
        std::lock_guard lock(mu_);
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            if (now - it->second->last_active() > ttl) {
                expired.push_back(it->second);
                it = sessions_.erase(it);
            } else {
                all.push_back(it->second);
                ++it;
            }
        }
    }
    for (const auto& s : all) {
        for (const auto& m : s->tick(now)) s->emit(m.dump());
    }
    for (const auto& s : expired) {
        try {
            s->flush(cfg_.service.export_dir);
        } catch (const std::exception&) {
            // Expiry must not take the server down; the session is gone either way.
        }
        s->emit(error_message("expired", "session expired after idle timeout").dump());
    }
}

std::vector<std::filesystem::path> SessionManager::shutdown()
{
    std::map<std::string, std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mu_);
        all.swap(sessions_);
    }
    std::vector<std::filesystem::path> written;
    for (const auto& [id, s] : all) {
        if (auto p = s->flush(cfg_.service.export_dir)) written.push_back(*p);
    }
    return written;
}

} // namespace pumpsched::service
