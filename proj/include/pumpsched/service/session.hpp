#pragma once

// Live operator sessions over the simulator. Transport-agnostic: the HTTP
// and WebSocket layer only moves the JSON produced here.

#include "pumpsched/config.hpp"
#include "pumpsched/dataset.hpp"
#include "pumpsched/env.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace pumpsched::service {

using Clock = std::chrono::steady_clock;
using Json = nlohmann::json;

inline constexpr int kProtocolVersion = 1;

enum class ClockMode { Manual, Timed };

struct Scenario {
    double initial_level = 52.0;
    env::RewardVariant reward = env::RewardVariant::V1;
    // Demand source.
    enum class Source { Synth, Constant, File } source = Source::Synth;
    int days = 7;
    std::uint64_t seed = 0;
    double constant_demand = 0.0;
    std::size_t minutes = kMinutesPerDay;
    std::string path;
    ClockMode clock = ClockMode::Manual;
    double rate = 1.0; // sim minutes per real second in timed mode
};

// Throws ValidationError listing every bad field.
Scenario parse_scenario(const Json& body, const AppConfig& defaults);

// Receives server-initiated messages (timed steps, expiry) for a session.
using Sink = std::function<void(const std::string&)>;

struct Totals {
    double kwh = 0.0;
    std::size_t switches = 0;
    double reward = 0.0;
    std::size_t steps = 0;
};

class Session {
public:
    Session(std::string id, const AppConfig& cfg, const Scenario& scenario, Clock::time_point now);

    const std::string& id() const noexcept { return id_; }

    // Current state without stepping.
    Json state_message() const;

    // Applies one action (manual) or latches it (timed). Returns the replies
    // in order: exactly one state or error, optionally followed by
    // episode_end.
    std::vector<Json> act(const std::string& action_name, const Json& seq, Clock::time_point now);

    // Timed mode: advances by the steps due since the last tick.
    std::vector<Json> tick(Clock::time_point now);

    std::string export_csv() const;
    std::size_t rows() const;
    // Writes session-<id>.csv into dir; empty sessions write nothing.
    std::optional<std::filesystem::path> flush(const std::filesystem::path& dir) const;

    Json summary() const;
    Clock::time_point last_active() const;
    ClockMode clock() const noexcept { return scenario_.clock; }

    void set_sink(Sink sink);
    void emit(const std::string& text) const;

private:
    Json state_locked(const std::optional<env::StepResult>& step, const Json& seq) const;
    std::vector<Json> step_locked(Action a, const Json& seq);

    const std::string id_;
    const Scenario scenario_;
    mutable std::mutex mu_;
    env::PumpEnv env_;
    std::shared_ptr<const env::DemandTrace> trace_;
    std::vector<dataset::SensorRecord> records_;
    std::vector<dataset::TrajectoryFields> fields_;
    Totals totals_;
    Action latched_ = Action::NOP;
    Action last_action_ = Action::NOP;
    bool exhausted_ = false;
    Clock::time_point created_;
    Clock::time_point last_active_;
    Clock::time_point last_tick_;
    double pending_steps_ = 0.0;
    Sink sink_;
};

Json error_message(const std::string& code, const std::string& message, const Json& seq = nullptr);

class SessionManager {
public:
    explicit SessionManager(AppConfig cfg);

    // Returns the created message; throws ValidationError on a bad scenario.
    Json create(const Json& body, Clock::time_point now = Clock::now());
    std::shared_ptr<Session> find(const std::string& id) const;
    Json list() const;
    std::size_t size() const;

    // Handles one client text frame for a session. Never throws.
    std::vector<Json> handle(const std::string& id, const std::string& text, Clock::time_point now = Clock::now());

    // Advances timed sessions and expires idle ones; messages go to sinks.
    void tick(Clock::time_point now = Clock::now());

    // Flushes every open session to the export directory.
    std::vector<std::filesystem::path> shutdown();

    const AppConfig& config() const noexcept { return cfg_; }

private:
    std::string new_id();

    AppConfig cfg_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t counter_ = 0;
    std::uint64_t salt_;
};

} // namespace pumpsched::service
