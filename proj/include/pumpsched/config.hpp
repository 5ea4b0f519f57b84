#pragma once

// Single JSON configuration document for every workflow. Plant keys sit at
// the top level (pumps, system, tank, ackeret); see config/default.json and
// docs/plant-config.schema.json.

#include "pumpsched/agent.hpp"
#include "pumpsched/dataset.hpp"
#include "pumpsched/env.hpp"
#include "pumpsched/hydraulics.hpp"
#include "pumpsched/replay.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <string>

namespace pumpsched {

struct OperatorConfig {
    double start_level = 51.5;  // start a pump at or below
    double stop_level = 56.0;   // stop at or above
    double night_fill_level = 55.0;
    int night_start_minute = 0; // fill window before the morning peak
    int night_end_minute = 300;
    double emergency_level = 50.5; // switch to the largest pump below
};

struct ServiceConfig {
    double session_ttl_seconds = 1800.0;
    double timed_rate = 1.0; // sim minutes per real second
    std::string export_dir = "sessions";
    int threads = 2;
};

struct AppConfig {
    hydraulics::PlantConfig plant = hydraulics::PlantConfig::defaults();
    env::EnvConfig env{};
    double initial_level = 52.0;
    dataset::DemandProfileConfig demand{};
    OperatorConfig op{};
    agent::TrainConfig train{};
    replay::ReplayConfig replay{};
    std::size_t train_steps = 500;
    std::size_t log_every = 10;
    ServiceConfig service{};

    void validate() const;
};

env::RewardVariant parse_reward_variant(const std::string& s);
std::string to_string(env::RewardVariant v);

// Missing keys keep their defaults; unknown keys are ignored.
AppConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AppConfig& cfg);
AppConfig load_config(const std::filesystem::path& path);

} // namespace pumpsched
