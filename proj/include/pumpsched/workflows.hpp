#pragma once

// Runnable workflows behind the command-line subcommands. Each writes its
// outputs plus manifest.json into an output directory.

#include "pumpsched/agent.hpp"
#include "pumpsched/config.hpp"
#include "pumpsched/metrics.hpp"
#include "pumpsched/rollout.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pumpsched::workflows {

namespace fs = std::filesystem;

std::string version();

struct RunManifest {
    std::string subcommand;
    std::string config_path;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string started_at;
    std::string finished_at;
    std::string version = workflows::version();
    nlohmann::json config;

    nlohmann::json to_json() const;
};

std::string utc_now();

void write_manifest(const fs::path& dir, const RunManifest& manifest);

struct RunContext {
    std::string subcommand;
    std::string config_path;
    std::uint64_t seed = 0;
    fs::path out_dir = ".";
};

// Demand for a horizon: either read from a log or synthesized from the seed.
// A log that does not cover the horizon contiguously is an error naming the
// first gap.
std::vector<dataset::SensorRecord> demand_window(const std::optional<fs::path>& log, std::size_t minutes,
                                                 std::uint64_t seed, const AppConfig& cfg);

// "nop", "NP1".."NP4", "rule", "dataset" (behavioral actions of the demand
// log) or "checkpoint:PATH".
struct ScheduleSource {
    std::string spec = "rule";
};

struct SimulateResult {
    rollout::Trajectory trajectory;
    metrics::OperationReport report;
    fs::path trajectory_path;
};

SimulateResult run_simulate(const AppConfig& cfg, const RunContext& ctx, const std::optional<fs::path>& demand_log,
                            const ScheduleSource& schedule, std::size_t minutes);

struct TrainLogRow {
    std::size_t step = 0;
    double loss = 0.0;
    double mean_abs_td = 0.0;
    double beta = 0.0;
};

struct TrainResult {
    std::vector<TrainLogRow> log;
    std::size_t transitions = 0;
    std::size_t episodes = 0;
    fs::path checkpoint_path;
    agent::QEnsemble online;
};

TrainResult run_train(const AppConfig& cfg, const RunContext& ctx, const fs::path& dataset_path);

struct EvalResult {
    rollout::Trajectory agent;
    rollout::Trajectory behavioral;
    metrics::OperationReport agent_report;
    metrics::OperationReport behavioral_report;
    metrics::Comparison comparison;
};

// Greedy rollout of the checkpoint against the behavioral schedule on the
// same demand. Without a dataset the rule operator stands in for the
// behavioral policy.
EvalResult run_eval(const AppConfig& cfg, const RunContext& ctx, const fs::path& checkpoint,
                    const std::optional<fs::path>& dataset_path, std::size_t minutes);

// Checks a checkpoint against the configured network shape.
agent::QEnsemble load_policy(const fs::path& checkpoint, const AppConfig& cfg);

dataset::ParsedLog run_validate(const RunContext& ctx, const fs::path& path, const AppConfig& cfg);

std::vector<dataset::SensorRecord> run_synth(const AppConfig& cfg, const RunContext& ctx, int days);

dataset::SliceReport run_slice(const AppConfig& cfg, const RunContext& ctx, const fs::path& path);

// Per-pump coefficient fit from logs that carry flow columns.
std::vector<hydraulics::CalibrationResult> run_calibrate(const AppConfig& cfg, const RunContext& ctx,
                                                         const fs::path& path);

std::vector<dataset::SensorRecord> read_log_file(const fs::path& path, const AppConfig& cfg);

} // namespace pumpsched::workflows
