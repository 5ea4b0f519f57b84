#pragma once

// Offline Q-learning with a Random Ensemble Mixture of Q-heads, greedy
// policy extraction and a behavior-cloning baseline.

#include "pumpsched/action.hpp"
#include "pumpsched/env.hpp"
#include "pumpsched/mlp.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace pumpsched::agent {

using QValues = std::array<double, kActionCount>;

struct TrainConfig {
    double gamma = 0.99;
    double learning_rate = 1e-4;
    std::size_t batch_size = 256;
    std::size_t heads = 4;
    std::vector<std::size_t> hidden{64, 64};
    // One trunk with K linear heads instead of K independent networks.
    bool shared_trunk = false;
    std::size_t target_sync = 2000;
    double grad_clip = 10.0;
    double huber_delta = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// K Q-functions over the encoded observation. With a shared trunk the heads
// are single linear layers on top of it.
class QEnsemble {
public:
    QEnsemble() = default;
    QEnsemble(const TrainConfig& cfg, std::size_t inputs, std::mt19937_64& rng);
    QEnsemble(std::optional<Mlp> trunk, std::vector<Mlp> heads);

    std::size_t heads() const noexcept { return heads_.size(); }
    std::size_t input_size() const;
    bool shared_trunk() const noexcept { return trunk_.has_value(); }

    // Per-head action values.
    std::vector<QValues> head_values(std::span<const double> x) const;

    // Networks in a fixed order: trunk (if any), then heads.
    std::vector<const Mlp*> networks() const;
    std::vector<Mlp*> networks();

    const std::optional<Mlp>& trunk() const noexcept { return trunk_; }
    const std::vector<Mlp>& head_networks() const noexcept { return heads_; }

    bool operator==(const QEnsemble&) const = default;

private:
    std::optional<Mlp> trunk_;
    std::vector<Mlp> heads_;
};

// K nonnegative weights summing to one: uniform draws, normalized.
std::vector<double> sample_alphas(std::size_t k, std::mt19937_64& rng);

QValues rem_q(const QEnsemble& ensemble, std::span<const double> alphas, std::span<const double> x);

// argmax of the uniform-weight ensemble mean; ties go to the lowest index.
Action greedy_policy(const QEnsemble& ensemble, std::span<const double> x);

Action argmax_action(const QValues& q);

struct StepResult {
    double loss = 0.0;
    std::vector<double> td_errors; // |y - Q| per sample
    double grad_norm = 0.0;
};

// Gradients of the importance-weighted Huber TD loss; one buffer per network
// in QEnsemble::networks() order.
struct LossGradient {
    double loss = 0.0;
    std::vector<double> td_errors;
    std::vector<std::vector<double>> grads;
};

LossGradient td_loss_gradient(const QEnsemble& online, const QEnsemble& target,
                              std::span<const env::Transition> batch, std::span<const double> weights,
                              std::span<const double> alphas, const TrainConfig& cfg);

// One gradient update of the REM objective.
StepResult train_step(QEnsemble& online, const QEnsemble& target, std::span<const env::Transition> batch,
                      std::span<const double> weights, std::span<const double> alphas, const TrainConfig& cfg,
                      Adam& optimizer);

Adam make_optimizer(const QEnsemble& ensemble, double learning_rate);

// Online/target pair with the optimizer and the RNG that draws the mixture
// weights.
class RemTrainer {
public:
    explicit RemTrainer(TrainConfig cfg, std::size_t inputs = env::kFeatureCount);
    RemTrainer(TrainConfig cfg, QEnsemble online);

    StepResult train_step(std::span<const env::Transition> batch, std::span<const double> weights);

    void sync_target() { target_ = online_; }

    const QEnsemble& online() const noexcept { return online_; }
    const QEnsemble& target() const noexcept { return target_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    std::uint64_t steps() const noexcept { return steps_; }
    std::mt19937_64& rng() noexcept { return rng_; }
    const std::vector<double>& last_alphas() const noexcept { return last_alphas_; }

    void save_checkpoint(std::ostream& out) const;

private:
    TrainConfig cfg_;
    std::mt19937_64 rng_;
    QEnsemble online_;
    QEnsemble target_;
    Adam optimizer_;
    std::uint64_t steps_ = 0;
    std::vector<double> last_alphas_;
};

// Versioned binary checkpoint:
//   magic "PSCK", u32 version, u64 config-json length, config json,
//   u64 steps, u8 shared trunk, u32 network count, networks (Mlp::save),
//   u64 rng-state length, rng state text.
struct Checkpoint {
    TrainConfig config;
    QEnsemble online;
    std::uint64_t steps = 0;
    std::string rng_state;
};

void save_checkpoint(std::ostream& out, const TrainConfig& cfg, const QEnsemble& online, std::uint64_t steps,
                     const std::mt19937_64& rng);
Checkpoint load_checkpoint(std::istream& in);

std::string train_config_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

struct LabeledState {
    env::FeatureVector x{};
    Action label = Action::NOP;
};

struct CloneConfig {
    std::vector<std::size_t> hidden{64, 64};
    double learning_rate = 1e-3;
    // Linear decay to final_lr_fraction * learning_rate over the run.
    double final_lr_fraction = 0.05;
    std::size_t updates = 2000;
    std::size_t batch_size = 64;
    double holdout = 0.2;
    std::uint64_t seed = 0;
};

struct CloneResult {
    Mlp classifier;
    double heldout_accuracy = 0.0;
    double train_accuracy = 0.0;
    std::vector<double> losses;
    std::vector<std::string> warnings;
    std::size_t train_size = 0;
    std::size_t heldout_size = 0;
};

// Cross-entropy 5-way classifier over encoded observations.
CloneResult clone_behavior(std::span<const LabeledState> data, const CloneConfig& cfg = {});

double classification_accuracy(const Mlp& classifier, std::span<const LabeledState> data);

} // namespace pumpsched::agent
