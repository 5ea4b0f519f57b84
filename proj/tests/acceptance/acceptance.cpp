// One pass/fail line per acceptance criterion; exits nonzero when any fails.

#include "oracles.hpp"
#include "pumpsched/agent.hpp"
#include "pumpsched/hydraulics.hpp"
#include "pumpsched/replay.hpp"
#include "pumpsched/rollout.hpp"
#include "pumpsched/workflows.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

using namespace pumpsched;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

env::RewardContext context_of(const oracle::RewardCase& c)
{
    env::RewardContext ctx;
    ctx.action = c.action;
    ctx.prev_action = c.prev;
    ctx.time_running[index_of(c.action)] = c.time_running;
    ctx.tank_level = c.level;
    ctx.water_quality = c.water_quality;
    ctx.q = c.q;
    ctx.kw = c.kw;
    return ctx;
}

Outcome reward_oracles()
{
    const auto& table = oracle::reward_table();
    double worst = 0.0;
    std::size_t v1 = 0, v2 = 0;
    for (const auto& row : table) {
        env::RewardConfig cfg;
        const bool is_v1 = std::string(row.input.variant) == "v1";
        cfg.eq1_literal = row.input.eq1_literal;
        const auto ctx = context_of(row.input);
        const double got = is_v1 ? env::reward_v1(ctx, cfg) : env::reward_v2(ctx, cfg);
        worst = std::max(worst, std::abs(got - row.expected));
        (is_v1 ? v1 : v2) += 1;
    }
    return {table.size() >= 12 && worst <= 1e-12,
            std::to_string(table.size()) + " cases (" + std::to_string(v1) + " v1, " + std::to_string(v2)
                + " v2), max |err| " + fmt("%.3g", worst)};
}

hydraulics::PumpModel pump(double h0, double c, double q_bep = 1.0, double eta = 0.8, double eta_coeff = 0.0)
{
    hydraulics::PumpModel p;
    p.shutoff_head = h0;
    p.head_coeff = c;
    p.q_bep = q_bep;
    p.eta_bep = eta;
    p.eta_coeff = eta_coeff;
    return p;
}

Outcome operating_point_correctness()
{
    using namespace hydraulics;
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> h0(20.0, 120.0), c(1e-5, 1e-3), k(1e-6, 1e-3), n(0.4, 1.0), frac(0.0, 0.95);
    const std::size_t instances = 10000, points = 1000000;
    std::size_t bad_bracket = 0;
    double worst_residual = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        const auto p = pump(h0(rng), c(rng));
        const double speed = n(rng);
        const SystemCurve sys{frac(rng) * speed * speed * p.shutoff_head, k(rng)};
        const auto op = operating_point(p, sys, speed, AckeretConfig::identity());
        const double q_max = 1.5 * speed * std::sqrt(p.shutoff_head / p.head_coeff);
        const auto g = oracle::grid_scan(speed, p.shutoff_head, p.head_coeff, sys.static_head, sys.slope, q_max, points);
        if (op.dead_headed || g.sign_changes != 1 || !(g.lo <= op.q && op.q <= g.hi)) ++bad_bracket;
        worst_residual = std::max(worst_residual, std::abs(pump_head(p, op.q, speed) - sys.head_at(op.q)));
    }
    const auto ex = operating_point(pump(60.0, 5e-4), SystemCurve{52.0, 3e-4}, 1.0, AckeretConfig::identity());
    const bool exact = ex.q == 100.0 && ex.head == 55.0;
    return {bad_bracket == 0 && worst_residual < 1e-9 && exact,
            std::to_string(instances) + " instances, " + std::to_string(bad_bracket) + " outside grid bracket, max residual "
                + fmt("%.3g", worst_residual) + " m; example Q=" + fmt("%.17g", ex.q) + " H=" + fmt("%.17g", ex.head)};
}

Outcome affinity_and_bep()
{
    using namespace hydraulics;
    const auto plant = PlantConfig::defaults();
    double worst_ratio = 0.0, worst_eta = 0.0;
    for (const auto& p : plant.pumps) {
        // Zero-static system through the rated BEP.
        const double k = (p.shutoff_head - p.head_coeff * p.q_bep * p.q_bep) / (p.q_bep * p.q_bep);
        const SystemCurve sys{0.0, k};
        const auto base = operating_point(p, sys, 1.0, AckeretConfig::identity());
        for (double n : {1.0, 0.8, 0.5}) {
            const auto op = operating_point(p, sys, n, AckeretConfig::identity());
            worst_ratio = std::max(worst_ratio, std::abs(op.q / base.q - n));
            worst_ratio = std::max(worst_ratio, std::abs(op.head / base.head - n * n));
            worst_eta = std::max(worst_eta, std::abs(op.eta - p.eta_bep));
        }
    }
    return {worst_ratio <= 1e-9 && worst_eta <= 1e-9,
            "4 pumps x speeds {1, 0.8, 0.5}: max ratio err " + fmt("%.3g", worst_ratio) + ", max |eta - eta_bep| "
                + fmt("%.3g", worst_eta)};
}

Outcome power_formula()
{
    const double p = hydraulics::hydraulic_power(360.0, 50.0, 1000.0);
    return {p == 49.05, "hydraulic_power(360, 50, 1000) = " + fmt("%.17g", p) + " kW"};
}

// Random actions in runs of random length, steering away from the bounds so
// that nothing is clamped.
class GuardedRandom final : public rollout::Policy {
public:
    explicit GuardedRandom(std::uint64_t seed) : rng_(seed) {}
    Action act(const env::PumpEnv& env) override
    {
        const double level = env.observation().tank_level;
        if (left_ == 0) {
            current_ = action_from_index(rng_() % kActionCount);
            left_ = 1 + rng_() % 90;
        }
        --left_;
        if (level > 56.0 && current_ != Action::NOP) current_ = Action::NOP;
        if (level < 48.5 && current_ == Action::NOP) current_ = Action::NP1;
        return current_;
    }
    std::string name() const override { return "guarded-random"; }

private:
    std::mt19937_64 rng_;
    Action current_ = Action::NOP;
    std::size_t left_ = 0;
};

Outcome mass_conservation()
{
    AppConfig cfg;
    const std::size_t days = 30;
    auto demand = dataset::synthesize_demand(static_cast<int>(days), 17, cfg.demand);
    auto trace = std::make_shared<const env::DemandTrace>(env::DemandTrace::from_records(demand));
    env::PumpEnv e(cfg.plant, cfg.env);
    e.reset(cfg.initial_level, trace);
    const double v0 = e.tank_volume();
    GuardedRandom policy(5);
    long double ledger = 0.0L;
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < trace->size(); ++i) {
        const auto res = e.step(policy.act(e));
        ledger += (static_cast<long double>(res.info.q) - res.info.demand) * (cfg.env.dt_minutes / 60.0L);
        clamped += res.info.overflow || res.info.empty ? 1 : 0;
    }
    const long double err = std::abs(static_cast<long double>(e.tank_volume()) - v0 - ledger);
    return {clamped == 0 && err <= 1e-9L,
            std::to_string(trace->size()) + " steps, " + std::to_string(clamped) + " clamped, |V_end - V_0 - sum(Q_in - D) dt| = "
                + fmt("%.3g", static_cast<double>(err)) + " m3"};
}

Outcome episode_semantics()
{
    AppConfig cfg;
    const std::size_t len = kMinutesPerDay;
    auto trace = std::make_shared<const env::DemandTrace>(
        env::DemandTrace::from_records(dataset::synthesize_demand(3, 23, cfg.demand)));
    env::PumpEnv e(cfg.plant, cfg.env);
    e.reset(cfg.initial_level, trace);
    GuardedRandom policy(9);
    std::size_t interior = 0, ends = 0;
    bool zeroed = true, continuous = true;
    double prev_level = cfg.initial_level;
    bool boundary = false;
    for (std::size_t i = 1; i <= 3 * len; ++i) {
        const Action a = policy.act(e);
        const auto res = e.step(a);
        if (boundary) {
            ++interior;
            // Only the first step of the new episode has run.
            for (std::size_t k = 0; k < kActionCount; ++k) {
                const double expect = k == index_of(a) ? cfg.env.dt_minutes : 0.0;
                zeroed = zeroed && res.obs.time_running[k] == expect;
            }
            zeroed = zeroed && e.episode_step() == 1;
            continuous = continuous && res.info.level_before == prev_level;
        }
        boundary = res.info.episode_end;
        ends += res.info.episode_end ? 1 : 0;
        if (res.info.episode_end && i % len != 0) continuous = false;
        prev_level = res.obs.tank_level;
    }
    return {interior == 2 && ends == 3 && zeroed && continuous,
            std::to_string(interior) + " interior boundaries, " + std::to_string(ends) + " episode ends, accumulators "
                + (zeroed ? "re-zeroed" : "NOT re-zeroed") + ", level " + (continuous ? "continuous" : "DISCONTINUOUS")};
}

env::FeatureVector random_features(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    env::FeatureVector f{};
    for (double& v : f) v = u(rng);
    return f;
}

std::vector<env::Transition> random_batch(std::size_t n, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> r(-3.0, 1.0);
    std::vector<env::Transition> batch(n);
    for (auto& t : batch) {
        t.obs = random_features(rng);
        t.next_obs = random_features(rng);
        t.action = action_from_index(rng() % kActionCount);
        t.reward = r(rng);
        t.terminal = rng() % 7 == 0;
    }
    return batch;
}

agent::TrainConfig small_config(std::size_t heads, bool shared)
{
    agent::TrainConfig cfg;
    cfg.heads = heads;
    cfg.hidden = {6, 5};
    cfg.shared_trunk = shared;
    cfg.batch_size = 8;
    cfg.gamma = 0.9;
    cfg.learning_rate = 1e-3;
    return cfg;
}

bool single_head_bit_match()
{
    auto cfg = small_config(1, false);
    cfg.seed = 31;
    cfg.target_sync = 5;
    cfg.grad_clip = 0.5;
    agent::RemTrainer trainer(cfg);
    const auto& net = trainer.online().head_networks()[0];
    oracle::ReferenceDqn ref(net.sizes(), std::vector<double>(net.parameters().begin(), net.parameters().end()));
    std::mt19937_64 rng(12);
    for (int step = 1; step <= 50; ++step) {
        const auto batch = random_batch(8, rng);
        std::vector<double> weights(8);
        for (double& w : weights) w = 0.2 + 0.1 * static_cast<double>(rng() % 8);
        std::vector<oracle::ReferenceDqn::Sample> rb;
        for (const auto& t : batch)
            rb.push_back({std::vector<double>(t.obs.begin(), t.obs.end()), index_of(t.action), t.reward,
                          std::vector<double>(t.next_obs.begin(), t.next_obs.end()), t.terminal});
        const auto got = trainer.train_step(batch, weights);
        const double want = ref.update(rb, weights, cfg.gamma, cfg.huber_delta, cfg.grad_clip, cfg.learning_rate);
        if (step % 5 == 0) ref.sync_target();
        if (got.loss != want) return false;
        const auto p = trainer.online().head_networks()[0].parameters();
        if (!std::equal(p.begin(), p.end(), ref.params().begin())) return false;
    }
    return true;
}

double finite_difference_error()
{
    std::mt19937_64 rng(9);
    double worst = 0.0;
    for (bool shared : {false, true}) {
        for (std::size_t heads : {1u, 3u}) {
            auto cfg = small_config(heads, shared);
            cfg.huber_delta = 0.75;
            agent::QEnsemble online(cfg, env::kFeatureCount, rng);
            const agent::QEnsemble target(cfg, env::kFeatureCount, rng);
            const auto batch = random_batch(6, rng);
            const std::vector<double> weights{1.0, 0.5, 0.25, 0.9, 0.1, 0.7};
            const auto alphas = agent::sample_alphas(heads, rng);
            const auto analytic = agent::td_loss_gradient(online, target, batch, weights, alphas, cfg);
            const double h = 1e-5;
            auto nets = online.networks();
            for (std::size_t n = 0; n < nets.size(); ++n) {
                auto p = nets[n]->parameters();
                for (std::size_t i = 0; i < p.size(); ++i) {
                    const double keep = p[i];
                    p[i] = keep + h;
                    const double up = agent::td_loss_gradient(online, target, batch, weights, alphas, cfg).loss;
                    p[i] = keep - h;
                    const double down = agent::td_loss_gradient(online, target, batch, weights, alphas, cfg).loss;
                    p[i] = keep;
                    const double numeric = (up - down) / (2.0 * h);
                    const double a = analytic.grads[n][i];
                    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
                }
            }
        }
    }
    return worst;
}

std::size_t convexity_violations(std::size_t states)
{
    std::mt19937_64 rng(6);
    agent::TrainConfig cfg;
    agent::QEnsemble q(cfg, env::kFeatureCount, rng);
    std::size_t bad = 0;
    for (std::size_t s = 0; s < states; ++s) {
        const auto x = random_features(rng);
        const auto alphas = agent::sample_alphas(cfg.heads, rng);
        const auto mixed = agent::rem_q(q, alphas, x);
        const auto heads = q.head_values(x);
        for (std::size_t a = 0; a < kActionCount; ++a) {
            double lo = heads[0][a], hi = heads[0][a];
            for (const auto& h : heads) {
                lo = std::min(lo, h[a]);
                hi = std::max(hi, h[a]);
            }
            if (mixed[a] < lo - 1e-12 || mixed[a] > hi + 1e-12) ++bad;
        }
    }
    return bad;
}

Outcome rem_degeneracy_and_gradients()
{
    const bool bit = single_head_bit_match();
    const double fd = finite_difference_error();
    const std::size_t bad = convexity_violations(1000);
    return {bit && fd < 1e-4 && bad == 0,
            std::string("K=1 trace ") + (bit ? "bit-identical" : "DIVERGES") + " over 50 updates, FD max rel err "
                + fmt("%.3g", fd) + ", convexity violations " + std::to_string(bad) + "/1000 states"};
}

Outcome replay_statistics()
{
    replay::ReplayConfig cfg;
    cfg.capacity = 50;
    replay::PrioritizedBuffer<int> uniform(cfg);
    for (int i = 0; i < 50; ++i) uniform.push(i, 1.0);
    std::mt19937_64 rng(2024);
    std::vector<double> counts(50, 0.0);
    const std::size_t draws = 100000;
    for (std::size_t d = 0; d < draws / 10; ++d)
        for (const auto& h : uniform.sample(10, 0.4, rng).handles) counts[h.slot] += 1.0;
    const double expected = static_cast<double>(draws) / 50.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    const double crit = oracle::chi_square_critical_95(49);

    cfg.capacity = 100;
    replay::PrioritizedBuffer<int> skewed(cfg);
    for (int i = 0; i < 100; ++i) skewed.push(i, 0.0);
    const double other = skewed.tree().leaf(1);
    skewed.update_priorities({replay::SlotHandle{0, 1}},
                             {std::pow(99.0 * 99.0 * other, 1.0 / cfg.alpha) - cfg.eps});
    const double mass = skewed.tree().leaf(0) / skewed.tree().total();
    std::size_t hits = 0;
    for (std::size_t d = 0; d < 10000; ++d) hits += skewed.sample(1, 0.4, rng).handles[0].slot == 0 ? 1 : 0;
    const double share = static_cast<double>(hits) / 10000.0;
    return {chi2 < crit && std::abs(mass - 0.99) < 1e-9 && std::abs(share - 0.99) <= 0.02,
            "chi2 " + fmt("%.2f", chi2) + " < " + fmt("%.2f", crit) + " (49 dof, 1e5 draws); 99% leaf drawn "
                + fmt("%.4f", share) + " of 1e4"};
}

fs::path scratch_dir(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("pumpsched_accept_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Outcome end_to_end()
{
    const auto dir = scratch_dir("e2e");
    AppConfig cfg;
    cfg.train_steps = 500;
    workflows::run_synth(cfg, workflows::RunContext{"dataset synth", "", 1, dir / "synth"}, 3);
    const auto trained = workflows::run_train(cfg, workflows::RunContext{"train", "", 1, dir / "train"},
                                              dir / "synth" / "synth.csv");
    bool finite = !trained.log.empty();
    for (const auto& row : trained.log) finite = finite && std::isfinite(row.loss) && std::isfinite(row.mean_abs_td);

    std::string bytes;
    {
        std::ifstream in(trained.checkpoint_path, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        bytes = ss.str();
    }
    std::istringstream in(bytes);
    const auto ck = agent::load_checkpoint(in);
    std::ostringstream again;
    std::mt19937_64 rng;
    std::istringstream(ck.rng_state) >> rng;
    agent::save_checkpoint(again, ck.config, ck.online, ck.steps, rng);
    const bool round_trip = again.str() == bytes && ck.online == trained.online && ck.steps == 500;

    const auto ev = workflows::run_eval(cfg, workflows::RunContext{"eval", "", 1, dir / "eval"},
                                        trained.checkpoint_path, std::nullopt, kMinutesPerDay);
    const bool switches = ev.agent_report.total_switches == metrics::count_switches(ev.agent.actions())
                          && ev.behavioral_report.total_switches == metrics::count_switches(ev.behavioral.actions())
                          && ev.agent_report.minutes == kMinutesPerDay;
    fs::remove_all(dir);
    return {finite && round_trip && switches,
            "final loss " + fmt("%.4g", trained.log.back().loss) + (finite ? " (finite)" : " (NON-FINITE)")
                + ", checkpoint round-trip " + (round_trip ? "ok" : "FAILED") + ", agent switches "
                + std::to_string(ev.agent_report.total_switches) + (switches ? " consistent" : " INCONSISTENT")};
}

Outcome behavioral_extraction()
{
    AppConfig cfg;
    std::size_t rows = 0, mismatches = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto trace = std::make_shared<const env::DemandTrace>(
            env::DemandTrace::from_records(dataset::synthesize_demand(2, seed, cfg.demand)));
        env::PumpEnv e(cfg.plant, cfg.env);
        e.reset(cfg.initial_level, trace);
        GuardedRandom policy(seed * 101);
        const auto t = rollout::run(e, policy, trace->size());
        std::stringstream csv;
        dataset::write_log(csv, t.records);
        const auto back = dataset::parse_log(csv, dataset::LogLimits{cfg.plant.tank.min_level, cfg.plant.tank.max_level});
        const auto recovered = dataset::behavioral_actions(back).actions;
        const auto acted = t.actions();
        rows += acted.size();
        if (recovered.size() != acted.size()) {
            mismatches += acted.size();
            continue;
        }
        for (std::size_t i = 0; i < acted.size(); ++i) mismatches += recovered[i] != acted[i] ? 1 : 0;
    }
    return {mismatches == 0, std::to_string(rows) + " exported rows, " + std::to_string(mismatches) + " mismatches"};
}

struct Criterion {
    const char* name;
    std::function<Outcome()> check;
    double limit_seconds; // 0: no runtime bound
};

} // namespace

int main()
{
    const std::vector<Criterion> criteria{
        {"reward oracles", reward_oracles, 1.0},
        {"operating point", operating_point_correctness, 30.0},
        {"affinity and BEP", affinity_and_bep, 0.0},
        {"power formula", power_formula, 0.0},
        {"mass conservation", mass_conservation, 0.0},
        {"episode semantics", episode_semantics, 0.0},
        {"REM degeneracy and gradients", rem_degeneracy_and_gradients, 60.0},
        {"replay statistics", replay_statistics, 0.0},
        {"end-to-end smoke", end_to_end, 300.0},
        {"behavioral extraction", behavioral_extraction, 0.0},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string timing = fmt("%.2f s", secs);
        if (c.limit_seconds > 0.0) {
            timing += fmt(" (limit %.0f s)", c.limit_seconds);
            if (secs >= c.limit_seconds) o.pass = false;
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.name << ": " << o.detail << "; " << timing << std::endl;
    }
    std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures == 0 ? 0 : 1;
}
