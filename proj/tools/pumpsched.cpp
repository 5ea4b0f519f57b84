// pumpsched: command-line entry point.
//
// Exit codes: 0 ok, 1 usage, 2 validation, 3 runtime.

#include "pumpsched/errors.hpp"
#include "pumpsched/service/server.hpp"
#include "pumpsched/workflows.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace ps = pumpsched;
namespace wf = pumpsched::workflows;

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kRuntime = 3 };

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    std::string out = "out";
    std::string reward;
};

void add_common(CLI::App* app, Common& c)
{
    app->add_option("--config", c.config, "JSON config (falls back to $PUMPSCHED_CONFIG)");
    app->add_option("--seed", c.seed, "RNG seed");
    app->add_option("--out", c.out, "output directory");
    app->add_option("--reward", c.reward, "reward variant")->check(CLI::IsMember({"v1", "v2"}));
}

ps::AppConfig load(Common& c)
{
    if (c.config.empty()) {
        if (const char* env = std::getenv("PUMPSCHED_CONFIG"); env && *env) c.config = env;
    }
    ps::AppConfig cfg = c.config.empty() ? ps::AppConfig{} : ps::load_config(c.config);
    if (!c.reward.empty()) cfg.env.reward.variant = ps::parse_reward_variant(c.reward);
    cfg.validate();
    return cfg;
}

wf::RunContext context(const std::string& name, const Common& c)
{
    return wf::RunContext{name, c.config, c.seed, c.out};
}

std::size_t horizon_minutes(int days, std::size_t horizon)
{
    return horizon > 0 ? horizon : static_cast<std::size_t>(days) * ps::kMinutesPerDay;
}

void print_report(const std::string& label, const ps::metrics::OperationReport& r)
{
    std::cout << label << ": minutes=" << r.minutes << " kwh=" << r.total_kwh << " switches=" << r.total_switches
              << " safety_minutes=" << r.safety_violation_minutes
              << " water_exchange_days=" << r.water_exchange_days.size() << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pump scheduling simulator and offline RL trainer"};
    app.require_subcommand(1);
    app.set_version_flag("--version", wf::version());

    Common common;

    auto* sim = app.add_subcommand("simulate", "roll a schedule through the simulator");
    add_common(sim, common);
    int sim_days = 1;
    std::size_t sim_horizon = 0;
    std::string sim_demand, sim_schedule = "rule";
    sim->add_option("--days", sim_days, "horizon in days")->check(CLI::PositiveNumber);
    sim->add_option("--horizon", sim_horizon, "horizon in minutes (overrides --days)");
    sim->add_option("--demand", sim_demand, "demand log; synthetic demand from --seed when omitted");
    sim->add_option("--schedule", sim_schedule, "nop | NP1..NP4 | rule | dataset | checkpoint:PATH");

    auto* train = app.add_subcommand("train", "offline REM training on a behavioral log");
    add_common(train, common);
    std::string train_dataset;
    std::size_t train_steps = 0, train_heads = 0;
    train->add_option("--dataset", train_dataset, "behavioral log CSV")->required();
    train->add_option("--steps", train_steps, "gradient steps (overrides config)");
    train->add_option("--heads", train_heads, "ensemble size K (overrides config)");

    auto* eval = app.add_subcommand("eval", "greedy rollout of a checkpoint against the behavioral schedule");
    add_common(eval, common);
    std::string eval_checkpoint, eval_dataset;
    int eval_days = 1;
    std::size_t eval_horizon = 0;
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval->add_option("--dataset", eval_dataset, "behavioral log; rule operator on synthetic demand when omitted");
    eval->add_option("--days", eval_days, "horizon in days")->check(CLI::PositiveNumber);
    eval->add_option("--horizon", eval_horizon, "horizon in minutes (overrides --days)");

    auto* ds = app.add_subcommand("dataset", "operation log utilities");
    ds->require_subcommand(1);
    auto* ds_validate = ds->add_subcommand("validate", "check a log and list every bad row");
    add_common(ds_validate, common);
    std::string validate_path;
    ds_validate->add_option("path", validate_path)->required();
    auto* ds_synth = ds->add_subcommand("synth", "synthetic behavioral log");
    add_common(ds_synth, common);
    int synth_days = 1;
    ds_synth->add_option("--days", synth_days, "days to generate")->check(CLI::PositiveNumber);
    auto* ds_slice = ds->add_subcommand("slice", "cut a log into day episodes");
    add_common(ds_slice, common);
    std::string slice_path;
    ds_slice->add_option("path", slice_path)->required();

    auto* serve = app.add_subcommand("serve", "interactive session service");
    add_common(serve, common);
    int port = 8080;
    std::string host = "127.0.0.1";
    serve->add_option("--port", port, "TCP port")->check(CLI::Range(0, 65535));
    serve->add_option("--host", host, "listen address");

    auto* calib = app.add_subcommand("calibrate", "fit pump coefficients from a log with flow columns");
    add_common(calib, common);
    std::string calib_path;
    calib->add_option("path", calib_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*sim) {
            auto cfg = load(common);
            std::optional<std::filesystem::path> demand;
            if (!sim_demand.empty()) demand = sim_demand;
            const auto r = wf::run_simulate(cfg, context("simulate", common), demand, wf::ScheduleSource{sim_schedule},
                                            horizon_minutes(sim_days, sim_horizon));
            print_report("simulate", r.report);
            std::cout << "trajectory: " << r.trajectory_path.string() << '\n';
        } else if (*train) {
            auto cfg = load(common);
            if (train_steps > 0) cfg.train_steps = train_steps;
            if (train_heads > 0) cfg.train.heads = train_heads;
            cfg.validate();
            const auto r = wf::run_train(cfg, context("train", common), train_dataset);
            std::cout << "train: episodes=" << r.episodes << " transitions=" << r.transitions << " steps="
                      << cfg.train_steps << " final_loss=" << (r.log.empty() ? 0.0 : r.log.back().loss) << '\n'
                      << "checkpoint: " << r.checkpoint_path.string() << '\n';
        } else if (*eval) {
            auto cfg = load(common);
            std::optional<std::filesystem::path> dataset;
            if (!eval_dataset.empty()) dataset = eval_dataset;
            const auto r = wf::run_eval(cfg, context("eval", common), eval_checkpoint, dataset,
                                        horizon_minutes(eval_days, eval_horizon));
            print_report("agent", r.agent_report);
            print_report("behavioral", r.behavioral_report);
            for (const auto& w : r.comparison.warnings) std::cout << "warning: " << w << '\n';
        } else if (*ds_validate) {
            auto cfg = load(common);
            const auto parsed = wf::run_validate(context("dataset validate", common), validate_path, cfg);
            for (const auto& issue : parsed.issues) std::cerr << issue << '\n';
            std::cout << "rows=" << parsed.records.size() << " errors=" << parsed.issues.size() << '\n';
            return parsed.ok() ? kOk : kValidation;
        } else if (*ds_synth) {
            auto cfg = load(common);
            const auto rows = wf::run_synth(cfg, context("dataset synth", common), synth_days);
            std::cout << "rows=" << rows.size() << " file=" << (std::filesystem::path(common.out) / "synth.csv").string()
                      << '\n';
        } else if (*ds_slice) {
            auto cfg = load(common);
            const auto rep = wf::run_slice(cfg, context("dataset slice", common), slice_path);
            std::cout << "episodes=" << rep.episodes.size() << " dropped_leading=" << rep.dropped_leading
                      << " dropped_trailing=" << rep.dropped_trailing << " excluded=" << rep.excluded.size() << '\n';
            for (const auto& x : rep.excluded) std::cerr << "excluded " << x << '\n';
        } else if (*serve) {
            auto cfg = load(common);
            ps::service::SessionManager manager(cfg);
            ps::service::Server server(manager, host, static_cast<unsigned short>(port), cfg.service.threads);
            std::cout << "serving on " << host << ':' << server.port() << " (version " << wf::version() << ")"
                      << std::endl;
            server.run_until_signal();
            const auto flushed = manager.shutdown();
            for (const auto& p : flushed) std::cout << "flushed " << p.string() << '\n';
        } else if (*calib) {
            auto cfg = load(common);
            const auto fits = wf::run_calibrate(cfg, context("calibrate", common), calib_path);
            for (const auto& f : fits) {
                std::cout << ps::hydraulics::to_string(f.pump.id) << ": samples=" << f.samples
                          << " h0=" << f.pump.shutoff_head << " c=" << f.pump.head_coeff
                          << " eta_bep=" << f.pump.eta_bep << " head_rmse=" << f.head_rmse << '\n';
            }
        }
    } catch (const ps::ValidationError& e) {
        for (const auto& issue : e.issues()) std::cerr << "error: " << issue << '\n';
        return kValidation;
    } catch (const ps::SchemaError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const ps::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntime;
    }
    return kOk;
}
