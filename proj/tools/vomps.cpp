// Command-line front end: run experiments, dump oracle quantities, run the
// STORM benchmark and evaluate saved policies.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "vomps/harness.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

int fail(int code, const std::string& reason) {
    std::cerr << "vomps: " << reason << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variance-reduced off-policy policy gradient experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> steps;
    std::optional<std::size_t> workers;
    auto* run = app.add_subcommand("run", "Train agents as described by a config file and write CSVs");
    run->add_option("config", config_path, "Config file (key = value lines)")->required();
    run->add_option("--seed", seed, "Run this single seed instead of the configured list");
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--steps", steps, "Training steps per seed");
    run->add_option("--workers", workers, "Seeds trained concurrently");

    std::string oracle_env;
    double oracle_gamma_hat = 0.2;
    double oracle_reward_scale = vomps::kTwoCircleRewardScale;
    auto* oracle = app.add_subcommand("oracle", "Dump exact DP quantities of a tabular environment as CSV");
    oracle->add_option("env", oracle_env, "two-circle or symmetric-two-circle")->required();
    oracle->add_option("--gamma-hat", oracle_gamma_hat, "Counterfactual discount");
    oracle->add_option("--reward-scale", oracle_reward_scale, "Two-circle C-route reward scale");

    vomps::BenchConfig bench_cfg;
    std::optional<std::uint64_t> bench_seed;
    std::optional<std::size_t> bench_steps;
    auto* bench = app.add_subcommand("bench-storm", "STORM versus tuned SGD on a stochastic non-convex problem");
    bench->add_option("--seed", bench_seed, "Run a single seed");
    bench->add_option("--steps", bench_steps, "Iterations per run (report at steps/8 and steps)");
    bench->add_option("--k", bench_cfg.storm.k, "STORM k");

    std::string ckpt_path;
    std::string eval_env;
    std::size_t eval_rollouts = 20;
    std::optional<std::size_t> eval_horizon;
    std::uint64_t eval_seed = 1;
    double eval_noise = 0.0;
    bool eval_greedy = false;
    auto* eval = app.add_subcommand("eval", "Monte-Carlo evaluation of a saved policy");
    eval->add_option("checkpoint", ckpt_path, "Policy checkpoint written by `run`")->required();
    eval->add_option("env", eval_env, "Environment name")->required();
    eval->add_option("--rollouts", eval_rollouts, "Number of rollouts");
    eval->add_option("--horizon", eval_horizon, "Rollout horizon");
    eval->add_option("--seed", eval_seed, "Evaluation seed");
    eval->add_option("--noise", eval_noise, "Action noise fraction (cartpole)");
    eval->add_flag("--greedy", eval_greedy, "Execute the policy mode");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "vomps: " << e.what() << "\n" << app.help();
        return kUsageError;
    }

    try {
        if (*run) {
            vomps::RunConfig cfg;
            try {
                cfg = vomps::load_config(config_path);
                if (seed) cfg.seeds = {*seed};
                if (out_dir) cfg.output = *out_dir;
                if (steps) cfg.total_steps = *steps;
                if (workers) cfg.workers = *workers;
                vomps::validate_config(cfg);
            } catch (const vomps::ConfigError& e) {
                return fail(kUsageError, e.what());
            }
            const auto result = vomps::run_experiment(cfg);
            const auto& last = result.aggregate.back();
            std::printf("wrote %zu files to %s; final smoothed mc_return=%.6g", result.files.size(),
                        cfg.output.c_str(), last.mc_smooth);
            if (last.pi_ab_smooth == last.pi_ab_smooth) std::printf(" pi_ab=%.6g", last.pi_ab_smooth);
            std::printf("\n");
            return 0;
        }
        if (*oracle) {
            if (oracle_env != "two-circle" && oracle_env != "symmetric-two-circle")
                return fail(kUsageError, "oracle: '" + oracle_env + "' is not a tabular environment");
            vomps::write_oracle_csv(std::cout, oracle_env, oracle_gamma_hat, oracle_reward_scale);
            return 0;
        }
        if (*bench) {
            if (bench_seed) bench_cfg.seeds = {*bench_seed};
            if (bench_steps) {
                if (*bench_steps < 8) return fail(kUsageError, "bench-storm: --steps must be at least 8");
                bench_cfg.steps = *bench_steps;
                bench_cfg.report_at = {*bench_steps / 8, *bench_steps};
            }
            vomps::write_bench_csv(std::cout, vomps::run_storm_bench(bench_cfg));
            return 0;
        }
        if (*eval) {
            if (!std::ifstream(ckpt_path)) return fail(kUsageError, "cannot open checkpoint '" + ckpt_path + "'");
            vomps::RunConfig cfg;
            try {
                cfg = vomps::RunConfig::defaults_for(eval_env);
                cfg.action_noise_frac = eval_noise;
                vomps::validate_config(cfg);
            } catch (const vomps::ConfigError& e) {
                return fail(kUsageError, e.what());
            }
            const vomps::Policy policy = vomps::policy_from_snapshot(vomps::read_named_arrays(ckpt_path));
            vomps::Rng rng(eval_seed, 2);
            const auto stats = vomps::evaluate_mc_return(vomps::make_run_environment(cfg), policy, eval_rollouts,
                                                         eval_horizon.value_or(cfg.eval_horizon), cfg.gamma, rng,
                                                         eval_greedy);
            std::printf("mc_return_mean,mc_return_std,episodic_return_mean,episodic_return_std\n");
            std::printf("%.17g,%.17g,%.17g,%.17g\n", stats.mc_mean, stats.mc_std, stats.episodic_mean,
                        stats.episodic_std);
            return 0;
        }
    } catch (const std::exception& e) {
        return fail(kRuntimeError, e.what());
    }
    return fail(kUsageError, "no subcommand given");
}
