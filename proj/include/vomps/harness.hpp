#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vomps/agents.hpp"

namespace vomps {

/// Raised for unreadable or malformed configuration; `field()` names the
/// offending key ("" when the problem is not tied to one key).
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what) : std::runtime_error(what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

struct RunConfig {
    std::string env = "two-circle";
    std::string algorithm = "vomps";
    double gamma = 0.6;
    double gamma_hat = 0.2;
    double lambda1 = 0.7;
    double lambda2 = 0.6;
    double alpha_v = 0.05;
    double alpha_psi = 0.05;
    double k = 0.1;
    double w = 10.0;
    double beta = 100.0;
    double baseline_eta = 0.01;
    double rho_max = 10.0;
    double sigma = 0.5;
    double reward_scale = kTwoCircleRewardScale;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::size_t total_steps = 20000;
    std::size_t eval_interval = 1000;
    std::size_t eval_rollouts = 20;
    std::size_t eval_horizon = 100;
    bool eval_greedy = false;
    double action_noise_frac = 0.0;
    std::size_t smooth_window = 20;
    std::size_t checkpoint_interval = 0;
    std::size_t workers = 1;
    std::string output = "out";
    bool save_policy = true;

    /// Defaults for env-dependent fields (γ, k, eval horizon) for `env`.
    static RunConfig defaults_for(const std::string& env);

    AgentHyper agent_hyper() const;
    /// Every field as (key, value) in a fixed order, values in round-trip form.
    std::vector<std::pair<std::string, std::string>> entries() const;
};

/// Parses "key = value" lines ('#' starts a comment). Env-dependent defaults
/// are taken from the `env` key before the other keys are applied. Unknown
/// keys, unparsable values and out-of-range values raise ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Applies one "key=value" assignment (used for overrides).
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
void validate_config(const RunConfig& cfg);

Environment make_run_environment(const RunConfig& cfg);

struct ReturnStats {
    double mc_mean = 0.0;
    double mc_std = 0.0;
    double episodic_mean = 0.0;
    double episodic_std = 0.0;
};

/// Rolls the policy out from the environment's initial state `n_rollouts`
/// times for at most `horizon` steps. mc = Σ γ^t r_t; episodic = Σ r_t up to
/// the first terminal step. `env` is copied, so the caller's instance is not
/// touched. With greedy set, the policy's mode is executed instead of a sample.
ReturnStats evaluate_mc_return(const Environment& env, const Policy& policy, std::size_t n_rollouts,
                               std::size_t horizon, double gamma, Rng& rng, bool greedy = false);

/// Trailing moving average; the first window−1 points average the available prefix.
Vec smooth(std::span<const double> series, std::size_t window);

struct MetricRow {
    std::size_t step = 0;
    std::uint64_t seed = 0;
    double mc_return = 0.0;
    double episodic_return = 0.0;
    double pi_ab = 0.0;  // NaN for environments without a tabular start state choice
    double g_norm = 0.0;
    double eta = 0.0;
};

struct AggregateRow {
    std::size_t step = 0;
    double mc_mean = 0.0;
    double mc_std = 0.0;
    double mc_smooth = 0.0;
    double episodic_mean = 0.0;
    double episodic_std = 0.0;
    double episodic_smooth = 0.0;
    double pi_ab_mean = 0.0;
    double pi_ab_std = 0.0;
    double pi_ab_smooth = 0.0;
};

struct ExperimentResult {
    std::vector<std::vector<MetricRow>> per_seed;  // in config seed order
    std::vector<AggregateRow> aggregate;
    std::vector<std::filesystem::path> files;
};

/// Population mean/std per step across seeds plus smoothed means.
std::vector<AggregateRow> aggregate_rows(const std::vector<std::vector<MetricRow>>& per_seed, std::size_t window);

/// Trains one agent for `seed` and returns its metric series; the trained
/// policy is copied to `final_policy` when given.
std::vector<MetricRow> run_seed(const RunConfig& cfg, std::uint64_t seed, std::optional<Policy>* final_policy = nullptr);

/// Runs every seed (concurrently up to cfg.workers) and, when `write_files`
/// is set, writes seed_<seed>.csv, aggregate.csv and policy_seed_<seed>.ckpt
/// under cfg.output.
ExperimentResult run_experiment(const RunConfig& cfg, bool write_files = true);

void write_config_header(std::ostream& out, const RunConfig& cfg);
void write_seed_csv(std::ostream& out, const std::vector<MetricRow>& rows);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

/// Long-format CSV (quantity,policy,state,value) of d_μ, d_π, d_γ̂, V_π, C and
/// the objectives for the deterministic policies of a tabular environment.
void write_oracle_csv(std::ostream& out, const std::string& env_name, double gamma_hat,
                      double reward_scale = kTwoCircleRewardScale);

/// Stochastic non-convex test problem: f(x) = ½ λ ‖x‖² − Σ_j a_j exp(−‖x − c_j‖² / (2 s²))
/// with sampled gradients ∇f(x) + σ ξ + z x, ξ ~ N(0, I), z ~ N(0, τ²).
struct BumpsProblem {
    std::size_t dim = 10;
    std::size_t bumps = 8;
    double ridge = 0.05;
    double width = 1.0;
    double noise = 1.0;
    double mult_noise = 0.5;

    struct Instance {
        std::vector<Vec> centers;
        Vec heights;
    };
    Instance sample(Rng& rng) const;
    double value(const Instance& inst, std::span<const double> x) const;
    Vec grad(const Instance& inst, std::span<const double> x) const;
};

struct BenchConfig {
    BumpsProblem problem{};
    std::size_t steps = 64000;
    std::vector<std::size_t> report_at{8000, 64000};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    StormHyper storm{0.1, 10.0, 100.0};
    std::vector<double> sgd_etas{1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
};

struct BenchResult {
    /// Seed-averaged running mean of ‖∇f(x_t)‖² at each report point.
    Vec storm_running;
    Vec sgd_running;     // for the best constant stepsize
    double sgd_best_eta = 0.0;
    std::vector<std::size_t> report_at;
};

/// Runs STORM and constant-stepsize SGD on the bumps problem with shared
/// instances, initial points and sample noise per seed.
BenchResult run_storm_bench(const BenchConfig& cfg);
void write_bench_csv(std::ostream& out, const BenchResult& result);

}  // namespace vomps
