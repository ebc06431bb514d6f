#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <variant>

#include "vomps/envs.hpp"
#include "vomps/learners.hpp"
#include "vomps/policies.hpp"
#include "vomps/traces.hpp"

namespace vomps {

enum class Algorithm { Vomps, AceStorm, GeoffPac, Ace };

/// "vomps", "ace-storm", "geoffpac", "ace".
Algorithm parse_algorithm(std::string_view name);
std::string_view algorithm_name(Algorithm a);

bool uses_storm(Algorithm a);
bool uses_ratio(Algorithm a);

struct AgentHyper {
    double gamma_hat = 0.2;
    double lambda1 = 0.7;
    double lambda2 = 0.6;
    double alpha_v = 0.05;
    double alpha_psi = 0.05;
    double baseline_eta = 0.01;
    double rho_max = 10.0;
    double interest = 1.0;
    StormHyper storm{};
    /// Steps per Output-II checkpoint bucket; 0 disables recording.
    std::size_t checkpoint_interval = 0;
};

/// Bucketed record of θ_τ with aggregated 1/η_τ² mass.
class PolicyCheckpoints {
public:
    explicit PolicyCheckpoints(std::size_t interval) : interval_(interval) {}

    void record(std::size_t step, double eta, std::span<const double> params);

    std::size_t interval() const { return interval_; }
    const std::vector<Vec>& params() const { return params_; }
    const Vec& mass() const { return mass_; }
    bool empty() const { return params_.empty(); }

private:
    std::size_t interval_;
    std::vector<Vec> params_;
    Vec mass_;
};

struct StepInfo {
    double rho = 0.0;
    double delta = 0.0;
    double eta = 0.0;
    double alpha = 1.0;
    double z_norm = 0.0;
    double direction_norm = 0.0;
    TraceRecord trace;
};

/// Off-policy actor-critic learner. The step order is: critic, density
/// ratio (VOMPS/GeoffPAC), emphatic weights producing Z at θ_t and θ_{t−1},
/// actor update.
class Agent {
public:
    Agent(Algorithm algorithm, Policy policy, ValueFn critic, std::optional<RatioFn> ratio, AgentHyper hyper,
          double env_gamma);

    StepInfo step(const Transition& tr, double gamma_t, const BehaviorPolicy& mu);

    Algorithm algorithm() const { return algorithm_; }
    const AgentHyper& hyper() const { return hyper_; }
    const Policy& policy() const { return policy_; }
    const Policy& previous_policy() const { return policy_prev_; }
    const ValueFn& critic() const { return critic_; }
    const RatioFn* ratio() const { return ratio_ ? &*ratio_ : nullptr; }
    const StormState* storm() const { return storm_ ? &*storm_ : nullptr; }
    StormState* storm() { return storm_ ? &*storm_ : nullptr; }
    const PolicyCheckpoints* checkpoints() const { return checkpoints_ ? &*checkpoints_ : nullptr; }
    std::size_t steps() const { return steps_; }

private:
    Algorithm algorithm_;
    AgentHyper hyper_;
    Policy policy_;
    Policy policy_prev_;
    ValueFn critic_;
    std::optional<RatioFn> ratio_;
    std::variant<GeoffTraceState, AceTraceState> trace_;
    std::optional<StormState> storm_;
    std::optional<PolicyCheckpoints> checkpoints_;
    double arrival_discount_;
    std::size_t steps_ = 0;
};

/// Agent with the default approximators for the environment: tables and a
/// softmax policy for tabular MDPs; 64-64 ReLU networks and a fixed-σ
/// Gaussian policy for CartPole.
Agent make_agent(Algorithm algorithm, const Environment& env, const AgentHyper& hyper, double sigma, Rng& rng);

BehaviorPolicy make_behavior(const Environment& env);

struct TrainHooks {
    std::size_t eval_interval = 0;
    std::function<void(std::size_t step, const Agent& agent, const StepInfo& last)> on_eval;
};

/// Samples `steps` transitions under μ and feeds them to the agent, calling
/// on_eval after every eval_interval completed steps.
StepInfo train(Agent& agent, Environment& env, const BehaviorPolicy& mu, std::size_t steps, Rng& rng,
               const TrainHooks& hooks = {});

enum class OutputMode { Final, Sampled };

/// Output I returns the current policy; Output II draws a checkpoint with
/// probability proportional to its aggregated 1/η² mass.
Policy output_policy(const Agent& agent, OutputMode mode, Rng& rng);

}  // namespace vomps
