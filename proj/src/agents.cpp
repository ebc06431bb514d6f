#include "vomps/agents.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vomps {

Algorithm parse_algorithm(std::string_view name) {
    if (name == "vomps") return Algorithm::Vomps;
    if (name == "ace-storm") return Algorithm::AceStorm;
    if (name == "geoffpac") return Algorithm::GeoffPac;
    if (name == "ace") return Algorithm::Ace;
    throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

std::string_view algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Vomps: return "vomps";
        case Algorithm::AceStorm: return "ace-storm";
        case Algorithm::GeoffPac: return "geoffpac";
        case Algorithm::Ace: return "ace";
    }
    return "?";
}

bool uses_storm(Algorithm a) { return a == Algorithm::Vomps || a == Algorithm::AceStorm; }
bool uses_ratio(Algorithm a) { return a == Algorithm::Vomps || a == Algorithm::GeoffPac; }

void PolicyCheckpoints::record(std::size_t step, double eta, std::span<const double> params) {
    if (interval_ == 0) return;
    if (step % interval_ == 0 || params_.empty()) {
        params_.emplace_back(params.begin(), params.end());
        mass_.push_back(0.0);
    }
    mass_.back() += 1.0 / (eta * eta);
}

Agent::Agent(Algorithm algorithm, Policy policy, ValueFn critic, std::optional<RatioFn> ratio, AgentHyper hyper,
             double env_gamma)
    : algorithm_(algorithm),
      hyper_(hyper),
      policy_(policy),
      policy_prev_(std::move(policy)),
      critic_(std::move(critic)),
      ratio_(std::move(ratio)),
      arrival_discount_(env_gamma) {
    if (uses_ratio(algorithm_)) {
        if (!ratio_) throw std::invalid_argument("Agent: algorithm requires a density-ratio function");
        trace_ = GeoffTraceState{};
    } else {
        ratio_.reset();
        trace_ = AceTraceState{};
    }
    if (uses_storm(algorithm_)) storm_.emplace(hyper_.storm);
    if (hyper_.checkpoint_interval > 0) checkpoints_.emplace(hyper_.checkpoint_interval);
    if (!(hyper_.alpha_v >= 0.0 && hyper_.alpha_v <= 1.0) || !(hyper_.alpha_psi >= 0.0 && hyper_.alpha_psi <= 1.0))
        throw std::invalid_argument("Agent: critic and ratio stepsizes must lie in [0,1]");
    if (!(hyper_.lambda1 >= 0.0 && hyper_.lambda1 <= 1.0) || !(hyper_.lambda2 >= 0.0 && hyper_.lambda2 <= 1.0))
        throw std::invalid_argument("Agent: lambda1 and lambda2 must lie in [0,1]");
    if (!(hyper_.gamma_hat >= 0.0 && hyper_.gamma_hat < 1.0))
        throw std::invalid_argument("Agent: gamma_hat must lie in [0,1)");
}

StepInfo Agent::step(const Transition& tr, double gamma_t, const BehaviorPolicy& mu) {
    StepInfo info;
    info.rho = importance_ratio(policy_, mu, tr.s, tr.a, hyper_.rho_max);

    info.delta = td_update(critic_, hyper_.alpha_v, tr, gamma_t);
    if (ratio_) ratio_update(*ratio_, hyper_.alpha_psi, tr, info.rho, hyper_.gamma_hat);

    const Vec grad_now = log_prob_grad(policy_, tr.s, tr.a);
    const Vec grad_prev_params = log_prob_grad(policy_prev_, tr.s, tr.a);

    EmphaticOutputs z;
    if (auto* geoff = std::get_if<GeoffTraceState>(&trace_)) {
        GeoffTraceInputs in;
        in.rho = info.rho;
        in.c = ratio_->value(tr.s);
        in.v = critic_.value(tr.s);
        in.delta = info.delta;
        in.interest = hyper_.interest;
        in.grad_logpi_now = grad_now;
        in.grad_logpi_now_at_prev_params = grad_prev_params;
        in.gamma = arrival_discount_;
        in.gamma_hat = hyper_.gamma_hat;
        in.lambda1 = hyper_.lambda1;
        in.lambda2 = hyper_.lambda2;
        z = geoffpac_trace_step(*geoff, in);
        info.trace = {geoff->t - 1, geoff->f1, norm2(geoff->f2), z.m1, norm2(z.m2), info.rho, info.delta};
    } else {
        auto& ace = std::get<AceTraceState>(trace_);
        AceTraceInputs in;
        in.rho = info.rho;
        in.delta = info.delta;
        in.interest = hyper_.interest;
        in.grad_logpi_now = grad_now;
        in.grad_logpi_now_at_prev_params = grad_prev_params;
        in.gamma = arrival_discount_;
        in.lambda1 = hyper_.lambda1;
        z = ace_trace_step(ace, in);
        info.trace = {ace.t - 1, ace.f1, 0.0, z.m1, 0.0, info.rho, info.delta};
    }
    info.z_norm = norm2(z.z_now);

    std::span<const double> direction = z.z_now;
    if (storm_) {
        const StormStep s = storm_actor_step(*storm_, z.z_now, z.z_prev);
        info.eta = s.eta;
        info.alpha = s.alpha;
        direction = storm_->g;
    } else {
        info.eta = hyper_.baseline_eta;
        info.alpha = 1.0;
    }
    info.direction_norm = norm2(direction);

    if (checkpoints_) checkpoints_->record(steps_, info.eta, policy_params(policy_));

    policy_prev_ = policy_;
    axpy(info.eta, direction, policy_params(policy_));
    if (!all_finite(policy_params(policy_))) throw NumericError("actor update produced non-finite parameters");

    arrival_discount_ = gamma_t;
    ++steps_;
    return info;
}

BehaviorPolicy make_behavior(const Environment& env) {
    if (const auto* tab = std::get_if<TabularEnv>(&env)) return BehaviorPolicy::uniform(tab->mdp());
    return BehaviorPolicy(BehaviorPolicy::Box{1, -1.0, 1.0});
}

Agent make_agent(Algorithm algorithm, const Environment& env, const AgentHyper& hyper, double sigma, Rng& rng) {
    std::optional<RatioFn> ratio;
    if (const auto* tab = std::get_if<TabularEnv>(&env)) {
        const TabularMdp& mdp = tab->mdp();
        if (uses_ratio(algorithm)) ratio = RatioFn::table(mdp.n_states());
        return Agent(algorithm, TabularSoftmaxPolicy(mdp), ValueFn::table(mdp.n_states()), std::move(ratio), hyper,
                     mdp.gamma());
    }
    const auto& cart = std::get<CartPoleEnv>(env);
    const MlpShape state_to_scalar{4, {64, 64}, 1};
    GaussianMlpPolicy policy(MlpParams::initialize(state_to_scalar, rng), Vec{sigma}, -1.0, 1.0);
    ValueFn critic = ValueFn::network(MlpParams::initialize(state_to_scalar, rng));
    if (uses_ratio(algorithm)) ratio = RatioFn::network(MlpParams::initialize(state_to_scalar, rng));
    return Agent(algorithm, std::move(policy), std::move(critic), std::move(ratio), hyper, cart.gamma());
}

StepInfo train(Agent& agent, Environment& env, const BehaviorPolicy& mu, std::size_t steps, Rng& rng,
               const TrainHooks& hooks) {
    if (steps == 0) throw std::invalid_argument("train: steps must be at least 1");
    StepInfo last;
    std::visit(
        [&](auto& e) {
            State s = e.current();
            for (std::size_t t = 1; t <= steps; ++t) {
                const Action a = mu.sample(s, rng);
                WrappedTransition w = e.step(a, rng);
                last = agent.step(w.transition, w.discount, mu);
                s = std::move(w.transition.s_next);
                if (hooks.on_eval && hooks.eval_interval > 0 && t % hooks.eval_interval == 0)
                    hooks.on_eval(t, agent, last);
            }
        },
        env);
    return last;
}

Policy output_policy(const Agent& agent, OutputMode mode, Rng& rng) {
    if (mode == OutputMode::Final) return agent.policy();
    const PolicyCheckpoints* ck = agent.checkpoints();
    if (ck == nullptr || ck->empty()) throw std::logic_error("output_policy: no checkpoints were recorded");
    double total = 0.0;
    for (double m : ck->mass()) total += m;
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t chosen = ck->mass().size() - 1;
    for (std::size_t i = 0; i < ck->mass().size(); ++i) {
        acc += ck->mass()[i];
        if (u < acc) {
            chosen = i;
            break;
        }
    }
    Policy out = agent.policy();
    const Vec& theta = ck->params()[chosen];
    auto dst = policy_params(out);
    std::copy(theta.begin(), theta.end(), dst.begin());
    return out;
}

}  // namespace vomps
