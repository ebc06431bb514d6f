// Shared simulation checks used by the unit tests and the acceptance binary.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vomps/agents.hpp"
#include "vomps/learners.hpp"
#include "vomps/oracle.hpp"
#include "vomps/policies.hpp"
#include "vomps/traces.hpp"

namespace vomps::testing {

/// Mean of a scalar series with a batch-means standard error, which stays
/// honest when consecutive samples are correlated.
struct MeanEstimate {
    double mean = 0.0;
    double se = 0.0;
};

inline MeanEstimate batch_mean(const std::vector<double>& xs, std::size_t batches = 100) {
    const std::size_t per = xs.size() / batches;
    MeanEstimate e;
    std::vector<double> means(batches, 0.0);
    for (std::size_t b = 0; b < batches; ++b) {
        for (std::size_t i = 0; i < per; ++i) means[b] += xs[b * per + i];
        means[b] /= static_cast<double>(per);
        e.mean += means[b] / static_cast<double>(batches);
    }
    double var = 0.0;
    for (double m : means) var += (m - e.mean) * (m - e.mean);
    var /= static_cast<double>(batches - 1);
    e.se = std::sqrt(var / static_cast<double>(batches));
    return e;
}

/// Logits of the fixed target policy used by the estimator checks.
inline Vec probe_logits(const TabularMdp& mdp) {
    Vec logits(mdp.n_state_actions(), 0.0);
    logits[mdp.sa_index(two_circle_ids::A, two_circle_ids::kToB)] = 0.4;
    logits[mdp.sa_index(two_circle_ids::A, two_circle_ids::kToC)] = -0.3;
    return logits;
}

struct ZMeanCheck {
    Vec exact;
    std::vector<MeanEstimate> z;
};

/// Runs the emphatic trace on two-circle under uniform μ with the exact ratio
/// and the exact V_π injected, λ1 = λ2 = 1, and returns the per-coordinate
/// mean of Z next to the exact gradient of J_γ̂.
inline ZMeanCheck z_mean_check(double gamma_hat, std::size_t steps, std::uint64_t seed) {
    const TabularMdp mdp = two_circle();
    const PolicyMatrix mu = PolicyMatrix::uniform(mdp);
    const Vec logits = probe_logits(mdp);
    const Policy pi = TabularSoftmaxPolicy(mdp.offsets(), logits);
    const PolicyMatrix pi_m = std::get<TabularSoftmaxPolicy>(pi).matrix();
    const Vec c = exact_density_ratio(mdp, pi_m, mu, gamma_hat);
    const Vec v = value_function(mdp, pi_m);

    ZMeanCheck out;
    out.exact = exact_gradient(mdp, mu, gamma_hat, logits);
    const std::size_t n = logits.size();
    std::vector<std::vector<double>> series(n, std::vector<double>(steps));

    Rng rng(seed);
    const BehaviorPolicy behavior(mu);
    GeoffTraceState st;
    State s{mdp.initial_state(), {}};
    for (std::size_t t = 0; t < steps; ++t) {
        const Action a = behavior.sample(s, rng);
        const Transition tr = step_tabular(mdp, s.index, a.index, rng);
        const double rho = importance_ratio(pi, behavior, s, a, 1e9);
        const double delta = tr.r + mdp.gamma() * v[tr.s_next.index] - v[s.index];
        const Vec g = log_prob_grad(pi, s, a);
        GeoffTraceInputs in;
        in.rho = rho;
        in.c = c[s.index];
        in.v = v[s.index];
        in.delta = delta;
        in.grad_logpi_now = g;
        in.grad_logpi_now_at_prev_params = g;
        in.gamma = mdp.gamma();
        in.gamma_hat = gamma_hat;
        in.lambda1 = 1.0;
        in.lambda2 = 1.0;
        const EmphaticOutputs o = geoffpac_trace_step(st, in);
        for (std::size_t k = 0; k < n; ++k) series[k][t] = o.z_now[k];
        s = tr.s_next;
    }
    for (const auto& xs : series) out.z.push_back(batch_mean(xs));
    return out;
}

/// Agent with the default approximators of `env` where the ratio can be
/// replaced. Network weights come from Rng(seed) so two calls with the same
/// seed start from identical parameters.
inline Agent build_agent(Algorithm algorithm, const Environment& env, const AgentHyper& hyper, std::uint64_t seed,
                         std::optional<RatioFn> ratio_override = std::nullopt) {
    Rng rng(seed);
    if (const auto* tab = std::get_if<TabularEnv>(&env)) {
        const TabularMdp& mdp = tab->mdp();
        std::optional<RatioFn> ratio = ratio_override;
        if (!ratio && uses_ratio(algorithm)) ratio = RatioFn::table(mdp.n_states());
        return Agent(algorithm, TabularSoftmaxPolicy(mdp), ValueFn::table(mdp.n_states()), ratio, hyper, mdp.gamma());
    }
    const MlpShape shape{4, {64, 64}, 1};
    GaussianMlpPolicy policy(MlpParams::initialize(shape, rng), Vec{0.5});
    ValueFn critic = ValueFn::network(MlpParams::initialize(shape, rng));
    std::optional<RatioFn> ratio = ratio_override;
    if (!ratio && uses_ratio(algorithm)) ratio = RatioFn::network(MlpParams::initialize(shape, rng));
    return Agent(algorithm, policy, critic, ratio, hyper, std::get<CartPoleEnv>(env).gamma());
}

struct IdentityCheck {
    bool identical = true;
    std::size_t steps = 0;
    std::size_t first_mismatch = 0;
    double max_param_change = 0.0;  // guards against a trivially idle comparison
};

/// Feeds the same μ-generated transition stream to both agents and compares
/// the policy parameters with exact equality after every step.
inline IdentityCheck compare_trajectories(Agent& a, Agent& b, Environment env, std::size_t steps,
                                          std::uint64_t seed) {
    Rng rng(seed);
    const BehaviorPolicy mu = make_behavior(env);
    IdentityCheck out;
    const auto p0 = policy_params(a.policy());
    const Vec initial(p0.begin(), p0.end());
    std::visit(
        [&](auto& e) {
            State s = e.reset(rng);
            for (std::size_t t = 0; t < steps; ++t) {
                const Action act = mu.sample(s, rng);
                WrappedTransition w = e.step(act, rng);
                a.step(w.transition, w.discount, mu);
                b.step(w.transition, w.discount, mu);
                ++out.steps;
                const auto pa = policy_params(a.policy());
                const auto pb = policy_params(b.policy());
                if (!std::equal(pa.begin(), pa.end(), pb.begin(), pb.end())) {
                    out.identical = false;
                    out.first_mismatch = t;
                    return;
                }
                s = std::move(w.transition.s_next);
            }
        },
        env);
    const auto pa = policy_params(a.policy());
    for (std::size_t i = 0; i < initial.size(); ++i)
        out.max_param_change = std::max(out.max_param_change, std::abs(pa[i] - initial[i]));
    return out;
}

/// The three reductions between the algorithms, each run on `env`.
struct ReductionChecks {
    IdentityCheck vomps_to_ace_storm;
    IdentityCheck vomps_to_geoffpac;
    IdentityCheck ace_storm_to_ace;
};

inline ReductionChecks reduction_checks(const Environment& env, const AgentHyper& base, std::size_t steps,
                                        std::uint64_t seed) {
    ReductionChecks r;
    {
        AgentHyper h = base;
        h.gamma_hat = 0.0;
        Agent v = build_agent(Algorithm::Vomps, env, h, seed, RatioFn::constant(1.0));
        Agent a = build_agent(Algorithm::AceStorm, env, h, seed);
        r.vomps_to_ace_storm = compare_trajectories(v, a, env, steps, seed + 1);
    }
    {
        Agent v = build_agent(Algorithm::Vomps, env, base, seed);
        v.storm()->alpha_override = 1.0;
        v.storm()->eta_override = base.baseline_eta;
        Agent g = build_agent(Algorithm::GeoffPac, env, base, seed);
        r.vomps_to_geoffpac = compare_trajectories(v, g, env, steps, seed + 1);
    }
    {
        Agent s = build_agent(Algorithm::AceStorm, env, base, seed);
        s.storm()->alpha_override = 1.0;
        s.storm()->eta_override = base.baseline_eta;
        Agent a = build_agent(Algorithm::Ace, env, base, seed);
        r.ace_storm_to_ace = compare_trajectories(s, a, env, steps, seed + 1);
    }
    return r;
}

/// Tally of a finite-difference comparison at a relative tolerance.
struct FdReport {
    int checked = 0;
    int failed = 0;
    double worst = 0.0;  // largest |analytic − fd| / max(1, |fd|)

    void add(double analytic, double fd, double tol) {
        const double err = std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
        worst = std::max(worst, err);
        ++checked;
        if (err > tol) ++failed;
    }
    void merge(const FdReport& o) {
        checked += o.checked;
        failed += o.failed;
        worst = std::max(worst, o.worst);
    }
};

inline MlpParams random_params(const MlpShape& shape, Rng& rng, double scale = 1.0) {
    Vec v(shape.param_count());
    for (double& x : v) x = scale * rng.uniform(-1.0, 1.0);
    return MlpParams(shape, v);
}

/// Central differences of uᵀ mlp(x) against mlp_grad over random networks.
/// Entries whose difference quotient straddles a ReLU kink are skipped.
inline FdReport mlp_fd_check(std::uint64_t seed, int draws, double tol = 1e-4) {
    Rng rng(seed);
    const std::vector<MlpShape> shapes{{4, {64, 64}, 1}, {2, {5, 3}, 2}, {3, {7}, 1}, {2, {}, 3}};
    FdReport rep;
    for (int draw = 0; draw < draws; ++draw) {
        const MlpShape& shape = shapes[draw % shapes.size()];
        MlpParams p = random_params(shape, rng, 0.8);
        Vec x(shape.in_dim), up(shape.out_dim);
        for (double& v : x) v = rng.uniform(-2.0, 2.0);
        for (double& v : up) v = rng.uniform(-1.0, 1.0);
        const Vec g = mlp_grad(p, x, up);
        auto f = [&](std::size_t i, double value) {
            const double orig = p.values()[i];
            p.values()[i] = value;
            const double out = dot(mlp_forward(p, x), up);
            p.values()[i] = orig;
            return out;
        };
        const double h = 1e-5;
        for (std::size_t i = 0; i < p.size(); i += 1 + p.size() / 40) {
            const double orig = p.values()[i];
            const double fd = (f(i, orig + h) - f(i, orig - h)) / (2 * h);
            const double fd_half = (f(i, orig + h / 2) - f(i, orig - h / 2)) / h;
            if (std::abs(fd - fd_half) > 1e-7 * (1.0 + std::abs(fd))) continue;
            rep.add(g[i], fd, tol);
        }
    }
    return rep;
}

/// Central differences of log π with respect to every policy parameter.
inline FdReport log_prob_fd_check(Policy policy, const State& s, const Action& a, double tol = 1e-4) {
    const Vec g = log_prob_grad(policy, s, a);
    auto params = policy_params(policy);
    auto f = [&](std::size_t i, double value) {
        const double orig = params[i];
        params[i] = value;
        const double out = log_prob(policy, s, a);
        params[i] = orig;
        return out;
    };
    const double h = 1e-6;
    FdReport rep;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        const double fd = (f(i, orig + h) - f(i, orig - h)) / (2 * h);
        const double fd_half = (f(i, orig + h / 2) - f(i, orig - h / 2)) / h;
        if (std::abs(fd - fd_half) > 1e-6 * (1.0 + std::abs(fd))) continue;
        rep.add(g[i], fd, tol);
    }
    return rep;
}

inline GaussianMlpPolicy random_gaussian(Rng& rng, double scale, double sigma = 0.5) {
    return GaussianMlpPolicy(random_params(MlpShape{4, {16, 16}, 1}, rng, scale), Vec{sigma});
}

inline State random_cart_state(Rng& rng) {
    State s;
    s.features = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-0.2, 0.2), rng.uniform(-1.0, 1.0)};
    return s;
}

/// Random MDP with every transition probability positive, so every policy is ergodic.
inline TabularMdp random_mdp(Rng& rng, std::size_t n_states, double gamma) {
    std::vector<std::size_t> actions(n_states);
    std::size_t n_sa = 0;
    for (auto& a : actions) {
        a = 1 + rng.uniform_index(3);
        n_sa += a;
    }
    Vec p(n_sa * n_states), r(n_sa * n_states);
    for (std::size_t sa = 0; sa < n_sa; ++sa) {
        double total = 0.0;
        for (std::size_t j = 0; j < n_states; ++j) total += p[sa * n_states + j] = 0.05 + rng.uniform();
        for (std::size_t j = 0; j < n_states; ++j) {
            p[sa * n_states + j] /= total;
            r[sa * n_states + j] = rng.uniform(-1.0, 1.0);
        }
    }
    return TabularMdp(actions, p, r, gamma);
}

inline PolicyMatrix random_policy(const TabularMdp& mdp, Rng& rng) {
    Vec logits(mdp.n_state_actions());
    for (double& l : logits) l = rng.uniform(-2.0, 2.0);
    return softmax_policy(mdp, logits);
}

/// Analytic gradient of J_γ̂ for a tabular softmax policy:
/// ∇J = Σ_s d_γ̂(s) ∇V(s) + Σ_s ∇d_γ̂(s) V(s), with ∇V and ∇d_γ̂ from
/// differentiating the two linear systems that define them (î ≡ 1).
inline Vec analytic_gradient(const TabularMdp& mdp, const PolicyMatrix& mu, double gamma_hat, const Vec& logits) {
    const std::size_t n = mdp.n_states();
    const PolicyMatrix pi = softmax_policy(mdp, logits);
    const DenseMatrix p = transition_under(mdp, pi);
    const Vec d_mu = stationary(transition_under(mdp, mu));
    const Vec d_hat = d_hat_gamma(p, d_mu, gamma_hat);
    const Vec v = value_function(mdp, pi);

    // q(s,a) = Σ_s' p(s'|s,a)(r + γV(s')).
    Vec q(mdp.n_state_actions(), 0.0);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a = 0; a < mdp.n_actions(s); ++a)
            for (std::size_t j = 0; j < n; ++j)
                q[mdp.sa_index(s, a)] += mdp.prob(s, a, j) * (mdp.reward(s, a, j) + mdp.gamma() * v[j]);

    // u^T = d_γ̂^T (I − γP)^{-1} and w = (I − γ̂P)^{-1} V.
    DenseMatrix a_v = DenseMatrix::identity(n);
    DenseMatrix a_d = DenseMatrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            a_v(i, j) -= mdp.gamma() * p(j, i);
            a_d(i, j) -= gamma_hat * p(i, j);
        }
    const Vec u = solve_linear(a_v, d_hat);
    const Vec w = solve_linear(a_d, v);

    Vec g(logits.size(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t b = 0; b < mdp.n_actions(s); ++b) {
            // ∂π(a|s)/∂θ_{s,b} = π(a|s)(1[a=b] − π(b|s)).
            double term_v = 0.0;
            double term_d = 0.0;
            for (std::size_t a = 0; a < mdp.n_actions(s); ++a) {
                const double dpi = pi(s, a) * ((a == b ? 1.0 : 0.0) - pi(s, b));
                term_v += dpi * q[mdp.sa_index(s, a)];
                double pw = 0.0;
                for (std::size_t j = 0; j < n; ++j) pw += mdp.prob(s, a, j) * w[j];
                term_d += dpi * pw;
            }
            // ∇d_γ̂ = γ̂(I − γ̂P^T)^{-1} ∇P^T d_γ̂, so Σ ∇d_γ̂ V = γ̂ d_γ̂^T ∇P w.
            g[mdp.sa_index(s, b)] = u[s] * term_v + gamma_hat * d_hat[s] * term_d;
        }
    }
    return g;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Largest residual of the three DP fixed points on (mdp, π, μ):
/// d_μ = P_μ^T d_μ, d_γ̂ = (1−γ̂)d_μ + γ̂P_π^T d_γ̂ and V = r_π + γP_π V.
inline double dp_residual(const TabularMdp& mdp, const PolicyMatrix& pi, const PolicyMatrix& mu, double gamma_hat) {
    const std::size_t n = mdp.n_states();
    const DenseMatrix p_mu = transition_under(mdp, mu);
    const DenseMatrix p_pi = transition_under(mdp, pi);
    const Vec d_mu = stationary(p_mu);
    const Vec d_hat = d_hat_gamma(p_pi, d_mu, gamma_hat);
    const Vec v = value_function(mdp, pi);
    const Vec r = expected_reward(mdp, pi);
    double worst = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double mu_in = 0.0, pi_in = 0.0, pv = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mu_in += p_mu(i, j) * d_mu[i];
            pi_in += p_pi(i, j) * d_hat[i];
            pv += p_pi(j, i) * v[i];
        }
        worst = std::max(worst, std::abs(mu_in - d_mu[j]));
        if (gamma_hat < 1.0) worst = std::max(worst, std::abs((1.0 - gamma_hat) * d_mu[j] + gamma_hat * pi_in - d_hat[j]));
        worst = std::max(worst, std::abs(r[j] + mdp.gamma() * pv - v[j]));
    }
    return worst;
}

/// ∞-norm error of a TD(0) value table against V_π after `steps` on-policy
/// steps of the probe policy on two-circle.
inline double td_convergence_error(std::size_t steps, double alpha, std::uint64_t seed) {
    const TabularMdp mdp = two_circle();
    const Policy pi = TabularSoftmaxPolicy(mdp.offsets(), probe_logits(mdp));
    const Vec v_star = value_function(mdp, std::get<TabularSoftmaxPolicy>(pi).matrix());
    ValueFn v = ValueFn::table(mdp.n_states());
    Rng rng(seed);
    State s{mdp.initial_state(), {}};
    for (std::size_t t = 0; t < steps; ++t) {
        const Action a = sample_action(pi, s, rng);
        const Transition tr = step_tabular(mdp, s.index, a.index, rng);
        td_update(v, alpha, tr, mdp.gamma());
        s = tr.s_next;
    }
    return max_abs_diff(v.params(), v_star);
}

/// ∞-norm error of the learned ratio table against d_γ̂ / d_μ for the probe
/// policy on two-circle, trained from uniform-μ data.
inline double ratio_convergence_error(std::size_t steps, double alpha, double gamma_hat, std::uint64_t seed) {
    const TabularMdp mdp = two_circle();
    const PolicyMatrix mu_m = PolicyMatrix::uniform(mdp);
    const BehaviorPolicy mu(mu_m);
    const Policy pi = TabularSoftmaxPolicy(mdp.offsets(), probe_logits(mdp));
    const Vec c_star = exact_density_ratio(mdp, std::get<TabularSoftmaxPolicy>(pi).matrix(), mu_m, gamma_hat);
    RatioFn c = RatioFn::table(mdp.n_states());
    Rng rng(seed);
    State s{mdp.initial_state(), {}};
    for (std::size_t t = 0; t < steps; ++t) {
        const Action a = mu.sample(s, rng);
        const Transition tr = step_tabular(mdp, s.index, a.index, rng);
        ratio_update(c, alpha, tr, importance_ratio(pi, mu, s, a, 1e9), gamma_hat);
        s = tr.s_next;
    }
    Vec learned(mdp.n_states());
    for (std::size_t j = 0; j < learned.size(); ++j) learned[j] = c.value(State{j, {}});
    return max_abs_diff(learned, c_star);
}

}  // namespace vomps::testing
