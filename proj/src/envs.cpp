#include "vomps/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vomps {

TabularMdp::TabularMdp(std::vector<std::size_t> actions_per_state, Vec transition, Vec reward, double gamma,
                       std::size_t initial_state)
    : p_(std::move(transition)), r_(std::move(reward)), gamma_(gamma), initial_(initial_state) {
    if (actions_per_state.empty()) throw std::invalid_argument("TabularMdp: no states");
    offsets_.push_back(0);
    for (std::size_t n : actions_per_state) {
        if (n == 0) throw std::invalid_argument("TabularMdp: state without actions");
        offsets_.push_back(offsets_.back() + n);
    }
    const std::size_t ns = n_states();
    if (p_.size() != n_state_actions() * ns || r_.size() != p_.size())
        throw std::invalid_argument("TabularMdp: tensor size mismatch");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMdp: gamma must lie in [0,1)");
    if (initial_ >= ns) throw std::invalid_argument("TabularMdp: initial state out of range");
    if (!all_finite(r_)) throw std::invalid_argument("TabularMdp: non-finite reward");
    for (std::size_t sa = 0; sa < n_state_actions(); ++sa) {
        double total = 0.0;
        for (std::size_t j = 0; j < ns; ++j) {
            const double p = p_[sa * ns + j];
            if (!(p >= 0.0)) throw std::invalid_argument("TabularMdp: negative transition probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("TabularMdp: transition row does not sum to 1");
    }
}

namespace {

struct Edge {
    std::size_t from;
    std::size_t action;
    std::size_t to;
    double reward;
};

TabularMdp from_edges(const std::vector<std::size_t>& actions, const std::vector<Edge>& edges, double gamma) {
    const std::size_t ns = actions.size();
    const std::size_t nsa = std::accumulate(actions.begin(), actions.end(), std::size_t{0});
    std::vector<std::size_t> offsets{0};
    for (std::size_t n : actions) offsets.push_back(offsets.back() + n);
    Vec p(nsa * ns, 0.0);
    Vec r(nsa * ns, 0.0);
    for (const Edge& e : edges) {
        const std::size_t sa = offsets[e.from] + e.action;
        p[sa * ns + e.to] = 1.0;
        r[sa * ns + e.to] = e.reward;
    }
    return TabularMdp(actions, std::move(p), std::move(r), gamma, 0);
}

}  // namespace

TabularMdp two_circle(double reward_scale) {
    using namespace two_circle_ids;
    return from_edges({2, 1, 1, 1},
                      {
                          {A, kToB, B, 0.0},
                          {A, kToC, C, 10.0 * reward_scale},
                          {B, 0, D, 10.0},
                          {D, 0, A, 0.0},
                          {C, 0, A, 0.0},
                      },
                      0.6);
}

TabularMdp symmetric_two_circle() {
    // A=0, B=1, C=2, D=3, E=4; A→B→D→A and A→C→E→A.
    return from_edges({2, 1, 1, 1, 1},
                      {
                          {0, 0, 1, 0.0},
                          {0, 1, 2, 0.0},
                          {1, 0, 3, 10.0},
                          {2, 0, 4, 10.0},
                          {3, 0, 0, 0.0},
                          {4, 0, 0, 0.0},
                      },
                      0.6);
}

Transition step_tabular(const TabularMdp& mdp, std::size_t s, std::size_t a, Rng& rng) {
    if (s >= mdp.n_states() || a >= mdp.n_actions(s)) throw std::out_of_range("step_tabular: invalid state/action");
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t next = mdp.n_states();
    std::size_t last_supported = 0;
    for (std::size_t j = 0; j < mdp.n_states(); ++j) {
        const double p = mdp.prob(s, a, j);
        if (p <= 0.0) continue;
        last_supported = j;
        acc += p;
        if (u < acc) {
            next = j;
            break;
        }
    }
    // Rounding can leave u ≥ acc; fall back to the last supported state.
    if (next == mdp.n_states()) next = last_supported;
    Transition tr;
    tr.s.index = s;
    tr.a.index = a;
    tr.r = mdp.reward(s, a, next);
    tr.s_next.index = next;
    tr.terminal = false;
    return tr;
}

bool cartpole_out_of_bounds(const CartPoleState& s) {
    return std::abs(s.x) > cartpole::kXLimit || std::abs(s.theta) > cartpole::kThetaLimit;
}

CartPoleStep cartpole_step(const CartPoleState& state, double action) {
    using namespace cartpole;
    if (!std::isfinite(state.x) || !std::isfinite(state.x_dot) || !std::isfinite(state.theta) ||
        !std::isfinite(state.theta_dot) || !std::isfinite(action))
        throw NumericError("cartpole_step: non-finite state or action");

    const double force = kForceMag * std::clamp(action, -1.0, 1.0);
    const double total_mass = kCartMass + kPoleMass;
    const double pole_mass_length = kPoleMass * kHalfLength;
    const double cos_t = std::cos(state.theta);
    const double sin_t = std::sin(state.theta);

    const double temp = (force + pole_mass_length * state.theta_dot * state.theta_dot * sin_t) / total_mass;
    const double theta_acc =
        (kGravity * sin_t - cos_t * temp) / (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / total_mass));
    const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;

    CartPoleStep out;
    out.state.x = state.x + kDt * state.x_dot;
    out.state.x_dot = state.x_dot + kDt * x_acc;
    out.state.theta = state.theta + kDt * state.theta_dot;
    out.state.theta_dot = state.theta_dot + kDt * theta_acc;
    out.reward = 1.0;
    out.terminal = cartpole_out_of_bounds(out.state);
    return out;
}

WrappedTransition continuing_wrap(Transition tr, double gamma_env, const State& reset_state) {
    WrappedTransition out;
    if (tr.terminal) {
        tr.s_next = reset_state;
        out.discount = 0.0;
    } else {
        out.discount = gamma_env;
    }
    out.transition = std::move(tr);
    return out;
}

Vec noisy_action(std::span<const double> a, double noise_frac, Rng& rng) {
    Vec out(a.begin(), a.end());
    if (noise_frac == 0.0) return out;
    for (double& v : out) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double chi = rng.uniform();
        v *= 1.0 + sign * noise_frac * chi;
    }
    return out;
}

// ---------------------------------------------------------------------------

State TabularEnv::reset(Rng&) {
    state_ = mdp_.initial_state();
    return current();
}

WrappedTransition TabularEnv::step(const Action& a, Rng& rng) {
    Transition tr = step_tabular(mdp_, state_, a.index, rng);
    state_ = tr.s_next.index;
    return continuing_wrap(std::move(tr), mdp_.gamma(), current());
}

CartPoleState CartPoleEnv::sample_initial(Rng& rng) {
    CartPoleState s;
    s.x = rng.uniform(-0.05, 0.05);
    s.x_dot = rng.uniform(-0.05, 0.05);
    s.theta = rng.uniform(-0.05, 0.05);
    s.theta_dot = rng.uniform(-0.05, 0.05);
    return s;
}

State CartPoleEnv::reset(Rng& rng) {
    state_ = sample_initial(rng);
    steps_ = 0;
    return current();
}

WrappedTransition CartPoleEnv::step(const Action& a, Rng& rng) {
    if (a.values.size() != 1) throw std::invalid_argument("CartPoleEnv: action must be one-dimensional");
    const Vec executed = noisy_action(a.values, noise_frac_, rng);
    const CartPoleStep next = cartpole_step(state_, executed[0]);
    ++steps_;

    Transition tr;
    tr.s = current();
    tr.a = a;
    tr.r = next.reward;
    tr.s_next = State{0, next.state.features()};
    tr.terminal = next.terminal || steps_ >= cartpole::kMaxEpisodeSteps;

    if (tr.terminal) {
        reset(rng);
    } else {
        state_ = next.state;
    }
    return continuing_wrap(std::move(tr), gamma_, current());
}

Environment make_environment(const std::string& name, double action_noise_frac) {
    if (name == "two-circle") return TabularEnv(two_circle());
    if (name == "symmetric-two-circle") return TabularEnv(symmetric_two_circle());
    if (name == "cartpole") return CartPoleEnv(action_noise_frac);
    throw std::invalid_argument("unknown environment '" + name + "'");
}

}  // namespace vomps
