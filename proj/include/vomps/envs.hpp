#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <variant>

#include "vomps/numkit.hpp"

namespace vomps {

/// Observation passed to learners. Tabular environments fill `index`,
/// continuous ones fill `features`.
struct State {
    std::size_t index = 0;
    Vec features;
};

/// Discrete actions use `index`, continuous actions use `values`.
struct Action {
    std::size_t index = 0;
    Vec values;
};

struct Transition {
    State s;
    Action a;
    double r = 0.0;
    State s_next;
    bool terminal = false;
};

/// Finite MDP with a possibly different number of actions per state.
/// State-action pairs are addressed through a flat index (see sa_index).
class TabularMdp {
public:
    /// `actions_per_state[s]` actions in state s; P and R are indexed
    /// [sa_index(s,a) * n_states + s'].
    TabularMdp(std::vector<std::size_t> actions_per_state, Vec transition, Vec reward, double gamma,
               std::size_t initial_state = 0);

    std::size_t n_states() const { return offsets_.size() - 1; }
    std::size_t n_actions(std::size_t s) const { return offsets_[s + 1] - offsets_[s]; }
    std::size_t n_state_actions() const { return offsets_.back(); }
    std::size_t sa_index(std::size_t s, std::size_t a) const { return offsets_[s] + a; }
    const std::vector<std::size_t>& offsets() const { return offsets_; }

    double prob(std::size_t s, std::size_t a, std::size_t s_next) const {
        return p_[sa_index(s, a) * n_states() + s_next];
    }
    double reward(std::size_t s, std::size_t a, std::size_t s_next) const {
        return r_[sa_index(s, a) * n_states() + s_next];
    }
    double gamma() const { return gamma_; }
    std::size_t initial_state() const { return initial_; }

private:
    std::vector<std::size_t> offsets_;
    Vec p_;
    Vec r_;
    double gamma_;
    std::size_t initial_;
};

namespace two_circle_ids {
inline constexpr std::size_t A = 0;
inline constexpr std::size_t B = 1;
inline constexpr std::size_t C = 2;
inline constexpr std::size_t D = 3;
inline constexpr std::size_t kToB = 0;
inline constexpr std::size_t kToC = 1;
}  // namespace two_circle_ids

/// Reward scale of the C route certified by tune_two_circle_reward().
inline constexpr double kTwoCircleRewardScale = 0.5;

/// Two-circle MDP. State A chooses between the B loop (A→B→D→A, +10 on
/// B→D) and the C loop (A→C→A, +10·c on A→C). Other states have a single
/// deterministic action. γ = 0.6.
TabularMdp two_circle(double reward_scale = kTwoCircleRewardScale);

/// Two-circle variant used for symmetry checks: both routes are 3-cycles
/// with +10 on their middle edge (states A, B, C, D, E).
TabularMdp symmetric_two_circle();

Transition step_tabular(const TabularMdp& mdp, std::size_t s, std::size_t a, Rng& rng);

struct CartPoleState {
    double x = 0.0;
    double x_dot = 0.0;
    double theta = 0.0;
    double theta_dot = 0.0;

    Vec features() const { return {x, x_dot, theta, theta_dot}; }
};

struct CartPoleStep {
    CartPoleState state;
    double reward = 1.0;
    bool terminal = false;
};

namespace cartpole {
inline constexpr double kGravity = 9.8;
inline constexpr double kCartMass = 1.0;
inline constexpr double kPoleMass = 0.1;
inline constexpr double kHalfLength = 0.5;
inline constexpr double kForceMag = 10.0;
inline constexpr double kDt = 0.02;
inline constexpr double kXLimit = 2.4;
inline constexpr double kThetaLimit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
inline constexpr std::size_t kMaxEpisodeSteps = 200;
}  // namespace cartpole

bool cartpole_out_of_bounds(const CartPoleState& s);

/// One explicit-Euler step of the classic cart-pole. `action` is clamped to
/// [−1, 1] and scaled to a force of 10 N. Terminal reflects the position
/// and angle limits only; the 200-step limit is tracked by CartPoleEnv.
CartPoleStep cartpole_step(const CartPoleState& state, double action);

/// Result of the continuing-task conversion.
struct WrappedTransition {
    Transition transition;
    double discount = 0.0;
};

/// Discount γ_t = γ_env for non-terminal transitions and 0 for terminal
/// ones. On terminal transitions s_next is replaced by `reset_state`.
WrappedTransition continuing_wrap(Transition tr, double gamma_env, const State& reset_state);

/// Multiplies each component by 1 + σ·noise_frac·χ with σ = ±1 and
/// χ ~ U[0,1], drawn independently per component.
Vec noisy_action(std::span<const double> a, double noise_frac, Rng& rng);

/// Tabular environment state machine.
class TabularEnv {
public:
    explicit TabularEnv(TabularMdp mdp) : mdp_(std::move(mdp)), state_(mdp_.initial_state()) {}

    const TabularMdp& mdp() const { return mdp_; }
    State reset(Rng& rng);
    State current() const { return State{state_, {}}; }
    WrappedTransition step(const Action& a, Rng& rng);
    double gamma() const { return mdp_.gamma(); }

private:
    TabularMdp mdp_;
    std::size_t state_;
};

/// Continuing CartPole: γ = 0.99, reset on termination or after 200 steps,
/// optional multiplicative action noise.
class CartPoleEnv {
public:
    explicit CartPoleEnv(double noise_frac = 0.0, double gamma = 0.99) : noise_frac_(noise_frac), gamma_(gamma) {}

    State reset(Rng& rng);
    State current() const { return State{0, state_.features()}; }
    WrappedTransition step(const Action& a, Rng& rng);
    double gamma() const { return gamma_; }
    double noise_frac() const { return noise_frac_; }
    std::size_t episode_steps() const { return steps_; }

    static CartPoleState sample_initial(Rng& rng);

private:
    double noise_frac_;
    double gamma_;
    CartPoleState state_{};
    std::size_t steps_ = 0;
};

using Environment = std::variant<TabularEnv, CartPoleEnv>;

/// Builds an environment by name: "two-circle" or "cartpole".
Environment make_environment(const std::string& name, double action_noise_frac = 0.0);

}  // namespace vomps
