#pragma once

#include <optional>

#include "vomps/envs.hpp"
#include "vomps/numkit.hpp"

namespace vomps {

/// π(a|s) for a TabularMdp, stored in the MDP's state-action layout.
class PolicyMatrix {
public:
    PolicyMatrix(std::vector<std::size_t> offsets, Vec probs);

    static PolicyMatrix uniform(const TabularMdp& mdp);
    /// Deterministic policy picking `choice[s]` in every state.
    static PolicyMatrix deterministic(const TabularMdp& mdp, const std::vector<std::size_t>& choice);

    std::size_t n_states() const { return offsets_.size() - 1; }
    std::size_t n_actions(std::size_t s) const { return offsets_[s + 1] - offsets_[s]; }
    double operator()(std::size_t s, std::size_t a) const { return probs_[offsets_[s] + a]; }
    std::span<const double> row(std::size_t s) const { return {probs_.data() + offsets_[s], n_actions(s)}; }
    const std::vector<std::size_t>& offsets() const { return offsets_; }

private:
    std::vector<std::size_t> offsets_;
    Vec probs_;
};

/// P_π(s'|s) = Σ_a π(a|s) p(s'|s,a).
DenseMatrix transition_under(const TabularMdp& mdp, const PolicyMatrix& pi);

/// r_π(s) = Σ_a π(a|s) Σ_s' p(s'|s,a) r(s,a,s').
Vec expected_reward(const TabularMdp& mdp, const PolicyMatrix& pi);

/// Stationary distribution of a row-stochastic matrix by a direct solve of
/// d = P^T d, Σd = 1. Requires a single closed communicating class, so
/// periodic chains are accepted.
Vec stationary(const DenseMatrix& p);

/// d_γ̂ = (1−γ̂)(I − γ̂P_π^T)^{-1} d_μ for γ̂ < 1, and d_π for γ̂ = 1.
Vec d_hat_gamma(const DenseMatrix& p_pi, std::span<const double> d_mu, double gamma_hat);

/// Solves (I − γP_π)V = r_π.
Vec value_function(const TabularMdp& mdp, const PolicyMatrix& pi);

/// C(s) = d_γ̂(s) / d_μ(s).
Vec exact_density_ratio(const TabularMdp& mdp, const PolicyMatrix& pi, const PolicyMatrix& mu, double gamma_hat);

/// J_γ̂ = Σ_s d_γ̂(s) î(s) V_π(s). `interest` defaults to î ≡ 1.
double objective(const TabularMdp& mdp, const PolicyMatrix& pi, const PolicyMatrix& mu, double gamma_hat,
                 std::optional<std::span<const double>> interest = std::nullopt);

/// Softmax policy matrix from per-(s,a) logits in the MDP's layout.
PolicyMatrix softmax_policy(const TabularMdp& mdp, std::span<const double> logits);

/// ∇_θ J_γ̂ for a tabular softmax policy by central differences of objective().
Vec exact_gradient(const TabularMdp& mdp, const PolicyMatrix& mu, double gamma_hat, std::span<const double> logits,
                   double step = 1e-6, std::optional<std::span<const double>> interest = std::nullopt);

/// Smallest reward scale c from {0.5, 1, 1.5, 2, 3, 4} such that the
/// deterministic A→C policy maximizes J_μ and A→B maximizes J_γ̂. Returns
/// nullopt if no candidate certifies.
std::optional<double> tune_two_circle_reward(double gamma_hat);

}  // namespace vomps
