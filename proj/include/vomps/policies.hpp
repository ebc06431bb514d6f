#pragma once

#include <filesystem>
#include <variant>

#include "vomps/envs.hpp"
#include "vomps/numkit.hpp"
#include "vomps/oracle.hpp"

namespace vomps {

/// Softmax over per-(state, action) logits.
class TabularSoftmaxPolicy {
public:
    /// Uniform policy (all logits zero).
    explicit TabularSoftmaxPolicy(const TabularMdp& mdp);
    TabularSoftmaxPolicy(std::vector<std::size_t> offsets, Vec logits);

    std::size_t n_states() const { return offsets_.size() - 1; }
    std::size_t n_actions(std::size_t s) const { return offsets_[s + 1] - offsets_[s]; }
    const std::vector<std::size_t>& offsets() const { return offsets_; }

    Vec probabilities(std::size_t s) const;
    PolicyMatrix matrix() const;

    std::span<const double> params() const { return logits_; }
    std::span<double> params() { return logits_; }

private:
    std::vector<std::size_t> offsets_;
    Vec logits_;
};

/// Diagonal Gaussian with mean tanh(MLP(features)), so the mean stays inside
/// (−1, 1). σ is fixed. Samples are clamped to [low, high] per dimension.
class GaussianMlpPolicy {
public:
    GaussianMlpPolicy(MlpParams mean, Vec sigma, double low = -1.0, double high = 1.0);

    const MlpParams& mean_net() const { return mean_; }
    const Vec& sigma() const { return sigma_; }
    double low() const { return low_; }
    double high() const { return high_; }
    std::size_t action_dim() const { return sigma_.size(); }

    Vec mean(std::span<const double> features) const;

    std::span<const double> params() const { return mean_.values(); }
    std::span<double> params() { return mean_.values(); }

private:
    MlpParams mean_;
    Vec sigma_;
    double low_;
    double high_;
};

using Policy = std::variant<TabularSoftmaxPolicy, GaussianMlpPolicy>;

std::span<const double> policy_params(const Policy& policy);
std::span<double> policy_params(Policy& policy);

Action sample_action(const Policy& policy, const State& s, Rng& rng);

/// Action the policy takes deterministically (argmax / Gaussian mean, clamped).
Action greedy_action(const Policy& policy, const State& s);

/// log π(a|s). For Gaussians this is the unclamped density.
double log_prob(const Policy& policy, const State& s, const Action& a);

/// ∇_θ log π(a|s), laid out like policy_params().
Vec log_prob_grad(const Policy& policy, const State& s, const Action& a);

/// Fixed behavior policy μ: an explicit table for tabular MDPs or the uniform
/// distribution on an action box.
class BehaviorPolicy {
public:
    struct Box {
        std::size_t dim = 1;
        double low = -1.0;
        double high = 1.0;
    };

    explicit BehaviorPolicy(PolicyMatrix table) : impl_(std::move(table)) {}
    explicit BehaviorPolicy(Box box);

    static BehaviorPolicy uniform(const TabularMdp& mdp) { return BehaviorPolicy(PolicyMatrix::uniform(mdp)); }

    Action sample(const State& s, Rng& rng) const;
    double density(const State& s, const Action& a) const;

    const PolicyMatrix* table() const { return std::get_if<PolicyMatrix>(&impl_); }

private:
    std::variant<PolicyMatrix, Box> impl_;
};

/// ρ = π(a|s) / μ(a|s), clipped to [0, rho_max].
double importance_ratio(const Policy& pi, const BehaviorPolicy& mu, const State& s, const Action& a,
                        double rho_max);

double softplus(double x);
double sigmoid(double x);
/// softplus^{-1}(y) for y > 0.
double inverse_softplus(double y);

/// Per-state table or MLP state → scalar.
class ValueFn {
public:
    static ValueFn table(std::size_t n_states, double init = 0.0);
    static ValueFn network(MlpParams net);

    double value(const State& s) const;
    /// ∇_ν V(s; ν).
    Vec grad(const State& s) const;

    std::span<const double> params() const;
    std::span<double> params();
    bool is_table() const { return std::holds_alternative<Vec>(impl_); }

private:
    std::variant<Vec, MlpParams> impl_;
};

/// Density-ratio estimate C(s; ψ) = softplus(raw(s; ψ)) > 0, with raw a
/// per-state table or an MLP. The constant variant has no parameters.
class RatioFn {
public:
    struct Constant {
        double value = 1.0;
    };

    /// Table initialized so that C ≡ init.
    static RatioFn table(std::size_t n_states, double init = 1.0);
    /// Network with output bias set so that C ≡ init for a zero output layer.
    static RatioFn network(MlpParams net, double init = 1.0);
    static RatioFn constant(double value);

    double value(const State& s) const;
    /// ∇_ψ C(s; ψ); empty for the constant variant.
    Vec grad(const State& s) const;

    std::span<const double> params() const;
    std::span<double> params();
    bool is_constant() const { return std::holds_alternative<Constant>(impl_); }

private:
    std::variant<Vec, MlpParams, Constant> impl_;
};

/// One array of a flat checkpoint file.
struct NamedArray {
    std::string name;
    std::vector<std::uint64_t> shape;
    Vec data;
};

/// Binary layout: magic "VOMPSCK1", u64 count, then per array: u64 name
/// length, name bytes, u64 rank, u64 dims[rank], raw little-endian doubles.
void write_named_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_named_arrays(const std::filesystem::path& path);

std::vector<NamedArray> policy_snapshot(const Policy& policy);
Policy policy_from_snapshot(const std::vector<NamedArray>& arrays);

}  // namespace vomps
