#pragma once

#include <optional>

#include "vomps/envs.hpp"
#include "vomps/numkit.hpp"
#include "vomps/policies.hpp"

namespace vomps {

/// Semi-gradient TD(0): δ = r + γ_t V(s') − V(s); ν ← ν + α δ ∇V(s).
/// Returns δ (computed with the pre-update parameters).
double td_update(ValueFn& critic, double alpha, const Transition& tr, double gamma_t);

/// Semi-gradient density-ratio step:
/// ψ ← ψ + α (γ̂ ρ C(s) + (1−γ̂) − C(s')) ∇C(s'). No-op for constant ratios.
void ratio_update(RatioFn& ratio, double alpha, const Transition& tr, double rho, double gamma_hat);

struct StormHyper {
    double k = 0.1;
    double w = 10.0;
    double beta = 100.0;
};

/// Recursive-momentum state. The overrides pin α_t or η_t (used to reduce
/// STORM to plain stochastic gradient steps).
struct StormState {
    explicit StormState(StormHyper h = {});

    StormHyper hyper;
    Vec g;                 // empty before the first step
    double sum_g2 = 0.0;
    double eta_prev;       // η_{t−1}; k / w^{1/3} before the first step
    std::size_t t = 0;
    std::optional<double> alpha_override;
    std::optional<double> eta_override;
};

struct StormStep {
    double eta = 0.0;
    double alpha = 0.0;
    double grad_norm = 0.0;  // G_t = ‖Z_now‖
};

/// α_t = min(1, β η_{t−1}²); g ← Z_now + (1−α_t)(g − Z_prev); G_t = ‖Z_now‖;
/// η_t = k / (w + Σ G²)^{1/3}. The first step uses g = Z_now. The caller
/// applies θ ← θ + η_t g (ascent); state.g holds the direction.
StormStep storm_actor_step(StormState& state, std::span<const double> z_now, std::span<const double> z_prev);

/// Same recursion for minimization; apply x ← x − η_t g. Both gradients must
/// be evaluated on the same sample.
StormStep storm_generic_step(StormState& state, std::span<const double> grad_now, std::span<const double> grad_prev);

}  // namespace vomps
