#pragma once

#include <iosfwd>

#include "vomps/numkit.hpp"

namespace vomps {

/// Follow-on traces of the counterfactual-objective gradient estimator.
struct GeoffTraceState {
    double f1 = 0.0;
    Vec f2;               // empty until the first step
    double rho_prev = 1.0;
    double c_prev = 0.0;  // C(s_{t-1}; ψ_{t-1}) as evaluated at step t-1
    Vec grad_logpi_prev;  // ∇log π(a_{t-1}|s_{t-1}; θ_{t-1}), empty at t = 0
    std::size_t t = 0;
};

struct GeoffTraceInputs {
    double rho = 1.0;
    double c = 1.0;
    double v = 0.0;
    double delta = 0.0;
    double interest = 1.0;
    std::span<const double> grad_logpi_now;
    std::span<const double> grad_logpi_now_at_prev_params;
    double gamma = 0.0;
    double gamma_hat = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
};

struct EmphaticOutputs {
    double m1 = 0.0;
    Vec m2;      // empty for the ACE form
    Vec z_now;   // Z_t at θ_t
    Vec z_prev;  // Z_t at θ_{t-1}
};

/// One step of the emphatic-weight box:
///   F1 ← γ ρ_{t−1} F1 + î C
///   M1 ← (1−λ1) î C + λ1 F1
///   I  ← C_{t−1} ρ_{t−1} ∇log π_{t−1}
///   F2 ← γ̂ ρ_{t−1} F2 + I
///   M2 ← (1−λ2) I + λ2 F2
///   Z  ← γ̂ î V M2 + ρ M1 δ ∇log π
/// Z is produced at both the current and the previous policy parameters.
/// Throws NumericError naming the symbol on any non-finite input or output.
EmphaticOutputs geoffpac_trace_step(GeoffTraceState& state, const GeoffTraceInputs& in);

struct AceTraceState {
    double f1 = 0.0;
    double rho_prev = 1.0;
    std::size_t t = 0;
};

struct AceTraceInputs {
    double rho = 1.0;
    double delta = 0.0;
    double interest = 1.0;
    std::span<const double> grad_logpi_now;
    std::span<const double> grad_logpi_now_at_prev_params;
    double gamma = 0.0;
    double lambda1 = 0.0;
};

/// F1 ← γ ρ_{t−1} F1 + i;  M1 ← (1−λ1) i + λ1 F1;  Z ← ρ M1 δ ∇log π.
EmphaticOutputs ace_trace_step(AceTraceState& state, const AceTraceInputs& in);

/// Per-step trace record for debugging dumps.
struct TraceRecord {
    std::size_t t = 0;
    double f1 = 0.0;
    double f2_norm = 0.0;
    double m1 = 0.0;
    double m2_norm = 0.0;
    double rho = 0.0;
    double delta = 0.0;
};

void write_trace_header(std::ostream& out);
void write_trace_row(std::ostream& out, const TraceRecord& r);

}  // namespace vomps
