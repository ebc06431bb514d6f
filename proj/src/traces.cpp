#include "vomps/traces.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace vomps {

namespace {

void check_finite(double v, const char* symbol) {
    if (!std::isfinite(v)) throw NumericError(std::string("emphatic trace: non-finite ") + symbol);
}

void check_finite(std::span<const double> v, const char* symbol) {
    if (!all_finite(v)) throw NumericError(std::string("emphatic trace: non-finite ") + symbol);
}

void check_shapes(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw NumericError("emphatic trace: gradient shapes differ");
}

}  // namespace

EmphaticOutputs geoffpac_trace_step(GeoffTraceState& st, const GeoffTraceInputs& in) {
    check_finite(in.rho, "rho");
    check_finite(in.c, "C");
    check_finite(in.v, "V");
    check_finite(in.delta, "delta");
    check_finite(in.interest, "interest");
    check_finite(in.grad_logpi_now, "grad_logpi");
    check_finite(in.grad_logpi_now_at_prev_params, "grad_logpi_prev_params");
    check_shapes(in.grad_logpi_now, in.grad_logpi_now_at_prev_params);

    const std::size_t n = in.grad_logpi_now.size();
    if (st.f2.empty()) st.f2.assign(n, 0.0);
    if (st.grad_logpi_prev.empty()) st.grad_logpi_prev.assign(n, 0.0);
    if (st.f2.size() != n || st.grad_logpi_prev.size() != n)
        throw NumericError("emphatic trace: gradient shape changed between steps");

    EmphaticOutputs out;
    const double ic = in.interest * in.c;
    st.f1 = in.gamma * st.rho_prev * st.f1 + ic;
    out.m1 = (1.0 - in.lambda1) * ic + in.lambda1 * st.f1;
    check_finite(st.f1, "F1");

    const double i_scale = st.c_prev * st.rho_prev;
    const double f2_decay = in.gamma_hat * st.rho_prev;
    out.m2.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double interest_grad = i_scale * st.grad_logpi_prev[k];
        st.f2[k] = f2_decay * st.f2[k] + interest_grad;
        out.m2[k] = (1.0 - in.lambda2) * interest_grad + in.lambda2 * st.f2[k];
    }
    check_finite(st.f2, "F2");

    const double v_coef = in.gamma_hat * in.interest * in.v;
    const double g_coef = in.rho * out.m1 * in.delta;
    out.z_now.resize(n);
    out.z_prev.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.z_now[k] = g_coef * in.grad_logpi_now[k] + v_coef * out.m2[k];
        out.z_prev[k] = g_coef * in.grad_logpi_now_at_prev_params[k] + v_coef * out.m2[k];
    }
    check_finite(out.z_now, "Z");
    check_finite(out.z_prev, "Z_prev");

    st.rho_prev = in.rho;
    st.c_prev = in.c;
    st.grad_logpi_prev.assign(in.grad_logpi_now.begin(), in.grad_logpi_now.end());
    ++st.t;
    return out;
}

EmphaticOutputs ace_trace_step(AceTraceState& st, const AceTraceInputs& in) {
    check_finite(in.rho, "rho");
    check_finite(in.delta, "delta");
    check_finite(in.interest, "interest");
    check_finite(in.grad_logpi_now, "grad_logpi");
    check_finite(in.grad_logpi_now_at_prev_params, "grad_logpi_prev_params");
    check_shapes(in.grad_logpi_now, in.grad_logpi_now_at_prev_params);

    EmphaticOutputs out;
    st.f1 = in.gamma * st.rho_prev * st.f1 + in.interest;
    out.m1 = (1.0 - in.lambda1) * in.interest + in.lambda1 * st.f1;
    check_finite(st.f1, "F1");

    const std::size_t n = in.grad_logpi_now.size();
    const double g_coef = in.rho * out.m1 * in.delta;
    out.z_now.resize(n);
    out.z_prev.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.z_now[k] = g_coef * in.grad_logpi_now[k];
        out.z_prev[k] = g_coef * in.grad_logpi_now_at_prev_params[k];
    }
    check_finite(out.z_now, "Z");
    check_finite(out.z_prev, "Z_prev");

    st.rho_prev = in.rho;
    ++st.t;
    return out;
}

void write_trace_header(std::ostream& out) { out << "t,f1,f2_norm,m1,m2_norm,rho,delta\n"; }

void write_trace_row(std::ostream& out, const TraceRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.f1, r.f2_norm, r.m1, r.m2_norm,
                  r.rho, r.delta);
    out << buf;
}

}  // namespace vomps
