#include "vomps/learners.hpp"

#include <algorithm>
#include <cmath>

namespace vomps {

double td_update(ValueFn& critic, double alpha, const Transition& tr, double gamma_t) {
    const double v_next = gamma_t == 0.0 ? 0.0 : critic.value(tr.s_next);
    const double delta = tr.r + gamma_t * v_next - critic.value(tr.s);
    if (!std::isfinite(delta)) throw NumericError("td_update: non-finite TD error");
    axpy(alpha * delta, critic.grad(tr.s), critic.params());
    return delta;
}

void ratio_update(RatioFn& ratio, double alpha, const Transition& tr, double rho, double gamma_hat) {
    if (ratio.is_constant()) return;
    const double c_next = ratio.value(tr.s_next);
    const double target = gamma_hat * rho * ratio.value(tr.s) + (1.0 - gamma_hat) - c_next;
    if (!std::isfinite(target)) throw NumericError("ratio_update: non-finite update");
    axpy(alpha * target, ratio.grad(tr.s_next), ratio.params());
}

StormState::StormState(StormHyper h) : hyper(h), eta_prev(h.k / std::cbrt(h.w)) {
    if (!(h.k > 0.0) || !(h.w > 0.0) || !(h.beta >= 0.0)) throw std::invalid_argument("StormState: invalid k, w or beta");
}

namespace {

StormStep recursive_momentum(StormState& st, std::span<const double> now, std::span<const double> prev) {
    if (now.size() != prev.size()) throw NumericError("storm: gradient shapes differ");
    if (!all_finite(now) || !all_finite(prev)) throw NumericError("storm: non-finite gradient");

    StormStep step;
    const bool first = st.g.empty();
    step.alpha = st.alpha_override.value_or(first ? 1.0 : std::min(1.0, st.hyper.beta * st.eta_prev * st.eta_prev));
    if (first) {
        st.g.assign(now.begin(), now.end());
    } else {
        if (st.g.size() != now.size()) throw NumericError("storm: gradient shape changed between steps");
        const double keep = 1.0 - step.alpha;
        for (std::size_t i = 0; i < now.size(); ++i) st.g[i] = now[i] + keep * (st.g[i] - prev[i]);
    }

    step.grad_norm = norm2(now);
    st.sum_g2 += step.grad_norm * step.grad_norm;
    step.eta = st.eta_override.value_or(st.hyper.k / std::cbrt(st.hyper.w + st.sum_g2));
    st.eta_prev = step.eta;
    ++st.t;
    return step;
}

}  // namespace

StormStep storm_actor_step(StormState& state, std::span<const double> z_now, std::span<const double> z_prev) {
    return recursive_momentum(state, z_now, z_prev);
}

StormStep storm_generic_step(StormState& state, std::span<const double> grad_now, std::span<const double> grad_prev) {
    return recursive_momentum(state, grad_now, grad_prev);
}

}  // namespace vomps
