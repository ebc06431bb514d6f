#include "vomps/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace vomps {

PolicyMatrix::PolicyMatrix(std::vector<std::size_t> offsets, Vec probs)
    : offsets_(std::move(offsets)), probs_(std::move(probs)) {
    if (offsets_.size() < 2 || probs_.size() != offsets_.back())
        throw std::invalid_argument("PolicyMatrix: layout mismatch");
    for (std::size_t s = 0; s + 1 < offsets_.size(); ++s) {
        double total = 0.0;
        for (double p : row(s)) {
            if (!(p >= 0.0)) throw std::invalid_argument("PolicyMatrix: negative probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("PolicyMatrix: row does not sum to 1");
    }
}

PolicyMatrix PolicyMatrix::uniform(const TabularMdp& mdp) {
    Vec probs(mdp.n_state_actions());
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(s); ++a)
            probs[mdp.sa_index(s, a)] = 1.0 / static_cast<double>(mdp.n_actions(s));
    return PolicyMatrix(mdp.offsets(), std::move(probs));
}

PolicyMatrix PolicyMatrix::deterministic(const TabularMdp& mdp, const std::vector<std::size_t>& choice) {
    if (choice.size() != mdp.n_states()) throw std::invalid_argument("PolicyMatrix::deterministic: size mismatch");
    Vec probs(mdp.n_state_actions(), 0.0);
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        if (choice[s] >= mdp.n_actions(s)) throw std::out_of_range("PolicyMatrix::deterministic: action");
        probs[mdp.sa_index(s, choice[s])] = 1.0;
    }
    return PolicyMatrix(mdp.offsets(), std::move(probs));
}

namespace {

void require_layout(const TabularMdp& mdp, const PolicyMatrix& pi) {
    if (pi.offsets() != mdp.offsets()) throw std::invalid_argument("policy layout does not match the MDP");
}

// Number of closed communicating classes, via boolean transitive closure.
std::size_t closed_class_count(const DenseMatrix& p) {
    const std::size_t n = p.rows();
    std::vector<char> reach(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        reach[i * n + i] = 1;
        for (std::size_t j = 0; j < n; ++j)
            if (p(i, j) > 0.0) reach[i * n + j] = 1;
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (reach[i * n + k])
                for (std::size_t j = 0; j < n; ++j)
                    if (reach[k * n + j]) reach[i * n + j] = 1;

    std::vector<char> seen(n, 0);
    std::size_t classes = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (seen[i]) continue;
        bool closed = true;
        for (std::size_t j = 0; j < n; ++j)
            if (reach[i * n + j] && !reach[j * n + i]) closed = false;
        if (!closed) continue;
        ++classes;
        for (std::size_t j = 0; j < n; ++j)
            if (reach[i * n + j]) seen[j] = 1;
    }
    return classes;
}

double fixed_point_residual(const DenseMatrix& p, std::span<const double> d) {
    const Vec pt_d = p.transpose().multiply(d);
    double r = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) r = std::max(r, std::abs(pt_d[i] - d[i]));
    return r;
}

}  // namespace

DenseMatrix transition_under(const TabularMdp& mdp, const PolicyMatrix& pi) {
    require_layout(mdp, pi);
    const std::size_t n = mdp.n_states();
    DenseMatrix p(n, n);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a = 0; a < mdp.n_actions(s); ++a)
            for (std::size_t j = 0; j < n; ++j) p(s, j) += pi(s, a) * mdp.prob(s, a, j);
    return p;
}

Vec expected_reward(const TabularMdp& mdp, const PolicyMatrix& pi) {
    require_layout(mdp, pi);
    Vec r(mdp.n_states(), 0.0);
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t a = 0; a < mdp.n_actions(s); ++a)
            for (std::size_t j = 0; j < mdp.n_states(); ++j)
                r[s] += pi(s, a) * mdp.prob(s, a, j) * mdp.reward(s, a, j);
    return r;
}

Vec stationary(const DenseMatrix& p) {
    const std::size_t n = p.rows();
    if (n == 0 || p.cols() != n) throw NumericError("stationary: matrix must be square and non-empty");
    if (closed_class_count(p) != 1) throw NumericError("stationary: chain is not ergodic (multiple closed classes)");

    // (P^T − I) d = 0 with the last equation replaced by Σ d = 1; nonsingular
    // when there is a single closed class.
    DenseMatrix a(n, n);
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = p(j, i) - (i == j ? 1.0 : 0.0);
    for (std::size_t j = 0; j < n; ++j) a(n - 1, j) = 1.0;
    Vec rhs(n, 0.0);
    rhs[n - 1] = 1.0;
    Vec d = solve_linear(a, rhs);
    for (double& v : d) v = std::max(v, 0.0);
    if (fixed_point_residual(p, d) > 1e-10) throw NumericError("stationary: fixed-point residual above 1e-10");
    return d;
}

Vec d_hat_gamma(const DenseMatrix& p_pi, std::span<const double> d_mu, double gamma_hat) {
    if (!(gamma_hat >= 0.0 && gamma_hat <= 1.0)) throw std::invalid_argument("d_hat_gamma: gamma_hat outside [0,1]");
    if (gamma_hat == 1.0) return stationary(p_pi);
    const std::size_t n = p_pi.rows();
    DenseMatrix a = DenseMatrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) -= gamma_hat * p_pi(j, i);
    Vec rhs(d_mu.begin(), d_mu.end());
    for (double& v : rhs) v *= 1.0 - gamma_hat;
    return solve_linear(a, rhs);
}

Vec value_function(const TabularMdp& mdp, const PolicyMatrix& pi) {
    const DenseMatrix p = transition_under(mdp, pi);
    const std::size_t n = mdp.n_states();
    DenseMatrix a = DenseMatrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) -= mdp.gamma() * p(i, j);
    return solve_linear(a, expected_reward(mdp, pi));
}

Vec exact_density_ratio(const TabularMdp& mdp, const PolicyMatrix& pi, const PolicyMatrix& mu, double gamma_hat) {
    const Vec d_mu = stationary(transition_under(mdp, mu));
    const Vec d_hat = d_hat_gamma(transition_under(mdp, pi), d_mu, gamma_hat);
    Vec c(d_mu.size());
    for (std::size_t s = 0; s < c.size(); ++s) {
        if (!(d_mu[s] > 0.0)) throw NumericError("exact_density_ratio: d_mu vanishes at a state");
        c[s] = d_hat[s] / d_mu[s];
    }
    return c;
}

double objective(const TabularMdp& mdp, const PolicyMatrix& pi, const PolicyMatrix& mu, double gamma_hat,
                 std::optional<std::span<const double>> interest) {
    const Vec d_mu = stationary(transition_under(mdp, mu));
    const Vec d_hat = d_hat_gamma(transition_under(mdp, pi), d_mu, gamma_hat);
    const Vec v = value_function(mdp, pi);
    if (interest && interest->size() != v.size()) throw std::invalid_argument("objective: interest size mismatch");
    double j = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) j += d_hat[s] * (interest ? (*interest)[s] : 1.0) * v[s];
    return j;
}

PolicyMatrix softmax_policy(const TabularMdp& mdp, std::span<const double> logits) {
    if (logits.size() != mdp.n_state_actions()) throw std::invalid_argument("softmax_policy: logits size mismatch");
    Vec probs(logits.size());
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        const std::size_t off = mdp.sa_index(s, 0);
        const std::size_t n = mdp.n_actions(s);
        const double mx = *std::max_element(logits.begin() + off, logits.begin() + off + n);
        double total = 0.0;
        for (std::size_t a = 0; a < n; ++a) total += probs[off + a] = std::exp(logits[off + a] - mx);
        for (std::size_t a = 0; a < n; ++a) probs[off + a] /= total;
    }
    return PolicyMatrix(mdp.offsets(), std::move(probs));
}

Vec exact_gradient(const TabularMdp& mdp, const PolicyMatrix& mu, double gamma_hat, std::span<const double> logits,
                   double step, std::optional<std::span<const double>> interest) {
    Vec theta(logits.begin(), logits.end());
    Vec grad(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        theta[i] = saved + step;
        const double up = objective(mdp, softmax_policy(mdp, theta), mu, gamma_hat, interest);
        theta[i] = saved - step;
        const double down = objective(mdp, softmax_policy(mdp, theta), mu, gamma_hat, interest);
        theta[i] = saved;
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

std::optional<double> tune_two_circle_reward(double gamma_hat) {
    using namespace two_circle_ids;
    for (double c : {0.5, 1.0, 1.5, 2.0, 3.0, 4.0}) {
        const TabularMdp mdp = two_circle(c);
        const PolicyMatrix mu = PolicyMatrix::uniform(mdp);
        const PolicyMatrix to_b = PolicyMatrix::deterministic(mdp, {kToB, 0, 0, 0});
        const PolicyMatrix to_c = PolicyMatrix::deterministic(mdp, {kToC, 0, 0, 0});
        const bool excursion_prefers_c = objective(mdp, to_c, mu, 0.0) > objective(mdp, to_b, mu, 0.0);
        const bool counterfactual_prefers_b =
            objective(mdp, to_b, mu, gamma_hat) > objective(mdp, to_c, mu, gamma_hat);
        if (excursion_prefers_c && counterfactual_prefers_b) return c;
    }
    return std::nullopt;
}

}  // namespace vomps
