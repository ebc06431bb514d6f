#include "vomps/policies.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace vomps {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double gaussian_log_density(std::span<const double> a, std::span<const double> mean, std::span<const double> sigma) {
    double lp = 0.0;
    for (std::size_t d = 0; d < a.size(); ++d) {
        const double z = (a[d] - mean[d]) / sigma[d];
        lp += -0.5 * z * z - std::log(sigma[d]) - kLogSqrt2Pi;
    }
    return lp;
}

void require_action_dim(const GaussianMlpPolicy& p, const Action& a) {
    if (a.values.size() != p.action_dim()) throw std::invalid_argument("Gaussian policy: action dimension mismatch");
}

}  // namespace

// ---------------------------------------------------------------------------
// Softmax

TabularSoftmaxPolicy::TabularSoftmaxPolicy(const TabularMdp& mdp)
    : offsets_(mdp.offsets()), logits_(mdp.n_state_actions(), 0.0) {}

TabularSoftmaxPolicy::TabularSoftmaxPolicy(std::vector<std::size_t> offsets, Vec logits)
    : offsets_(std::move(offsets)), logits_(std::move(logits)) {
    if (offsets_.size() < 2 || logits_.size() != offsets_.back())
        throw std::invalid_argument("TabularSoftmaxPolicy: layout mismatch");
}

Vec TabularSoftmaxPolicy::probabilities(std::size_t s) const {
    const std::size_t off = offsets_.at(s);
    const std::size_t n = n_actions(s);
    const double mx = *std::max_element(logits_.begin() + off, logits_.begin() + off + n);
    Vec p(n);
    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) total += p[a] = std::exp(logits_[off + a] - mx);
    for (double& v : p) v /= total;
    return p;
}

PolicyMatrix TabularSoftmaxPolicy::matrix() const {
    Vec probs;
    probs.reserve(logits_.size());
    for (std::size_t s = 0; s < n_states(); ++s) {
        const Vec p = probabilities(s);
        probs.insert(probs.end(), p.begin(), p.end());
    }
    return PolicyMatrix(offsets_, std::move(probs));
}

// ---------------------------------------------------------------------------
// Gaussian

GaussianMlpPolicy::GaussianMlpPolicy(MlpParams mean, Vec sigma, double low, double high)
    : mean_(std::move(mean)), sigma_(std::move(sigma)), low_(low), high_(high) {
    if (sigma_.size() != mean_.shape().out_dim) throw std::invalid_argument("GaussianMlpPolicy: sigma size mismatch");
    for (double s : sigma_)
        if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("GaussianMlpPolicy: sigma must be positive");
    if (!(low < high)) throw std::invalid_argument("GaussianMlpPolicy: empty action box");
}

Vec GaussianMlpPolicy::mean(std::span<const double> features) const {
    Vec m = mlp_forward(mean_, features);
    for (double& v : m) v = std::tanh(v);
    return m;
}

// ---------------------------------------------------------------------------

std::span<const double> policy_params(const Policy& policy) {
    return std::visit([](const auto& p) { return p.params(); }, policy);
}

std::span<double> policy_params(Policy& policy) {
    return std::visit([](auto& p) { return p.params(); }, policy);
}

Action sample_action(const Policy& policy, const State& s, Rng& rng) {
    return std::visit(overloaded{
                          [&](const TabularSoftmaxPolicy& p) {
                              const Vec probs = p.probabilities(s.index);
                              const double u = rng.uniform();
                              double acc = 0.0;
                              std::size_t chosen = probs.size() - 1;
                              for (std::size_t a = 0; a < probs.size(); ++a) {
                                  acc += probs[a];
                                  if (u < acc) {
                                      chosen = a;
                                      break;
                                  }
                              }
                              return Action{chosen, {}};
                          },
                          [&](const GaussianMlpPolicy& p) {
                              Vec a = p.mean(s.features);
                              for (std::size_t d = 0; d < a.size(); ++d)
                                  a[d] = std::clamp(a[d] + p.sigma()[d] * rng.normal(), p.low(), p.high());
                              return Action{0, std::move(a)};
                          },
                      },
                      policy);
}

Action greedy_action(const Policy& policy, const State& s) {
    return std::visit(overloaded{
                          [&](const TabularSoftmaxPolicy& p) {
                              const Vec probs = p.probabilities(s.index);
                              const auto it = std::max_element(probs.begin(), probs.end());
                              return Action{static_cast<std::size_t>(it - probs.begin()), {}};
                          },
                          [&](const GaussianMlpPolicy& p) {
                              Vec a = p.mean(s.features);
                              for (double& v : a) v = std::clamp(v, p.low(), p.high());
                              return Action{0, std::move(a)};
                          },
                      },
                      policy);
}

double log_prob(const Policy& policy, const State& s, const Action& a) {
    return std::visit(overloaded{
                          [&](const TabularSoftmaxPolicy& p) {
                              const std::size_t off = p.offsets().at(s.index);
                              const std::size_t n = p.n_actions(s.index);
                              if (a.index >= n) throw std::out_of_range("log_prob: action");
                              const auto logits = p.params().subspan(off, n);
                              const double mx = *std::max_element(logits.begin(), logits.end());
                              double total = 0.0;
                              for (double l : logits) total += std::exp(l - mx);
                              return logits[a.index] - mx - std::log(total);
                          },
                          [&](const GaussianMlpPolicy& p) {
                              require_action_dim(p, a);
                              return gaussian_log_density(a.values, p.mean(s.features), p.sigma());
                          },
                      },
                      policy);
}

Vec log_prob_grad(const Policy& policy, const State& s, const Action& a) {
    return std::visit(overloaded{
                          [&](const TabularSoftmaxPolicy& p) {
                              Vec g(p.params().size(), 0.0);
                              const Vec probs = p.probabilities(s.index);
                              if (a.index >= probs.size()) throw std::out_of_range("log_prob_grad: action");
                              const std::size_t off = p.offsets()[s.index];
                              for (std::size_t b = 0; b < probs.size(); ++b)
                                  g[off + b] = (b == a.index ? 1.0 : 0.0) - probs[b];
                              return g;
                          },
                          [&](const GaussianMlpPolicy& p) {
                              require_action_dim(p, a);
                              const Vec mean = p.mean(s.features);
                              Vec upstream(mean.size());
                              for (std::size_t d = 0; d < mean.size(); ++d)
                                  upstream[d] = (a.values[d] - mean[d]) / (p.sigma()[d] * p.sigma()[d]) *
                                                (1.0 - mean[d] * mean[d]);
                              return mlp_grad(p.mean_net(), s.features, upstream);
                          },
                      },
                      policy);
}

// ---------------------------------------------------------------------------
// Behavior policy

BehaviorPolicy::BehaviorPolicy(Box box) : impl_(box) {
    if (box.dim == 0 || !(box.low < box.high)) throw std::invalid_argument("BehaviorPolicy: invalid action box");
}

Action BehaviorPolicy::sample(const State& s, Rng& rng) const {
    return std::visit(overloaded{
                          [&](const PolicyMatrix& m) {
                              const auto row = m.row(s.index);
                              const double u = rng.uniform();
                              double acc = 0.0;
                              std::size_t chosen = row.size() - 1;
                              for (std::size_t a = 0; a < row.size(); ++a) {
                                  acc += row[a];
                                  if (u < acc) {
                                      chosen = a;
                                      break;
                                  }
                              }
                              return Action{chosen, {}};
                          },
                          [&](const Box& b) {
                              Vec a(b.dim);
                              for (double& v : a) v = rng.uniform(b.low, b.high);
                              return Action{0, std::move(a)};
                          },
                      },
                      impl_);
}

double BehaviorPolicy::density(const State& s, const Action& a) const {
    return std::visit(overloaded{
                          [&](const PolicyMatrix& m) { return m(s.index, a.index); },
                          [&](const Box& b) {
                              for (double v : a.values)
                                  if (v < b.low || v > b.high) return 0.0;
                              return std::pow(1.0 / (b.high - b.low), static_cast<double>(b.dim));
                          },
                      },
                      impl_);
}

double importance_ratio(const Policy& pi, const BehaviorPolicy& mu, const State& s, const Action& a,
                        double rho_max) {
    const double mu_density = mu.density(s, a);
    if (!(mu_density > 0.0)) throw NumericError("importance_ratio: behavior density is zero at the action");
    const double rho = std::exp(log_prob(pi, s, a)) / mu_density;
    return std::clamp(rho, 0.0, rho_max);
}

// ---------------------------------------------------------------------------
// Scalar function approximators

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double inverse_softplus(double y) {
    if (!(y > 0.0)) throw std::invalid_argument("inverse_softplus: argument must be positive");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

ValueFn ValueFn::table(std::size_t n_states, double init) {
    ValueFn v;
    v.impl_ = Vec(n_states, init);
    return v;
}

ValueFn ValueFn::network(MlpParams net) {
    if (net.shape().out_dim != 1) throw std::invalid_argument("ValueFn: network must have scalar output");
    ValueFn v;
    v.impl_ = std::move(net);
    return v;
}

double ValueFn::value(const State& s) const {
    return std::visit(overloaded{
                          [&](const Vec& t) { return t.at(s.index); },
                          [&](const MlpParams& n) { return mlp_forward(n, s.features)[0]; },
                      },
                      impl_);
}

Vec ValueFn::grad(const State& s) const {
    return std::visit(overloaded{
                          [&](const Vec& t) {
                              Vec g(t.size(), 0.0);
                              g.at(s.index) = 1.0;
                              return g;
                          },
                          [&](const MlpParams& n) {
                              const double one = 1.0;
                              return mlp_grad(n, s.features, {&one, 1});
                          },
                      },
                      impl_);
}

std::span<const double> ValueFn::params() const {
    return std::visit(overloaded{
                          [](const Vec& t) { return std::span<const double>(t); },
                          [](const MlpParams& n) { return n.values(); },
                      },
                      impl_);
}

std::span<double> ValueFn::params() {
    return std::visit(overloaded{
                          [](Vec& t) { return std::span<double>(t); },
                          [](MlpParams& n) { return n.values(); },
                      },
                      impl_);
}

RatioFn RatioFn::table(std::size_t n_states, double init) {
    RatioFn r;
    r.impl_ = Vec(n_states, inverse_softplus(init));
    return r;
}

RatioFn RatioFn::network(MlpParams net, double init) {
    if (net.shape().out_dim != 1) throw std::invalid_argument("RatioFn: network must have scalar output");
    net.values()[net.bias_offset(net.shape().layer_count() - 1)] = inverse_softplus(init);
    RatioFn r;
    r.impl_ = std::move(net);
    return r;
}

RatioFn RatioFn::constant(double value) {
    if (!(value > 0.0)) throw std::invalid_argument("RatioFn::constant: value must be positive");
    RatioFn r;
    r.impl_ = Constant{value};
    return r;
}

double RatioFn::value(const State& s) const {
    return std::visit(overloaded{
                          [&](const Vec& t) { return softplus(t.at(s.index)); },
                          [&](const MlpParams& n) { return softplus(mlp_forward(n, s.features)[0]); },
                          [](const Constant& c) { return c.value; },
                      },
                      impl_);
}

Vec RatioFn::grad(const State& s) const {
    return std::visit(overloaded{
                          [&](const Vec& t) {
                              Vec g(t.size(), 0.0);
                              g.at(s.index) = sigmoid(t[s.index]);
                              return g;
                          },
                          [&](const MlpParams& n) {
                              const double slope = sigmoid(mlp_forward(n, s.features)[0]);
                              return mlp_grad(n, s.features, {&slope, 1});
                          },
                          [](const Constant&) { return Vec{}; },
                      },
                      impl_);
}

std::span<const double> RatioFn::params() const {
    return std::visit(overloaded{
                          [](const Vec& t) { return std::span<const double>(t); },
                          [](const MlpParams& n) { return n.values(); },
                          [](const Constant&) { return std::span<const double>(); },
                      },
                      impl_);
}

std::span<double> RatioFn::params() {
    return std::visit(overloaded{
                          [](Vec& t) { return std::span<double>(t); },
                          [](MlpParams& n) { return n.values(); },
                          [](Constant&) { return std::span<double>(); },
                      },
                      impl_);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'V', 'O', 'M', 'P', 'S', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u64(std::ofstream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name) {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw std::runtime_error("checkpoint: missing array '" + name + "'");
}

std::vector<std::size_t> to_sizes(const Vec& v) {
    std::vector<std::size_t> out;
    for (double d : v) out.push_back(static_cast<std::size_t>(d));
    return out;
}

Vec to_doubles(const std::vector<std::size_t>& v) { return Vec(v.begin(), v.end()); }

}  // namespace

void write_named_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(kMagic, sizeof kMagic);
    put_u64(out, arrays.size());
    for (const auto& a : arrays) {
        std::uint64_t count = 1;
        for (auto d : a.shape) count *= d;
        if (count != a.data.size()) throw std::invalid_argument("checkpoint: shape of '" + a.name + "' mismatches data");
        put_u64(out, a.name.size());
        out.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        put_u64(out, a.shape.size());
        for (auto d : a.shape) put_u64(out, d);
        out.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::vector<NamedArray> read_named_arrays(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("'" + path.string() + "' is not a checkpoint file");
    const std::uint64_t n = get_u64(in);
    std::vector<NamedArray> arrays;
    for (std::uint64_t i = 0; i < n; ++i) {
        NamedArray a;
        a.name.resize(get_u64(in));
        in.read(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        const std::uint64_t rank = get_u64(in);
        std::uint64_t count = 1;
        for (std::uint64_t r = 0; r < rank; ++r) {
            a.shape.push_back(get_u64(in));
            count *= a.shape.back();
        }
        a.data.resize(count);
        in.read(reinterpret_cast<char*>(a.data.data()), static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated file '" + path.string() + "'");
        arrays.push_back(std::move(a));
    }
    return arrays;
}

std::vector<NamedArray> policy_snapshot(const Policy& policy) {
    return std::visit(
        overloaded{
            [](const TabularSoftmaxPolicy& p) {
                const auto theta = p.params();
                return std::vector<NamedArray>{
                    {"policy.kind", {1}, {0.0}},
                    {"policy.offsets", {p.offsets().size()}, to_doubles(p.offsets())},
                    {"policy.theta", {theta.size()}, Vec(theta.begin(), theta.end())},
                };
            },
            [](const GaussianMlpPolicy& p) {
                const MlpShape& shape = p.mean_net().shape();
                std::vector<std::size_t> dims{shape.in_dim};
                dims.insert(dims.end(), shape.hidden.begin(), shape.hidden.end());
                dims.push_back(shape.out_dim);
                const auto theta = p.params();
                return std::vector<NamedArray>{
                    {"policy.kind", {1}, {1.0}},
                    {"policy.layers", {dims.size()}, to_doubles(dims)},
                    {"policy.theta", {theta.size()}, Vec(theta.begin(), theta.end())},
                    {"policy.sigma", {p.sigma().size()}, p.sigma()},
                    {"policy.action_box", {2}, {p.low(), p.high()}},
                };
            },
        },
        policy);
}

Policy policy_from_snapshot(const std::vector<NamedArray>& arrays) {
    const double kind = find_array(arrays, "policy.kind").data.at(0);
    const Vec& theta = find_array(arrays, "policy.theta").data;
    if (kind == 0.0) return TabularSoftmaxPolicy(to_sizes(find_array(arrays, "policy.offsets").data), theta);
    if (kind == 1.0) {
        const auto dims = to_sizes(find_array(arrays, "policy.layers").data);
        if (dims.size() < 2) throw std::runtime_error("checkpoint: malformed policy.layers");
        MlpShape shape{dims.front(), std::vector<std::size_t>(dims.begin() + 1, dims.end() - 1), dims.back()};
        const Vec& box = find_array(arrays, "policy.action_box").data;
        return GaussianMlpPolicy(MlpParams(shape, theta), find_array(arrays, "policy.sigma").data, box.at(0),
                                 box.at(1));
    }
    throw std::runtime_error("checkpoint: unknown policy kind");
}

}  // namespace vomps
