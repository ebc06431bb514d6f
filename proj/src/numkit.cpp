#include "vomps/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vomps {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw NumericError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                           std::to_string(b) + ")");
    }
}

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_size(a.size(), b.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double norm_inf(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    require_same_size(x.size(), y.size(), "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// DenseMatrix

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, Vec data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_same_size(data_.size(), rows * cols, "DenseMatrix");
    if (!all_finite(data_)) throw NumericError("DenseMatrix: non-finite entry");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::transpose() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Vec DenseMatrix::multiply(std::span<const double> x) const {
    require_same_size(x.size(), cols_, "DenseMatrix::multiply");
    Vec y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) y[r] = dot(row(r), x);
    return y;
}

Vec solve_linear(const DenseMatrix& a, std::span<const double> b) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw NumericError("solve_linear: matrix is not square");
    require_same_size(b.size(), n, "solve_linear");

    DenseMatrix lu = a;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    const double scale = std::max(norm_inf(a.data()), 1.0);
    const double tiny = 1e-13 * scale;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::abs(lu(r, k)) > std::abs(lu(pivot, k))) pivot = r;
        if (std::abs(lu(pivot, k)) <= tiny) throw NumericError("solve_linear: matrix is singular");
        if (pivot != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(lu(k, c), lu(pivot, c));
            std::swap(perm[k], perm[pivot]);
        }
        for (std::size_t r = k + 1; r < n; ++r) {
            const double f = lu(r, k) / lu(k, k);
            lu(r, k) = f;
            for (std::size_t c = k + 1; c < n; ++c) lu(r, c) -= f * lu(k, c);
        }
    }

    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[perm[i]];
        for (std::size_t j = 0; j < i; ++j) s -= lu(i, j) * x[j];
        x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = x[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
        x[i] = s / lu(i, i);
    }

    Vec residual = a.multiply(x);
    for (std::size_t i = 0; i < n; ++i) residual[i] -= b[i];
    if (!all_finite(x) || norm_inf(residual) > 1e-10 * (1.0 + norm_inf(b)))
        throw NumericError("solve_linear: system is ill-conditioned (residual bound violated)");
    return x;
}

// ---------------------------------------------------------------------------
// Rng

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
    std::uint64_t x = seed ^ (stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    for (auto& word : s_) word = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw NumericError("Rng::uniform_index: empty range");
    // Lemire's multiply-shift with rejection.
    const auto range = static_cast<std::uint64_t>(n);
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * range;
    auto low = static_cast<std::uint64_t>(m);
    if (low < range) {
        const std::uint64_t threshold = (0 - range) % range;
        while (low < threshold) {
            m = static_cast<unsigned __int128>(next_u64()) * range;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::size_t>(m >> 64);
}

Rng Rng::split(std::uint64_t stream) const {
    return Rng(seed_, stream_ * 0x9e3779b97f4a7c15ULL + stream + 1);
}

// ---------------------------------------------------------------------------
// MLP

std::size_t MlpShape::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < layer_count(); ++l) n += layer_out(l) * (layer_in(l) + 1);
    return n;
}

MlpParams::MlpParams(MlpShape shape, Vec values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_.in_dim == 0 || shape_.out_dim == 0) throw NumericError("MlpParams: zero-sized layer");
    require_same_size(values_.size(), shape_.param_count(), "MlpParams");
    if (!all_finite(values_)) throw NumericError("MlpParams: non-finite parameter");
    std::size_t off = 0;
    for (std::size_t l = 0; l < shape_.layer_count(); ++l) {
        offsets_.push_back(off);
        off += shape_.layer_out(l) * (shape_.layer_in(l) + 1);
    }
}

std::size_t MlpParams::bias_offset(std::size_t layer) const {
    return offsets_[layer] + shape_.layer_out(layer) * shape_.layer_in(layer);
}

MlpParams MlpParams::initialize(const MlpShape& shape, Rng& rng) {
    MlpParams p(shape, Vec(shape.param_count(), 0.0));
    for (std::size_t l = 0; l + 1 < shape.layer_count(); ++l) {
        const std::size_t fan_in = shape.layer_in(l);
        const std::size_t fan_out = shape.layer_out(l);
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        const std::size_t off = p.weight_offset(l);
        for (std::size_t i = 0; i < fan_in * fan_out; ++i) p.values_[off + i] = rng.uniform(-limit, limit);
    }
    return p;
}

namespace {

// Forward pass keeping every layer's post-activation output.
std::vector<Vec> forward_layers(const MlpParams& params, std::span<const double> x) {
    const MlpShape& shape = params.shape();
    require_same_size(x.size(), shape.in_dim, "mlp_forward");
    const auto w = params.values();

    std::vector<Vec> acts;
    acts.reserve(shape.layer_count() + 1);
    acts.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < shape.layer_count(); ++l) {
        const std::size_t in = shape.layer_in(l);
        const std::size_t out = shape.layer_out(l);
        const double* wl = w.data() + params.weight_offset(l);
        const double* bl = w.data() + params.bias_offset(l);
        const Vec& prev = acts.back();
        Vec next(out);
        const bool hidden = l + 1 < shape.layer_count();
        for (std::size_t o = 0; o < out; ++o) {
            double s = bl[o];
            const double* row = wl + o * in;
            for (std::size_t i = 0; i < in; ++i) s += row[i] * prev[i];
            next[o] = hidden ? std::max(s, 0.0) : s;
        }
        acts.push_back(std::move(next));
    }
    return acts;
}

}  // namespace

Vec mlp_forward(const MlpParams& params, std::span<const double> x) {
    return std::move(forward_layers(params, x).back());
}

Vec mlp_grad(const MlpParams& params, std::span<const double> x, std::span<const double> upstream) {
    const MlpShape& shape = params.shape();
    require_same_size(upstream.size(), shape.out_dim, "mlp_grad");
    const std::vector<Vec> acts = forward_layers(params, x);
    const auto w = params.values();

    Vec grad(params.size(), 0.0);
    Vec delta(upstream.begin(), upstream.end());
    for (std::size_t l = shape.layer_count(); l-- > 0;) {
        const std::size_t in = shape.layer_in(l);
        const std::size_t out = shape.layer_out(l);
        const Vec& input = acts[l];
        double* gw = grad.data() + params.weight_offset(l);
        double* gb = grad.data() + params.bias_offset(l);
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            gb[o] = d;
            if (d == 0.0) continue;
            double* row = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) row[i] = d * input[i];
        }
        if (l == 0) break;
        // Backpropagate through the weights, then through the ReLU of layer l-1.
        const double* wl = w.data() + params.weight_offset(l);
        Vec below(in, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            const double* row = wl + o * in;
            for (std::size_t i = 0; i < in; ++i) below[i] += row[i] * d;
        }
        for (std::size_t i = 0; i < in; ++i)
            if (input[i] <= 0.0) below[i] = 0.0;
        delta = std::move(below);
    }
    return grad;
}

}  // namespace vomps
