#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vomps {

using Vec = std::vector<double>;

/// Raised on dimension mismatches, singular systems and non-finite values.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm_inf(std::span<const double> a);
/// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);
bool all_finite(std::span<const double> a);

/// Dense row-major matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    DenseMatrix(std::size_t rows, std::size_t cols, Vec data);

    static DenseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    const Vec& data() const { return data_; }

    DenseMatrix transpose() const;
    Vec multiply(std::span<const double> x) const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vec data_;
};

/// Solves A x = b by LU with partial pivoting. Throws NumericError when A is
/// singular at working precision or the residual bound
/// ‖Ax−b‖∞ ≤ 1e-10·(1+‖b‖∞) is not met.
Vec solve_linear(const DenseMatrix& a, std::span<const double> b);

/// xoshiro256** seeded through splitmix64. Gaussian draws use Box–Muller.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);
    double normal();
    std::size_t uniform_index(std::size_t n);

    /// Independent child stream; does not advance this generator.
    Rng split(std::uint64_t stream) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Layer sizes of a fully connected network. Hidden layers use ReLU, the
/// output layer is linear. An empty hidden list gives a single affine map.
struct MlpShape {
    std::size_t in_dim = 0;
    std::vector<std::size_t> hidden{64, 64};
    std::size_t out_dim = 1;

    std::size_t layer_count() const { return hidden.size() + 1; }
    std::size_t layer_in(std::size_t l) const { return l == 0 ? in_dim : hidden[l - 1]; }
    std::size_t layer_out(std::size_t l) const { return l == hidden.size() ? out_dim : hidden[l]; }
    std::size_t param_count() const;

    bool operator==(const MlpShape&) const = default;
};

/// Network parameters stored flat: for each layer the weight block
/// (out × in, row-major) followed by the bias vector.
class MlpParams {
public:
    MlpParams() = default;
    MlpParams(MlpShape shape, Vec values);

    /// Glorot-uniform hidden layers, zero output layer, zero biases.
    static MlpParams initialize(const MlpShape& shape, Rng& rng);

    const MlpShape& shape() const { return shape_; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    std::size_t size() const { return values_.size(); }

    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const;

private:
    MlpShape shape_;
    Vec values_;
    std::vector<std::size_t> offsets_;
};

Vec mlp_forward(const MlpParams& params, std::span<const double> x);

/// Gradient of upstream·output with respect to every parameter, laid out
/// like MlpParams::values().
Vec mlp_grad(const MlpParams& params, std::span<const double> x, std::span<const double> upstream);

}  // namespace vomps
