#pragma once

// Dense row-major matrices, fully connected layer primitives, Xavier
// initialization and the Adam update rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gpvtf {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Rng = std::mt19937_64;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                                 " does not match shape " + std::to_string(rows_) + "x" +
                                 std::to_string(cols_));
        }
    }
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ == 0 ? 0 : init.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw DimensionError("ragged matrix initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    std::string shape_string() const {
        return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
    }

    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    Matrix& operator+=(const Matrix& o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        require_same_shape(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Matrix& operator*=(double s) noexcept {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    void require_same_shape(const Matrix& o, const char* op) const {
        if (!same_shape(o)) {
            throw DimensionError(std::string("shape mismatch in ") + op + ": " + shape_string() +
                                 " vs " + o.shape_string());
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;
using MutMap = Eigen::Map<EigenRowMajor>;

inline ConstMap view(const Matrix& m) {
    return ConstMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                    static_cast<Eigen::Index>(m.cols()));
}
inline MutMap view(Matrix& m) {
    return MutMap(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}

}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " +
                             b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    if (!out.empty()) detail::view(out).noalias() = detail::view(a) * detail::view(b);
    return out;
}

// aᵀ·b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn shape mismatch: " + a.shape_string() + "ᵀ x " +
                             b.shape_string());
    }
    Matrix out(a.cols(), b.cols());
    if (!out.empty()) detail::view(out).noalias() = detail::view(a).transpose() * detail::view(b);
    return out;
}

// a·bᵀ without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt shape mismatch: " + a.shape_string() + " x " +
                             b.shape_string() + "ᵀ");
    }
    Matrix out(a.rows(), b.rows());
    if (!out.empty()) detail::view(out).noalias() = detail::view(a) * detail::view(b).transpose();
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix hconcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("hconcat row mismatch: " + a.shape_string() + " | " +
                             b.shape_string());
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::copy(a.row(i).begin(), a.row(i).end(), out.row(i).begin());
        std::copy(b.row(i).begin(), b.row(i).end(), out.row(i).begin() + a.cols());
    }
    return out;
}

// Columns [first, first + count).
inline Matrix column_block(const Matrix& a, std::size_t first, std::size_t count) {
    if (first + count > a.cols()) throw DimensionError("column block out of range");
    Matrix out(a.rows(), count);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, first + j);
    return out;
}

inline Matrix select_rows(const Matrix& a, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.rows()) throw DimensionError("row index out of range");
        std::copy(a.row(idx[i]).begin(), a.row(idx[i]).end(), out.row(i).begin());
    }
    return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Uniform Glorot initialization: U(-√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out))).
inline Matrix xavier_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    if (fan_in == 0 || fan_out == 0) {
        throw ParameterError("xavier_init requires fan_in, fan_out >= 1");
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_in, fan_out);
    for (double& v : w.data()) v = dist(rng);
    return w;
}

struct AdamState {
    Matrix m;
    Matrix v;
    std::uint64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    AdamState() = default;
    AdamState(std::size_t rows, std::size_t cols, double lr)
        : m(rows, cols), v(rows, cols), learning_rate(lr) {}
    AdamState(const Matrix& like, double lr) : AdamState(like.rows(), like.cols(), lr) {}
};

inline void adam_step(Matrix& params, const Matrix& grads, AdamState& state) {
    if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v)) {
        throw DimensionError("adam_step shape mismatch: params " + params.shape_string() +
                             ", grads " + grads.shape_string() + ", state " +
                             state.m.shape_string());
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    auto& p = params.data();
    auto& m = state.m.data();
    auto& v = state.v.data();
    const auto& g = grads.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
        const double m_hat = m[i] / c1;
        const double v_hat = v[i] / c2;
        p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

enum class Activation { relu, sigmoid, linear };

inline double sigmoid(double x) noexcept {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline void check_bias(const Matrix& weights, std::span<const double> bias) {
    if (bias.size() != weights.cols()) {
        throw DimensionError("bias length " + std::to_string(bias.size()) +
                             " does not match weights " + weights.shape_string());
    }
}

/// Pre-activation input·W + b.
inline Matrix affine(const Matrix& input, const Matrix& weights, std::span<const double> bias) {
    check_bias(weights, bias);
    Matrix out = matmul(input, weights);
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias[j];
    }
    return out;
}

inline Matrix activate(Matrix pre, Activation act) {
    switch (act) {
        case Activation::relu:
            for (double& v : pre.data()) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::sigmoid:
            for (double& v : pre.data()) v = sigmoid(v);
            break;
        case Activation::linear:
            break;
    }
    return pre;
}

inline Matrix dense_forward(const Matrix& input, const Matrix& weights,
                            std::span<const double> bias, Activation act) {
    if (input.cols() != weights.rows()) {
        throw DimensionError("dense_forward shape mismatch: input " + input.shape_string() +
                             " vs weights " + weights.shape_string());
    }
    return activate(affine(input, weights, bias), act);
}

struct LayerGrads {
    Matrix weights;
    std::vector<double> bias;
};

struct DenseBackward {
    LayerGrads grads;
    Matrix input_grad;
};

// Backward pass given the layer's pre-activation input·W + b.
inline DenseBackward dense_backward_from(const Matrix& input, const Matrix& weights,
                                         const Matrix& pre, Activation act,
                                         const Matrix& upstream_grad) {
    if (input.cols() != weights.rows()) {
        throw DimensionError("dense_backward shape mismatch: input " + input.shape_string() +
                             " vs weights " + weights.shape_string());
    }
    if (upstream_grad.rows() != input.rows() || upstream_grad.cols() != weights.cols() ||
        (act != Activation::linear && !pre.same_shape(upstream_grad))) {
        throw DimensionError("dense_backward upstream gradient " + upstream_grad.shape_string() +
                             " does not match output (" + std::to_string(input.rows()) + "x" +
                             std::to_string(weights.cols()) + ")");
    }
    Matrix delta = upstream_grad;
    if (act == Activation::relu) {
        for (std::size_t i = 0; i < delta.size(); ++i)
            if (pre.data()[i] <= 0.0) delta.data()[i] = 0.0;
    } else if (act == Activation::sigmoid) {
        for (std::size_t i = 0; i < delta.size(); ++i) {
            const double s = sigmoid(pre.data()[i]);
            delta.data()[i] *= s * (1.0 - s);
        }
    }
    DenseBackward out;
    out.grads.weights = matmul_tn(input, delta);
    out.grads.bias.assign(weights.cols(), 0.0);
    for (std::size_t i = 0; i < delta.rows(); ++i) {
        const auto r = delta.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) out.grads.bias[j] += r[j];
    }
    out.input_grad = matmul_nt(delta, weights);
    return out;
}

/// Exact gradients of dense_forward w.r.t. weights, bias and input.
inline DenseBackward dense_backward(const Matrix& input, const Matrix& weights,
                                    std::span<const double> bias, Activation act,
                                    const Matrix& upstream_grad) {
    if (input.cols() != weights.rows()) {
        throw DimensionError("dense_backward shape mismatch: input " + input.shape_string() +
                             " vs weights " + weights.shape_string());
    }
    const Matrix pre = act == Activation::linear ? Matrix() : affine(input, weights, bias);
    return dense_backward_from(input, weights, pre, act, upstream_grad);
}

/// A fully connected layer with its two Adam states.
struct DenseLayer {
    Matrix weights;
    std::vector<double> bias;
    Activation activation = Activation::linear;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng)
        : weights(xavier_init(in, out, rng)), bias(out, 0.0), activation(act) {}

    std::size_t in_dim() const noexcept { return weights.rows(); }
    std::size_t out_dim() const noexcept { return weights.cols(); }

    Matrix forward(const Matrix& input) const {
        return dense_forward(input, weights, bias, activation);
    }
    DenseBackward backward(const Matrix& input, const Matrix& upstream) const {
        return dense_backward(input, weights, bias, activation, upstream);
    }
    DenseBackward backward(const Matrix& input, const Matrix& pre, const Matrix& upstream) const {
        return dense_backward_from(input, weights, pre, activation, upstream);
    }
};

struct DenseOptimizer {
    AdamState weights;
    AdamState bias;

    DenseOptimizer() = default;
    DenseOptimizer(const DenseLayer& layer, double lr)
        : weights(layer.weights, lr), bias(1, layer.bias.size(), lr) {}

    void step(DenseLayer& layer, const LayerGrads& grads) {
        adam_step(layer.weights, grads.weights, weights);
        Matrix b(1, layer.bias.size(), layer.bias);
        adam_step(b, Matrix(1, grads.bias.size(), grads.bias), bias);
        layer.bias = std::move(b.data());
    }
};

}  // namespace gpvtf
