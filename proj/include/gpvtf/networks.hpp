#pragma once

// Encoders, conditional cross-modal generators, discriminators with
// mini-batch discrimination, the cluster-structured noise prior and the
// adversarial losses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "gpvtf/numeric.hpp"

namespace gpvtf {

// ---------------------------------------------------------------- MLP

/// A stack of dense layers. Encoders are two layers (relu, linear) and
/// generators three (relu, relu, linear).
struct Mlp {
    std::vector<DenseLayer> layers;

    struct Cache {
        std::vector<Matrix> inputs;  // input of each layer
        std::vector<Matrix> pre;     // pre-activation of each layer
        Matrix output;
    };

    Mlp() = default;
    Mlp(std::span<const std::size_t> dims, Rng& rng) {
        if (dims.size() < 2) throw ParameterError("an MLP needs at least one layer");
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            const bool last = i + 2 == dims.size();
            layers.emplace_back(dims[i], dims[i + 1], last ? Activation::linear : Activation::relu,
                                rng);
        }
    }

    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }

    Matrix forward(const Matrix& x) const {
        Matrix h = x;
        for (const auto& l : layers) h = l.forward(h);
        return h;
    }

    Cache forward_cached(const Matrix& x) const {
        Cache c;
        Matrix h = x;
        for (const auto& l : layers) {
            c.inputs.push_back(h);
            c.pre.push_back(affine(h, l.weights, l.bias));
            h = activate(c.pre.back(), l.activation);
        }
        c.output = std::move(h);
        return c;
    }

    struct Grads {
        std::vector<LayerGrads> layers;
        Matrix input;
    };

    Grads backward(const Cache& cache, const Matrix& d_out) const {
        Grads g;
        g.layers.resize(layers.size());
        Matrix upstream = d_out;
        for (std::size_t i = layers.size(); i-- > 0;) {
            auto b = layers[i].backward(cache.inputs[i], cache.pre[i], upstream);
            g.layers[i] = std::move(b.grads);
            upstream = std::move(b.input_grad);
        }
        g.input = std::move(upstream);
        return g;
    }
};

struct MlpOptimizer {
    std::vector<DenseOptimizer> layers;

    MlpOptimizer() = default;
    MlpOptimizer(const Mlp& net, double lr) {
        for (const auto& l : net.layers) layers.emplace_back(l, lr);
    }
    void step(Mlp& net, const Mlp::Grads& g) {
        for (std::size_t i = 0; i < layers.size(); ++i) layers[i].step(net.layers[i], g.layers[i]);
    }
    double learning_rate() const {
        return layers.empty() ? 0.0 : layers.front().weights.learning_rate;
    }
    std::uint64_t steps() const { return layers.empty() ? 0 : layers.front().weights.step; }
};

inline Mlp make_encoder(std::size_t input_dim, std::size_t hidden, std::size_t latent, Rng& rng) {
    const std::size_t dims[] = {input_dim, hidden, latent};
    return Mlp(dims, rng);
}

inline Mlp make_generator(std::size_t noise_dim, std::size_t latent, std::size_t hidden, Rng& rng) {
    const std::size_t dims[] = {noise_dim + latent, hidden, hidden, latent};
    return Mlp(dims, rng);
}

// ---------------------------------------------------------------- mini-batch discrimination

/// o(x_i)_b = Σ_{j≠i} exp(−‖M_i,b − M_j,b‖₁) with M = reshape(activations·T, kernels × kernel_dim).
inline Matrix minibatch_features(const Matrix& activations, const Matrix& tensor,
                                 std::size_t kernels, std::size_t kernel_dim) {
    if (activations.cols() != tensor.rows() || tensor.cols() != kernels * kernel_dim) {
        throw DimensionError("minibatch_features shape mismatch: activations " +
                             activations.shape_string() + ", tensor " + tensor.shape_string());
    }
    const Matrix m = matmul(activations, tensor);
    const std::size_t b = activations.rows();
    Matrix o(b, kernels, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i + 1; j < b; ++j)
            for (std::size_t kb = 0; kb < kernels; ++kb) {
                double l1 = 0.0;
                for (std::size_t c = 0; c < kernel_dim; ++c)
                    l1 += std::abs(m(i, kb * kernel_dim + c) - m(j, kb * kernel_dim + c));
                const double e = std::exp(-l1);
                o(i, kb) += e;
                o(j, kb) += e;
            }
    return o;
}

struct MinibatchGrads {
    Matrix d_activations;
    Matrix d_tensor;
};

inline MinibatchGrads minibatch_backward(const Matrix& activations, const Matrix& tensor,
                                         std::size_t kernels, std::size_t kernel_dim,
                                         const Matrix& d_out) {
    const Matrix m = matmul(activations, tensor);
    const std::size_t b = activations.rows();
    Matrix d_m(b, kernels * kernel_dim, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i + 1; j < b; ++j)
            for (std::size_t kb = 0; kb < kernels; ++kb) {
                double l1 = 0.0;
                for (std::size_t c = 0; c < kernel_dim; ++c)
                    l1 += std::abs(m(i, kb * kernel_dim + c) - m(j, kb * kernel_dim + c));
                // e_ij enters both o_i and o_j.
                const double g = (d_out(i, kb) + d_out(j, kb)) * std::exp(-l1);
                for (std::size_t c = 0; c < kernel_dim; ++c) {
                    const std::size_t col = kb * kernel_dim + c;
                    const double diff = m(i, col) - m(j, col);
                    const double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
                    d_m(i, col) -= g * s;
                    d_m(j, col) += g * s;
                }
            }
    return {matmul_nt(d_m, tensor), matmul_tn(activations, d_m)};
}

// ---------------------------------------------------------------- discriminator

/// relu dense → [hidden | mini-batch features] → sigmoid dense.
struct Discriminator {
    DenseLayer hidden;
    Matrix tensor;
    std::size_t kernels = 16;
    std::size_t kernel_dim = 5;
    DenseLayer output;

    static constexpr double kClamp = 1e-12;

    struct Cache {
        Matrix input;
        Matrix h_pre;
        Matrix h;
        Matrix features;  // [h | o]
        Matrix out_pre;
        Matrix prob;      // b×1
    };

    Discriminator() = default;
    Discriminator(std::size_t latent, std::size_t hidden_dim, std::size_t kernels_,
                  std::size_t kernel_dim_, Rng& rng)
        : hidden(latent, hidden_dim, Activation::relu, rng),
          tensor(xavier_init(hidden_dim, kernels_ * kernel_dim_, rng)),
          kernels(kernels_),
          kernel_dim(kernel_dim_),
          output(hidden_dim + kernels_, 1, Activation::sigmoid, rng) {}

    Cache forward_cached(const Matrix& z) const {
        Cache c;
        c.input = z;
        c.h_pre = affine(z, hidden.weights, hidden.bias);
        c.h = activate(c.h_pre, hidden.activation);
        c.features = hconcat(c.h, minibatch_features(c.h, tensor, kernels, kernel_dim));
        c.out_pre = affine(c.features, output.weights, output.bias);
        c.prob = activate(c.out_pre, output.activation);
        for (double& p : c.prob.data()) p = std::clamp(p, kClamp, 1.0 - kClamp);
        return c;
    }

    std::vector<double> forward(const Matrix& z) const { return forward_cached(z).prob.data(); }

    struct Grads {
        LayerGrads hidden;
        Matrix tensor;
        LayerGrads output;
        Matrix input;
    };

    Grads backward(const Cache& c, std::span<const double> d_prob) const {
        Matrix up(d_prob.size(), 1, std::vector<double>(d_prob.begin(), d_prob.end()));
        auto out_b = output.backward(c.features, c.out_pre, up);
        const std::size_t hd = c.h.cols();
        const Matrix d_h_direct = column_block(out_b.input_grad, 0, hd);
        const Matrix d_o = column_block(out_b.input_grad, hd, kernels);
        auto mb = minibatch_backward(c.h, tensor, kernels, kernel_dim, d_o);
        auto hid_b = hidden.backward(c.input, c.h_pre, d_h_direct + mb.d_activations);
        return {std::move(hid_b.grads), std::move(mb.d_tensor), std::move(out_b.grads),
                std::move(hid_b.input_grad)};
    }
};

struct DiscriminatorOptimizer {
    DenseOptimizer hidden;
    AdamState tensor;
    DenseOptimizer output;

    DiscriminatorOptimizer() = default;
    DiscriminatorOptimizer(const Discriminator& d, double lr)
        : hidden(d.hidden, lr), tensor(d.tensor, lr), output(d.output, lr) {}

    void step(Discriminator& d, const Discriminator::Grads& g) {
        hidden.step(d.hidden, g.hidden);
        adam_step(d.tensor, g.tensor, tensor);
        output.step(d.output, g.output);
    }
    double learning_rate() const { return tensor.learning_rate; }
    std::uint64_t steps() const { return tensor.step; }
};

// ---------------------------------------------------------------- noise prior

struct NoisePrior {
    std::size_t gaussian_dim = 32;
    double sigma = 0.1;
    std::size_t k = 2;

    std::size_t dim() const noexcept { return gaussian_dim + k; }
};

/// Rows are [ω_n | ω_c]: ω_n ~ N(0, σ²I), ω_c a uniformly drawn one-hot vector.
inline Matrix sample_noise(const NoisePrior& prior, std::size_t batch, Rng& rng) {
    if (batch < 1) throw ParameterError("sample_noise requires batch >= 1");
    if (!(prior.sigma > 0.0)) throw ParameterError("noise sigma must be > 0");
    if (prior.k < 1) throw ParameterError("noise one-hot dimension must be >= 1");
    std::normal_distribution<double> normal(0.0, prior.sigma);
    std::uniform_int_distribution<std::size_t> pick(0, prior.k - 1);
    Matrix w(batch, prior.dim(), 0.0);
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < prior.gaussian_dim; ++j) w(i, j) = normal(rng);
        w(i, prior.gaussian_dim + pick(rng)) = 1.0;
    }
    return w;
}

/// G(ω | condition): the generator consumes [ω | condition].
inline Mlp::Cache cross_generate_cached(const Mlp& generator, const Matrix& condition,
                                        const NoisePrior& prior, Rng& rng) {
    if (condition.rows() == 0) return {{}, {}, Matrix(0, generator.out_dim())};
    if (generator.in_dim() != prior.dim() + condition.cols()) {
        throw DimensionError("generator input " + std::to_string(generator.in_dim()) +
                             " != noise " + std::to_string(prior.dim()) + " + condition " +
                             std::to_string(condition.cols()));
    }
    return generator.forward_cached(hconcat(sample_noise(prior, condition.rows(), rng), condition));
}

inline Matrix cross_generate(const Mlp& generator, const Matrix& condition,
                             const NoisePrior& prior, Rng& rng) {
    return cross_generate_cached(generator, condition, prior, rng).output;
}

// ---------------------------------------------------------------- losses

struct GeneratorLoss {
    double loss = 0.0;
    double adversarial = 0.0;
    double similarity = 0.0;
    std::vector<double> d_prob;  // dL/dD(fake)
    Matrix d_fake;               // dL/dfake from the similarity term only
};

/// L_G = −mean log(1 − D(fake)) + λ·mean ‖fake − target‖². The similarity
/// mean runs over rows with target_present set (all rows when empty).
/// `non_saturating` swaps the adversarial term for −mean log D(fake).
inline GeneratorLoss generator_loss(std::span<const double> d_fake, const Matrix& fake,
                                    const Matrix& target, double lambda,
                                    const std::vector<bool>& target_present = {},
                                    bool non_saturating = false) {
    if (!fake.same_shape(target) || d_fake.size() != fake.rows()) {
        throw DimensionError("generator_loss shape mismatch: fake " + fake.shape_string() +
                             ", target " + target.shape_string() + ", D outputs " +
                             std::to_string(d_fake.size()));
    }
    if (!target_present.empty() && target_present.size() != fake.rows()) {
        throw DimensionError("generator_loss presence length mismatch");
    }
    GeneratorLoss r;
    const double b = static_cast<double>(fake.rows());
    r.d_prob.resize(d_fake.size());
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
        const double p = d_fake[i];
        if (non_saturating) {
            r.adversarial -= std::log(p) / b;
            r.d_prob[i] = -1.0 / (p * b);
        } else {
            r.adversarial -= std::log1p(-p) / b;
            r.d_prob[i] = 1.0 / ((1.0 - p) * b);
        }
    }
    r.d_fake = Matrix(fake.rows(), fake.cols(), 0.0);
    std::size_t present = 0;
    for (std::size_t i = 0; i < fake.rows(); ++i)
        present += target_present.empty() || target_present[i];
    if (present > 0 && lambda != 0.0) {
        const double scale = 1.0 / static_cast<double>(present);
        for (std::size_t i = 0; i < fake.rows(); ++i) {
            if (!target_present.empty() && !target_present[i]) continue;
            r.similarity += squared_distance(fake.row(i), target.row(i)) * scale;
            for (std::size_t j = 0; j < fake.cols(); ++j)
                r.d_fake(i, j) = 2.0 * lambda * scale * (fake(i, j) - target(i, j));
        }
    }
    r.loss = r.adversarial + lambda * r.similarity;
    return r;
}

struct DiscriminatorLoss {
    double loss = 0.0;
    std::vector<double> d_real;
    std::vector<double> d_fake;
};

/// −(mean log D(real) + mean log(1 − D(fake))). An empty side contributes 0.
inline DiscriminatorLoss discriminator_loss(std::span<const double> d_real,
                                            std::span<const double> d_fake) {
    DiscriminatorLoss r;
    r.d_real.resize(d_real.size());
    r.d_fake.resize(d_fake.size());
    const double br = static_cast<double>(d_real.size());
    const double bf = static_cast<double>(d_fake.size());
    for (std::size_t i = 0; i < d_real.size(); ++i) {
        r.loss -= std::log(d_real[i]) / br;
        r.d_real[i] = -1.0 / (d_real[i] * br);
    }
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
        r.loss -= std::log1p(-d_fake[i]) / bf;
        r.d_fake[i] = 1.0 / ((1.0 - d_fake[i]) * bf);
    }
    return r;
}

}  // namespace gpvtf
