#pragma once

// The alternating training loop: encoders by fused KL self-training, then the
// cross-modal generators and their discriminators, then the epoch-end refresh
// of fused representations and cluster centers.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gpvtf/checkpoint.hpp"
#include "gpvtf/clustering.hpp"
#include "gpvtf/data.hpp"
#include "gpvtf/metrics.hpp"
#include "gpvtf/networks.hpp"
#include "gpvtf/numeric.hpp"

namespace gpvtf {

class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::string loss, std::size_t epoch)
        : std::runtime_error("non-finite " + loss + " at epoch " + std::to_string(epoch)),
          loss_name(std::move(loss)),
          epoch(epoch) {}
    std::string loss_name;
    std::size_t epoch;
};

enum class CenterUpdate {
    gradient_and_reestimate,  // Adam on μ per batch, mean refit per epoch
    reestimate,               // mean refit per epoch only
    gradient,                 // Adam on μ only
};

inline const char* to_string(CenterUpdate c) {
    switch (c) {
        case CenterUpdate::gradient_and_reestimate: return "gradient_and_reestimate";
        case CenterUpdate::reestimate: return "reestimate";
        case CenterUpdate::gradient: return "gradient";
    }
    return "?";
}

struct TrainConfig {
    std::size_t max_iter = 100;
    std::size_t batch_size = 64;
    double lr_encoders = 1e-4;
    double lr_g1 = 3e-6;
    double lr_g2 = 4e-6;
    double lr_d = 1e-6;
    std::size_t g_updates_per_d = 5;
    double alpha = 0.2;
    double beta = 1.0;
    double lambda = 0.1;
    double phi1 = 0.01;
    double phi2 = 0.01;
    double gamma = 1.0;
    double sigma = 0.1;
    std::uint64_t seed = 0;
    bool disable_gan = false;
    bool disable_fusion_kl = false;

    // architecture
    std::size_t encoder_hidden = 256;
    std::size_t latent_dim = 64;
    std::size_t generator_hidden = 128;
    std::size_t discriminator_hidden = 64;
    std::size_t minibatch_kernels = 16;
    std::size_t minibatch_kernel_dim = 5;
    std::size_t noise_dim = 32;

    // loop details
    std::size_t kmeans_iter = 100;
    std::size_t kmeans_restarts = 10;
    double tol = 0.001;  // early stop when fewer than this fraction of labels change
    CenterUpdate center_update = CenterUpdate::gradient_and_reestimate;
    bool non_saturating = false;
    bool same_modality_condition = false;

    void validate() const {
        if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
        for (double lr : {lr_encoders, lr_g1, lr_g2, lr_d})
            if (!(lr > 0.0)) throw ParameterError("learning rates must be > 0");
        if (g_updates_per_d < 1) throw ParameterError("g_updates_per_d must be >= 1");
        FusionWeights{alpha, phi1, phi2, beta}.validate();
        if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
        if (!(gamma > 0.0)) throw ParameterError("gamma must be > 0");
        if (!(sigma > 0.0)) throw ParameterError("sigma must be > 0");
        if (!(tol >= 0.0)) throw ParameterError("tol must be >= 0");
        if (kmeans_restarts < 1) throw ParameterError("kmeans_restarts must be >= 1");
        if (latent_dim < 1 || encoder_hidden < 1 || generator_hidden < 1 ||
            discriminator_hidden < 1 || minibatch_kernels < 1 || minibatch_kernel_dim < 1) {
            throw ParameterError("network sizes must be >= 1");
        }
    }

    FusionWeights fusion() const { return {alpha, phi1, phi2, beta}; }
    double effective_beta() const { return disable_fusion_kl ? 0.0 : beta; }
};

// ---------------------------------------------------------------- config as key/value

namespace detail {

inline std::string kv_double(double v) { return format_double(v); }
inline std::string kv_bool(bool v) { return v ? "true" : "false"; }

inline bool parse_bool(const std::string& key, std::string v) {
    for (auto& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParameterError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::size_t parse_count(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ParameterError("config key '" + key + "' expects a non-negative integer, got '" +
                             v + "'");
    }
    return static_cast<std::size_t>(out);
}

inline double parse_real(const std::string& key, const std::string& v) {
    try {
        return parse_double(v, "config key '" + key + "'");
    } catch (const ParseError& e) {
        throw ParameterError(e.what());
    }
}

}  // namespace detail

/// Flat key/value view of a config; keys mirror the field names.
inline std::map<std::string, std::string> to_key_values(const TrainConfig& c) {
    using detail::kv_bool;
    using detail::kv_double;
    return {
        {"max_iter", std::to_string(c.max_iter)},
        {"batch_size", std::to_string(c.batch_size)},
        {"lr_encoders", kv_double(c.lr_encoders)},
        {"lr_g1", kv_double(c.lr_g1)},
        {"lr_g2", kv_double(c.lr_g2)},
        {"lr_d", kv_double(c.lr_d)},
        {"g_updates_per_d", std::to_string(c.g_updates_per_d)},
        {"alpha", kv_double(c.alpha)},
        {"beta", kv_double(c.beta)},
        {"lambda", kv_double(c.lambda)},
        {"phi1", kv_double(c.phi1)},
        {"phi2", kv_double(c.phi2)},
        {"gamma", kv_double(c.gamma)},
        {"sigma", kv_double(c.sigma)},
        {"seed", std::to_string(c.seed)},
        {"disable_gan", kv_bool(c.disable_gan)},
        {"disable_fusion_kl", kv_bool(c.disable_fusion_kl)},
        {"encoder_hidden", std::to_string(c.encoder_hidden)},
        {"latent_dim", std::to_string(c.latent_dim)},
        {"generator_hidden", std::to_string(c.generator_hidden)},
        {"discriminator_hidden", std::to_string(c.discriminator_hidden)},
        {"minibatch_kernels", std::to_string(c.minibatch_kernels)},
        {"minibatch_kernel_dim", std::to_string(c.minibatch_kernel_dim)},
        {"noise_dim", std::to_string(c.noise_dim)},
        {"kmeans_iter", std::to_string(c.kmeans_iter)},
        {"kmeans_restarts", std::to_string(c.kmeans_restarts)},
        {"tol", kv_double(c.tol)},
        {"center_update", to_string(c.center_update)},
        {"non_saturating", kv_bool(c.non_saturating)},
        {"same_modality_condition", kv_bool(c.same_modality_condition)},
    };
}

/// Applies one key/value override; unknown keys are rejected.
inline void apply_key_value(TrainConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    const std::map<std::string, std::function<void()>> setters = {
        {"max_iter", [&] { c.max_iter = parse_count(key, value); }},
        {"batch_size", [&] { c.batch_size = parse_count(key, value); }},
        {"lr_encoders", [&] { c.lr_encoders = parse_real(key, value); }},
        {"lr_g1", [&] { c.lr_g1 = parse_real(key, value); }},
        {"lr_g2", [&] { c.lr_g2 = parse_real(key, value); }},
        {"lr_d", [&] { c.lr_d = parse_real(key, value); }},
        {"g_updates_per_d", [&] { c.g_updates_per_d = parse_count(key, value); }},
        {"alpha", [&] { c.alpha = parse_real(key, value); }},
        {"beta", [&] { c.beta = parse_real(key, value); }},
        {"lambda", [&] { c.lambda = parse_real(key, value); }},
        {"phi1", [&] { c.phi1 = parse_real(key, value); }},
        {"phi2", [&] { c.phi2 = parse_real(key, value); }},
        {"gamma", [&] { c.gamma = parse_real(key, value); }},
        {"sigma", [&] { c.sigma = parse_real(key, value); }},
        {"seed", [&] { c.seed = parse_count(key, value); }},
        {"disable_gan", [&] { c.disable_gan = parse_bool(key, value); }},
        {"disable_fusion_kl", [&] { c.disable_fusion_kl = parse_bool(key, value); }},
        {"encoder_hidden", [&] { c.encoder_hidden = parse_count(key, value); }},
        {"latent_dim", [&] { c.latent_dim = parse_count(key, value); }},
        {"generator_hidden", [&] { c.generator_hidden = parse_count(key, value); }},
        {"discriminator_hidden", [&] { c.discriminator_hidden = parse_count(key, value); }},
        {"minibatch_kernels", [&] { c.minibatch_kernels = parse_count(key, value); }},
        {"minibatch_kernel_dim", [&] { c.minibatch_kernel_dim = parse_count(key, value); }},
        {"noise_dim", [&] { c.noise_dim = parse_count(key, value); }},
        {"kmeans_iter", [&] { c.kmeans_iter = parse_count(key, value); }},
        {"kmeans_restarts", [&] { c.kmeans_restarts = parse_count(key, value); }},
        {"tol", [&] { c.tol = parse_real(key, value); }},
        {"center_update",
         [&] {
             if (value == "gradient_and_reestimate") c.center_update = CenterUpdate::gradient_and_reestimate;
             else if (value == "reestimate") c.center_update = CenterUpdate::reestimate;
             else if (value == "gradient") c.center_update = CenterUpdate::gradient;
             else throw ParameterError("unknown center_update '" + value + "'");
         }},
        {"non_saturating", [&] { c.non_saturating = parse_bool(key, value); }},
        {"same_modality_condition", [&] { c.same_modality_condition = parse_bool(key, value); }},
    };
    const auto it = setters.find(key);
    if (it == setters.end()) throw ParameterError("unknown config key '" + key + "'");
    it->second();
}

/// Parses a flat `key = value` (or `key: value`) document; `#` starts a comment.
inline void apply_config_text(TrainConfig& c, std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto sep = line.find_first_of("=:");
        const auto key = std::string(detail::trim(std::string_view(line).substr(0, sep)));
        if (key.empty()) continue;
        if (sep == std::string::npos) throw ParameterError("config line lacks a value: " + line);
        auto value = std::string(detail::trim(std::string_view(line).substr(sep + 1)));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        apply_key_value(c, key, value);
    }
}

// ---------------------------------------------------------------- state

struct ClusterState {
    std::array<Matrix, 3> centers;  // visual, tactile, fused
    double gamma = 1.0;
};

struct StepCounters {
    std::uint64_t encoder_updates = 0;
    std::array<std::uint64_t, 2> generator_updates{};
    std::array<std::uint64_t, 2> discriminator_updates{};
    std::uint64_t batches = 0;
    std::size_t largest_batch = 0;
};

struct EpochLosses {
    double e1 = 0.0, e2 = 0.0, g1 = 0.0, g2 = 0.0, d1 = 0.0, d2 = 0.0;
    double label_change = 1.0;
};

struct TrainReport {
    std::vector<EpochLosses> trace;
    std::vector<double> epoch_seconds;
    std::vector<int> labels;
    std::optional<double> acc;
    std::optional<double> nmi;
    std::size_t epochs_run = 0;
    bool converged = false;
    StepCounters counters;
};

namespace detail {

inline Rng make_stream(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      stream};
    return Rng(seq);
}

inline void require_finite(double v, const char* name, std::size_t epoch) {
    if (!std::isfinite(v)) throw DivergenceError(name, epoch);
}

inline void add_into(LayerGrads& a, const LayerGrads& b) {
    a.weights += b.weights;
    for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
}

inline std::vector<std::size_t> present_rows(const std::vector<bool>& present) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < present.size(); ++i)
        if (present[i]) rows.push_back(i);
    return rows;
}

}  // namespace detail

class Trainer {
public:
    /// Standardizes features, Xavier-initializes all six networks, computes the
    /// initial latents (missing slots completed by the untrained cross
    /// generator, or by the encoding of the imputed mean when the GAN is
    /// disabled) and seeds the three center sets by k-means.
    Trainer(const PairedDataset& data, const MissingMask& mask, TrainConfig config)
        : config_(std::move(config)), mask_(mask), k_(static_cast<std::size_t>(data.k)) {
        config_.validate();
        data.validate();
        if (mask.size() != data.size()) {
            throw AlignmentError("mask covers " + std::to_string(mask.size()) +
                                 " samples but dataset has " + std::to_string(data.size()));
        }
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask.visual_present[i] && !mask.tactile_present[i]) {
                throw ParameterError("sample " + std::to_string(i) + " has no modality present");
            }
        }
        if (k_ < 2) throw ParameterError("k must be >= 2");
        if (data.size() < k_) {
            throw ParameterError("n < k (n=" + std::to_string(data.size()) +
                                 ", k=" + std::to_string(k_) + ")");
        }
        x_[0] = standardize(data.visual, mask.visual_present);
        x_[1] = standardize(data.tactile, mask.tactile_present);

        init_rng_ = detail::make_stream(config_.seed, 1);
        batch_rng_ = detail::make_stream(config_.seed, 2);
        noise_rng_ = detail::make_stream(config_.seed, 3);
        Rng gan_rng = detail::make_stream(config_.seed, 4);

        prior_ = NoisePrior{config_.noise_dim, config_.sigma, k_};
        const std::size_t lat = config_.latent_dim;
        for (std::size_t m = 0; m < 2; ++m) {
            encoders_[m] = make_encoder(x_[m].cols(), config_.encoder_hidden, lat, init_rng_);
            enc_opt_[m] = MlpOptimizer(encoders_[m], config_.lr_encoders);
        }
        const double g_lr[2] = {config_.lr_g1, config_.lr_g2};
        for (std::size_t m = 0; m < 2; ++m) {
            generators_[m] = make_generator(prior_.dim(), lat, config_.generator_hidden, gan_rng);
            gen_opt_[m] = MlpOptimizer(generators_[m], g_lr[m]);
            discriminators_[m] =
                Discriminator(lat, config_.discriminator_hidden, config_.minibatch_kernels,
                              config_.minibatch_kernel_dim, gan_rng);
            disc_opt_[m] = DiscriminatorOptimizer(discriminators_[m], config_.lr_d);
        }

        clusters_.gamma = config_.gamma;
        refresh_latents(/*with_fakes=*/false);
        for (std::size_t m = 0; m < 2; ++m) {
            const auto rows = detail::present_rows(mask_.presence(static_cast<Modality>(m)));
            const Matrix pts = select_rows(z_[m], rows);
            if (pts.rows() < k_) {
                throw ParameterError(std::string("fewer present ") +
                                     modality_name(static_cast<Modality>(m)) +
                                     " samples than clusters");
            }
            clusters_.centers[m] = kmeans(pts, k_, config_.kmeans_iter, config_.seed * 1000 + 100 * (m + 1),
                                          config_.kmeans_restarts).centers;
        }
        clusters_.centers[2] = kmeans(z_[2], k_, config_.kmeans_iter, config_.seed * 1000 + 300,
                                   config_.kmeans_restarts).centers;
        for (std::size_t m = 0; m < 3; ++m) center_opt_[m] = AdamState(clusters_.centers[m], config_.lr_encoders);
        refresh_targets();
        labels_ = predict();
    }

    const TrainConfig& config() const noexcept { return config_; }
    const ClusterState& clusters() const noexcept { return clusters_; }
    const StepCounters& counters() const noexcept { return counters_; }
    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t k() const noexcept { return k_; }
    const Matrix& latents(std::size_t m) const { return z_.at(m); }
    const Matrix& fused() const noexcept { return z_[2]; }
    const Matrix& fakes(Modality m) const noexcept { return fakes_[idx(m)]; }
    const Matrix& target(std::size_t m) const { return p_.at(m); }
    const Matrix& features(Modality m) const noexcept { return x_[idx(m)]; }
    const MissingMask& mask() const noexcept { return mask_; }

    const Mlp& encoder(Modality m) const noexcept { return encoders_[idx(m)]; }
    const Mlp& generator(Modality m) const noexcept { return generators_[idx(m)]; }
    const Discriminator& discriminator(Modality m) const noexcept { return discriminators_[idx(m)]; }
    const MlpOptimizer& encoder_optimizer(Modality m) const noexcept { return enc_opt_[idx(m)]; }
    const MlpOptimizer& generator_optimizer(Modality m) const noexcept { return gen_opt_[idx(m)]; }
    const DiscriminatorOptimizer& discriminator_optimizer(Modality m) const noexcept {
        return disc_opt_[idx(m)];
    }
    Mlp& mutable_generator(Modality m) noexcept { return generators_[idx(m)]; }

    /// Soft assignment of the fused representation; label = argmax, ties to
    /// the lowest cluster index.
    Matrix fused_assignment() const {
        return soft_assign(z_[2], clusters_.centers[2], config_.gamma);
    }
    std::vector<int> predict() const { return row_argmax(fused_assignment()); }

    Batch make_batch(std::span<const std::size_t> rows) const {
        Batch b;
        b.indices.assign(rows.begin(), rows.end());
        b.visual = select_rows(x_[0], rows);
        b.tactile = select_rows(x_[1], rows);
        for (std::size_t i : rows) {
            b.visual_present.push_back(mask_.visual_present[i]);
            b.tactile_present.push_back(mask_.tactile_present[i]);
        }
        return b;
    }

    struct EncoderStepLosses {
        double e1 = 0.0, e2 = 0.0;  // summed over the batch rows
    };

    /// One Adam step of both encoders (and of μ¹, μ² when center gradients are
    /// enabled) on L_Em = KL(P^m‖Q^m) + β·KL(P³‖Q³). Rows with modality m
    /// missing drop out of the first term and use their stored completion.
    EncoderStepLosses encoder_step(const Batch& b) {
        const double beta = config_.effective_beta();
        std::array<Mlp::Cache, 2> cache;
        std::array<Matrix, 2> z;
        std::array<std::vector<double>, 2> w;
        std::array<Matrix, 2> p;
        for (std::size_t m = 0; m < 2; ++m) {
            cache[m] = encoders_[m].forward_cached(m == 0 ? b.visual : b.tactile);
            z[m] = cache[m].output;
            const auto& present = m == 0 ? b.visual_present : b.tactile_present;
            w[m].resize(b.size());
            for (std::size_t r = 0; r < b.size(); ++r) {
                w[m][r] = present[r] ? 1.0 : 0.0;
                if (!present[r]) {
                    std::copy(z_[m].row(b.indices[r]).begin(), z_[m].row(b.indices[r]).end(),
                              z[m].row(r).begin());
                }
            }
            p[m] = select_rows(p_[m], b.indices);
        }
        const Matrix z3 = fuse_rows(z[0], z[1], b.indices);
        const Matrix p3 = select_rows(p_[2], b.indices);

        KlTermResult fused_term;
        if (beta > 0.0) fused_term = kl_term({z3, clusters_.centers[2], p3}, config_.gamma);

        EncoderStepLosses out;
        const double mix[2] = {1.0 - config_.alpha, config_.alpha};
        for (std::size_t m = 0; m < 2; ++m) {
            auto term = kl_term({z[m], clusters_.centers[m], p[m], w[m]}, config_.gamma);
            const double loss = term.loss + beta * fused_term.loss;
            (m == 0 ? out.e1 : out.e2) = loss;
            Matrix d_z = std::move(term.d_z);
            if (beta > 0.0) d_z += (beta * mix[m]) * fused_term.d_z;
            for (std::size_t r = 0; r < b.size(); ++r)
                if (w[m][r] == 0.0) std::fill(d_z.row(r).begin(), d_z.row(r).end(), 0.0);
            enc_opt_[m].step(encoders_[m], encoders_[m].backward(cache[m], d_z));
            if (config_.center_update != CenterUpdate::reestimate) {
                adam_step(clusters_.centers[m], term.d_centers, center_opt_[m]);
            }
        }
        ++counters_.encoder_updates;
        return out;
    }

    /// One Adam step of G_m on L_G = L_adv + λ·L_sim.
    GeneratorLoss generator_step(const Batch& b, Modality m) {
        return generator_step(b, m, current_latents(b));
    }

    /// As above with the batch latents already encoded (encoders are frozen
    /// during generator and discriminator steps).
    GeneratorLoss generator_step(const Batch& b, Modality m, const std::array<Matrix, 2>& cur) {
        const std::size_t t = idx(m);
        const auto& present = t == 0 ? b.visual_present : b.tactile_present;
        auto gen = cross_generate_cached(generators_[t], condition_for(m, b, cur), prior_, noise_rng_);
        const auto d_cache = discriminators_[t].forward_cached(gen.output);
        auto gl = generator_loss(d_cache.prob.data(), gen.output, cur[t], config_.lambda, present,
                                 config_.non_saturating);
        Matrix d_fake = discriminators_[t].backward(d_cache, gl.d_prob).input;
        d_fake += gl.d_fake;
        gen_opt_[t].step(generators_[t], generators_[t].backward(gen, d_fake));
        ++counters_.generator_updates[t];
        return gl;
    }

    /// One Adam step of D_m: present real latents against fresh fakes.
    DiscriminatorLoss discriminator_step(const Batch& b, Modality m) {
        return discriminator_step(b, m, current_latents(b));
    }

    DiscriminatorLoss discriminator_step(const Batch& b, Modality m,
                                         const std::array<Matrix, 2>& cur) {
        const std::size_t t = idx(m);
        const auto& present = t == 0 ? b.visual_present : b.tactile_present;
        const Matrix fake = cross_generate(generators_[t], condition_for(m, b, cur), prior_, noise_rng_);
        const Matrix real = select_rows(cur[t], detail::present_rows(present));

        auto& disc = discriminators_[t];
        const auto fake_cache = disc.forward_cached(fake);
        std::optional<Discriminator::Cache> real_cache;
        std::vector<double> real_prob;
        if (real.rows() > 0) {
            real_cache = disc.forward_cached(real);
            real_prob = real_cache->prob.data();
        }
        auto dl = discriminator_loss(real_prob, fake_cache.prob.data());
        auto grads = disc.backward(fake_cache, dl.d_fake);
        if (real_cache) {
            const auto rg = disc.backward(*real_cache, dl.d_real);
            detail::add_into(grads.hidden, rg.hidden);
            grads.tensor += rg.tensor;
            detail::add_into(grads.output, rg.output);
        }
        disc_opt_[t].step(disc, grads);
        ++counters_.discriminator_updates[t];
        return dl;
    }

    /// Re-encodes all samples, regenerates fakes and completions, refuses Z³,
    /// refits centers (per the configured rule) and recomputes the targets.
    void refresh_representations() {
        refresh_latents();
        if (config_.center_update != CenterUpdate::gradient) {
            for (std::size_t m = 0; m < 2; ++m) {
                const auto rows = detail::present_rows(mask_.presence(static_cast<Modality>(m)));
                const Matrix zp = select_rows(z_[m], rows);
                clusters_.centers[m] = argmax_centers(
                    zp, soft_assign(zp, clusters_.centers[m], config_.gamma), clusters_.centers[m]);
            }
        }
        clusters_.centers[2] = argmax_centers(
            z_[2], soft_assign(z_[2], clusters_.centers[2], config_.gamma), clusters_.centers[2]);
        refresh_targets();
    }

    EpochLosses train_epoch() {
        const std::size_t epoch_index = epoch_ + 1;
        EpochLosses losses;
        const auto plan = batches(x_[0], x_[1], mask_, config_.batch_size, batch_rng_);
        std::size_t g_steps = 0, d_steps = 0;
        const double n = static_cast<double>(mask_.size());
        for (const auto& b : plan) {
            ++counters_.batches;
            counters_.largest_batch = std::max(counters_.largest_batch, b.size());
            const auto e = encoder_step(b);
            losses.e1 += e.e1 / n;
            losses.e2 += e.e2 / n;
            if (config_.disable_gan) continue;
            const auto cur = current_latents(b);
            for (std::size_t s = 0; s < config_.g_updates_per_d; ++s) {
                losses.g1 += generator_step(b, Modality::visual, cur).loss;
                losses.g2 += generator_step(b, Modality::tactile, cur).loss;
                ++g_steps;
            }
            losses.d1 += discriminator_step(b, Modality::visual, cur).loss;
            losses.d2 += discriminator_step(b, Modality::tactile, cur).loss;
            ++d_steps;
        }
        if (g_steps) losses.g1 /= g_steps, losses.g2 /= g_steps;
        if (d_steps) losses.d1 /= d_steps, losses.d2 /= d_steps;
        detail::require_finite(losses.e1, "L_E1", epoch_index);
        detail::require_finite(losses.e2, "L_E2", epoch_index);
        detail::require_finite(losses.g1, "L_G1", epoch_index);
        detail::require_finite(losses.g2, "L_G2", epoch_index);
        detail::require_finite(losses.d1, "L_D1", epoch_index);
        detail::require_finite(losses.d2, "L_D2", epoch_index);

        refresh_representations();
        if (!z_[2].all_finite()) throw DivergenceError("fused representation", epoch_index);
        auto labels = predict();
        std::size_t changed = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) changed += labels[i] != labels_[i];
        losses.label_change = static_cast<double>(changed) / static_cast<double>(labels.size());
        labels_ = std::move(labels);
        epoch_ = epoch_index;
        return losses;
    }

    // ------------------------------------------------------------ checkpointing

    Archive to_archive() const {
        Archive a;
        for (const auto& [k, v] : to_key_values(config_)) a.meta["config." + k] = v;
        a.meta["epoch"] = std::to_string(epoch_);
        a.meta["k"] = std::to_string(k_);
        a.meta["rng.batch"] = rng_text(batch_rng_);
        a.meta["rng.noise"] = rng_text(noise_rng_);
        a.meta["counters"] = counters_text();
        const char* names[2] = {"visual", "tactile"};
        for (std::size_t m = 0; m < 2; ++m) {
            const std::string s = names[m];
            put_mlp(a, "encoder." + s, encoders_[m], enc_opt_[m]);
            put_mlp(a, "generator." + s, generators_[m], gen_opt_[m]);
            put_disc(a, "discriminator." + s, discriminators_[m], disc_opt_[m]);
        }
        const char* cnames[3] = {"visual", "tactile", "fused"};
        for (std::size_t m = 0; m < 3; ++m) {
            put_adam(a, std::string("centers.") + cnames[m], clusters_.centers[m], center_opt_[m]);
        }
        for (std::size_t m = 0; m < 3; ++m) a.tensors[std::string("latent.") + cnames[m]] = z_[m];
        for (std::size_t m = 0; m < 2; ++m) a.tensors[std::string("fake.") + names[m]] = fakes_[m];
        a.tensors["labels"] = labels_matrix();
        return a;
    }

    /// Restores network, optimizer, center and RNG state from `a`, then
    /// recomputes latents and targets. The archive must come from a trainer
    /// with the same data shape and config.
    void load(const Archive& a) {
        TrainConfig saved;
        for (const auto& [k, v] : a.meta)
            if (k.rfind("config.", 0) == 0) apply_key_value(saved, k.substr(7), v);
        if (to_key_values(saved) != to_key_values(config_)) {
            throw ParameterError("checkpoint config does not match the trainer config");
        }
        const char* names[2] = {"visual", "tactile"};
        for (std::size_t m = 0; m < 2; ++m) {
            const std::string s = names[m];
            get_mlp(a, "encoder." + s, encoders_[m], enc_opt_[m]);
            get_mlp(a, "generator." + s, generators_[m], gen_opt_[m]);
            get_disc(a, "discriminator." + s, discriminators_[m], disc_opt_[m]);
        }
        const char* cnames[3] = {"visual", "tactile", "fused"};
        for (std::size_t m = 0; m < 3; ++m)
            get_adam(a, std::string("centers.") + cnames[m], clusters_.centers[m], center_opt_[m]);
        epoch_ = detail::parse_count("epoch", a.meta.at("epoch"));
        std::istringstream(a.meta.at("rng.batch")) >> batch_rng_;
        std::istringstream(a.meta.at("rng.noise")) >> noise_rng_;
        parse_counters(a.meta.at("counters"));
        const Matrix& lab = a.tensor("labels");
        labels_.assign(lab.data().begin(), lab.data().end());
        for (std::size_t m = 0; m < 3; ++m) z_[m] = a.tensor("latent." + std::string(cnames[m]));
        for (std::size_t m = 0; m < 2; ++m) fakes_[m] = a.tensor("fake." + std::string(names[m]));
        refresh_targets();
    }

private:
    static constexpr std::size_t idx(Modality m) noexcept { return static_cast<std::size_t>(m); }

public:
    /// Current encoder outputs for the batch with stored completions in the
    /// missing rows.
    std::array<Matrix, 2> current_latents(const Batch& b) const {
        std::array<Matrix, 2> z;
        for (std::size_t m = 0; m < 2; ++m) {
            z[m] = encoders_[m].forward(m == 0 ? b.visual : b.tactile);
            const auto& present = m == 0 ? b.visual_present : b.tactile_present;
            for (std::size_t r = 0; r < b.size(); ++r)
                if (!present[r])
                    std::copy(z_[m].row(b.indices[r]).begin(), z_[m].row(b.indices[r]).end(),
                              z[m].row(r).begin());
        }
        return z;
    }

private:
    /// G₁ (visual) is conditioned on tactile latents and G₂ on visual ones;
    /// a sample lacking the conditioning modality uses its own latent.
    Matrix condition_for(Modality target, const Batch& b, const std::array<Matrix, 2>& z) const {
        const std::size_t t = idx(target);
        const std::size_t o = 1 - t;
        const std::size_t primary = config_.same_modality_condition ? t : o;
        const std::size_t fallback = 1 - primary;
        const auto& primary_present = primary == 0 ? b.visual_present : b.tactile_present;
        Matrix cond = z[primary];
        for (std::size_t r = 0; r < b.size(); ++r) {
            if (primary_present[r]) continue;
            std::copy(z[fallback].row(r).begin(), z[fallback].row(r).end(), cond.row(r).begin());
        }
        return cond;
    }

    Matrix fuse_rows(const Matrix& z1, const Matrix& z2, std::span<const std::size_t> rows) const {
        if (config_.disable_gan) return fuse(z1, z2, std::nullopt, config_.fusion());
        const Matrix f1 = select_rows(fakes_[0], rows);
        const Matrix f2 = select_rows(fakes_[1], rows);
        return fuse(z1, z2, FakeLatents{f1, f2}, config_.fusion());
    }

    /// The initial fusion is the plain convex mix; later ones add the φ-weighted fakes.
    void refresh_latents(bool with_fakes = true) {
        const std::size_t n = mask_.size();
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), 0);
        const Batch everything = make_batch(all);
        for (std::size_t m = 0; m < 2; ++m) z_[m] = encoders_[m].forward(x_[m]);
        if (config_.disable_gan) {
            fakes_[0] = Matrix(n, config_.latent_dim);
            fakes_[1] = Matrix(n, config_.latent_dim);
            z_[2] = fuse(z_[0], z_[1], std::nullopt, config_.fusion());
            return;
        }
        const std::array<Matrix, 2> raw = {z_[0], z_[1]};
        for (std::size_t m = 0; m < 2; ++m) {
            fakes_[m] = cross_generate(generators_[m],
                                       condition_for(static_cast<Modality>(m), everything, raw),
                                       prior_, noise_rng_);
        }
        for (std::size_t m = 0; m < 2; ++m)
            for (std::size_t i = 0; i < n; ++i)
                if (!mask_.present(static_cast<Modality>(m), i))
                    std::copy(fakes_[m].row(i).begin(), fakes_[m].row(i).end(), z_[m].row(i).begin());
        z_[2] = with_fakes
                    ? fuse(z_[0], z_[1], FakeLatents{fakes_[0], fakes_[1]}, config_.fusion())
                    : fuse(z_[0], z_[1], std::nullopt, config_.fusion());
    }

    /// Modality targets use cluster frequencies over present rows only; a
    /// missing row carries its Q, which never enters a loss.
    void refresh_targets() {
        for (std::size_t m = 0; m < 2; ++m) {
            p_[m] = soft_assign(z_[m], clusters_.centers[m], config_.gamma);
            const auto rows = detail::present_rows(mask_.presence(static_cast<Modality>(m)));
            const Matrix p = target_distribution(select_rows(p_[m], rows));
            for (std::size_t r = 0; r < rows.size(); ++r)
                std::copy(p.row(r).begin(), p.row(r).end(), p_[m].row(rows[r]).begin());
        }
        p_[2] = target_distribution(soft_assign(z_[2], clusters_.centers[2], config_.gamma));
    }

    Matrix labels_matrix() const {
        Matrix l(labels_.size(), 1);
        for (std::size_t i = 0; i < labels_.size(); ++i) l(i, 0) = labels_[i];
        return l;
    }

    static std::string rng_text(const Rng& r) {
        std::ostringstream s;
        s << r;
        return s.str();
    }

    std::string counters_text() const {
        std::ostringstream s;
        s << counters_.encoder_updates << ' ' << counters_.generator_updates[0] << ' '
          << counters_.generator_updates[1] << ' ' << counters_.discriminator_updates[0] << ' '
          << counters_.discriminator_updates[1] << ' ' << counters_.batches << ' '
          << counters_.largest_batch;
        return s.str();
    }

    void parse_counters(const std::string& text) {
        std::istringstream s(text);
        s >> counters_.encoder_updates >> counters_.generator_updates[0] >>
            counters_.generator_updates[1] >> counters_.discriminator_updates[0] >>
            counters_.discriminator_updates[1] >> counters_.batches >> counters_.largest_batch;
        if (!s) throw ParseError("malformed counters record");
    }

    static void put_adam(Archive& a, const std::string& name, const Matrix& p, const AdamState& s) {
        a.tensors[name] = p;
        a.tensors[name + ".m"] = s.m;
        a.tensors[name + ".v"] = s.v;
        a.meta[name + ".step"] = std::to_string(s.step);
    }

    static void get_adam(const Archive& a, const std::string& name, Matrix& p, AdamState& s) {
        const Matrix& saved = a.tensor(name);
        if (!saved.same_shape(p)) {
            throw DimensionError("checkpoint tensor '" + name + "' has shape " +
                                 saved.shape_string() + ", expected " + p.shape_string());
        }
        p = saved;
        s.m = a.tensor(name + ".m");
        s.v = a.tensor(name + ".v");
        s.step = detail::parse_count(name + ".step", a.meta.at(name + ".step"));
    }

    static void put_dense(Archive& a, const std::string& name, const DenseLayer& l,
                          const DenseOptimizer& o) {
        put_adam(a, name + ".w", l.weights, o.weights);
        put_adam(a, name + ".b", Matrix(1, l.bias.size(), l.bias), o.bias);
    }

    static void get_dense(const Archive& a, const std::string& name, DenseLayer& l,
                          DenseOptimizer& o) {
        get_adam(a, name + ".w", l.weights, o.weights);
        Matrix b(1, l.bias.size(), l.bias);
        get_adam(a, name + ".b", b, o.bias);
        l.bias = b.data();
    }

    static void put_mlp(Archive& a, const std::string& name, const Mlp& net, const MlpOptimizer& o) {
        for (std::size_t i = 0; i < net.layers.size(); ++i)
            put_dense(a, name + ".layer" + std::to_string(i), net.layers[i], o.layers[i]);
    }

    static void get_mlp(const Archive& a, const std::string& name, Mlp& net, MlpOptimizer& o) {
        for (std::size_t i = 0; i < net.layers.size(); ++i)
            get_dense(a, name + ".layer" + std::to_string(i), net.layers[i], o.layers[i]);
    }

    static void put_disc(Archive& a, const std::string& name, const Discriminator& d,
                         const DiscriminatorOptimizer& o) {
        put_dense(a, name + ".hidden", d.hidden, o.hidden);
        put_adam(a, name + ".tensor", d.tensor, o.tensor);
        put_dense(a, name + ".output", d.output, o.output);
    }

    static void get_disc(const Archive& a, const std::string& name, Discriminator& d,
                         DiscriminatorOptimizer& o) {
        get_dense(a, name + ".hidden", d.hidden, o.hidden);
        get_adam(a, name + ".tensor", d.tensor, o.tensor);
        get_dense(a, name + ".output", d.output, o.output);
    }

    TrainConfig config_;
    MissingMask mask_;
    std::size_t k_;
    std::array<Matrix, 2> x_;
    NoisePrior prior_;

    std::array<Mlp, 2> encoders_;
    std::array<Mlp, 2> generators_;
    std::array<Discriminator, 2> discriminators_;
    std::array<MlpOptimizer, 2> enc_opt_;
    std::array<MlpOptimizer, 2> gen_opt_;
    std::array<DiscriminatorOptimizer, 2> disc_opt_;
    std::array<AdamState, 3> center_opt_;

    ClusterState clusters_;
    std::array<Matrix, 3> z_;      // visual, tactile (with completions), fused
    std::array<Matrix, 2> fakes_;  // generated visual, tactile for every sample
    std::array<Matrix, 3> p_;
    std::vector<int> labels_;

    Rng init_rng_;
    Rng batch_rng_;
    Rng noise_rng_;
    StepCounters counters_;
    std::size_t epoch_ = 0;
};

/// Callback invoked after every epoch; used for periodic checkpoints.
using EpochHook = std::function<void(const Trainer&, const EpochLosses&)>;

/// Continues `trainer` until max_iter epochs (early stop on label stability),
/// then predicts and scores against `truth` when it is non-empty.
inline TrainReport run(Trainer& trainer, std::span<const int> truth, const EpochHook& hook = {}) {
    const TrainConfig& config = trainer.config();
    TrainReport report;
    while (trainer.epoch() < config.max_iter) {
        const auto start = std::chrono::steady_clock::now();
        const auto losses = trainer.train_epoch();
        const auto stop = std::chrono::steady_clock::now();
        report.trace.push_back(losses);
        report.epoch_seconds.push_back(std::chrono::duration<double>(stop - start).count());
        if (hook) hook(trainer, losses);
        if (config.tol > 0.0 && losses.label_change < config.tol) {
            report.converged = true;
            break;
        }
    }
    report.epochs_run = report.trace.size();
    report.labels = trainer.predict();
    report.counters = trainer.counters();
    if (!truth.empty()) {
        report.acc = accuracy(truth, report.labels);
        report.nmi = nmi(truth, report.labels);
    }
    return report;
}

/// initialize → up to max_iter epochs → predict → metrics against `data.labels`.
inline TrainReport run(const PairedDataset& data, const MissingMask& mask, const TrainConfig& config,
                       const EpochHook& hook = {}) {
    Trainer trainer(data, mask, config);
    return run(trainer, data.labels, hook);
}

}  // namespace gpvtf
