#pragma once

// Clustering mathematics: k-means, Student's-t soft assignment, the sharpened
// target distribution, modality fusion and the fused KL self-training loss.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gpvtf/numeric.hpp"

namespace gpvtf {

class DegenerateClusterError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct KMeansResult {
    Matrix centers;
    std::vector<int> labels;
    std::vector<double> inertia_trace;  // inertia after each Lloyd iteration

    double inertia() const noexcept {
        return inertia_trace.empty() ? 0.0 : inertia_trace.back();
    }
};

namespace detail {

inline std::size_t nearest_center(std::span<const double> x, const Matrix& centers,
                                  double* dist = nullptr) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < centers.rows(); ++j) {
        const double d = squared_distance(x, centers.row(j));
        if (d < best_d) best_d = d, best = j;
    }
    if (dist) *dist = best_d;
    return best;
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeding. An empty cluster is re-seeded to
/// the point farthest from its current center.
inline KMeansResult kmeans_single(const Matrix& points, std::size_t k, std::size_t max_iter,
                                  std::uint64_t seed) {
    const std::size_t n = points.rows();
    if (k < 1) throw ParameterError("kmeans requires k >= 1");
    if (n < k) {
        throw ParameterError("kmeans requires n >= k (n=" + std::to_string(n) +
                             ", k=" + std::to_string(k) + ")");
    }
    Rng rng(seed);
    const std::size_t d = points.cols();
    KMeansResult res;
    res.centers = Matrix(k, d);

    // k-means++ seeding
    std::vector<double> closest(n, std::numeric_limits<double>::infinity());
    std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    std::copy(points.row(first).begin(), points.row(first).end(), res.centers.row(0).begin());
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], squared_distance(points.row(i), res.centers.row(c - 1)));
            total += closest[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick + 1 < n; ++pick) {
                u -= closest[pick];
                if (u <= 0.0 && closest[pick] > 0.0) break;
            }
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        std::copy(points.row(pick).begin(), points.row(pick).end(), res.centers.row(c).begin());
    }

    res.labels.assign(n, -1);
    for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iter, 1); ++iter) {
        bool changed = false;
        std::vector<double> dist(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int l = static_cast<int>(detail::nearest_center(points.row(i), res.centers, &dist[i]));
            changed |= l != res.labels[i];
            res.labels[i] = l;
        }
        std::vector<std::size_t> counts(k, 0);
        for (int l : res.labels) ++counts[l];
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            // Re-seed: steal the farthest point from a cluster that can spare it.
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[res.labels[i]] < 2) continue;
                if (far == n || dist[i] > dist[far]) far = i;
            }
            if (far == n) continue;
            --counts[res.labels[far]];
            res.labels[far] = static_cast<int>(j);
            counts[j] = 1;
            dist[far] = 0.0;
            changed = true;
        }
        Matrix next(k, d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            auto c = next.row(res.labels[i]);
            const auto p = points.row(i);
            for (std::size_t t = 0; t < d; ++t) c[t] += p[t];
        }
        for (std::size_t j = 0; j < k; ++j) {
            auto c = next.row(j);
            for (double& v : c) v /= static_cast<double>(counts[j]);
        }
        res.centers = std::move(next);
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += squared_distance(points.row(i), res.centers.row(res.labels[i]));
        res.inertia_trace.push_back(inertia);
        if (!changed && iter > 0) break;
    }
    return res;
}

/// Best of `restarts` k-means++/Lloyd runs by final inertia; restart r uses
/// seed + r.
inline KMeansResult kmeans(const Matrix& points, std::size_t k, std::size_t max_iter,
                           std::uint64_t seed, std::size_t restarts = 1) {
    if (restarts < 1) throw ParameterError("kmeans requires restarts >= 1");
    KMeansResult best = kmeans_single(points, k, max_iter, seed);
    for (std::size_t r = 1; r < restarts; ++r) {
        auto next = kmeans_single(points, k, max_iter, seed + r);
        if (next.inertia() < best.inertia()) best = std::move(next);
    }
    return best;
}

// ---------------------------------------------------------------- soft assignment

/// q_nj ∝ (1 + ‖z_n − μ_j‖²/γ)^(−(γ+1)/2), normalized over j. Computed in the
/// log domain so rows stay strictly positive for far-away points.
inline Matrix soft_assign(const Matrix& z, const Matrix& centers, double gamma = 1.0) {
    if (!(gamma > 0.0)) throw ParameterError("soft_assign requires gamma > 0");
    if (z.cols() != centers.cols()) {
        throw DimensionError("soft_assign shape mismatch: Z " + z.shape_string() +
                             " vs centers " + centers.shape_string());
    }
    const std::size_t k = centers.rows();
    const double expo = -(gamma + 1.0) / 2.0;
    Matrix q(z.rows(), k);
    std::vector<double> logt(k);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            logt[j] = expo * std::log1p(squared_distance(z.row(i), centers.row(j)) / gamma);
            mx = std::max(mx, logt[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += (q(i, j) = std::exp(logt[j] - mx));
        for (std::size_t j = 0; j < k; ++j) q(i, j) /= sum;
    }
    return q;
}

struct SoftAssignGrad {
    Matrix d_z;
    Matrix d_centers;
};

/// Pulls dL/dQ back to Z and the centers.
inline SoftAssignGrad soft_assign_backward(const Matrix& z, const Matrix& centers, double gamma,
                                           const Matrix& q, const Matrix& d_q) {
    if (!q.same_shape(d_q) || q.rows() != z.rows() || q.cols() != centers.rows()) {
        throw DimensionError("soft_assign_backward shape mismatch");
    }
    const std::size_t k = centers.rows(), d = z.cols();
    SoftAssignGrad g{Matrix(z.rows(), d), Matrix(k, d)};
    const double c = (gamma + 1.0) / gamma;
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < k; ++j) inner += q(i, j) * d_q(i, j);
        const auto zi = z.row(i);
        auto gz = g.d_z.row(i);
        for (std::size_t j = 0; j < k; ++j) {
            const double d_logt = q(i, j) * (d_q(i, j) - inner);
            if (d_logt == 0.0) continue;
            const auto mu = centers.row(j);
            const double w = -c * d_logt / (1.0 + squared_distance(zi, mu) / gamma);
            auto gm = g.d_centers.row(j);
            for (std::size_t t = 0; t < d; ++t) {
                const double diff = zi[t] - mu[t];
                gz[t] += w * diff;
                gm[t] -= w * diff;
            }
        }
    }
    return g;
}

/// p_nj = (q_nj²/f_j) / Σ_j' (q_nj'²/f_j') with cluster frequencies f_j = Σ_n q_nj.
inline Matrix target_distribution(const Matrix& q) {
    const std::size_t k = q.cols();
    std::vector<double> f(k, 0.0);
    for (std::size_t i = 0; i < q.rows(); ++i)
        for (std::size_t j = 0; j < k; ++j) f[j] += q(i, j);
    for (std::size_t j = 0; j < k; ++j) {
        if (!(f[j] > 0.0)) {
            throw DegenerateClusterError("cluster " + std::to_string(j) +
                                         " receives zero total soft assignment");
        }
    }
    Matrix p(q.rows(), k);
    for (std::size_t i = 0; i < q.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += (p(i, j) = q(i, j) * q(i, j) / f[j]);
        if (!(sum > 0.0)) {
            // All q entries underflowed to zero for this row; fall back to Q.
            for (std::size_t j = 0; j < k; ++j) p(i, j) = q(i, j);
            continue;
        }
        for (std::size_t j = 0; j < k; ++j) p(i, j) /= sum;
    }
    return p;
}

/// argmax per row, ties toward the lowest index.
inline std::vector<int> row_argmax(const Matrix& m) {
    std::vector<int> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < m.cols(); ++j)
            if (m(i, j) > m(i, best)) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

// ---------------------------------------------------------------- fusion

struct FusionWeights {
    double alpha = 0.2;
    double phi1 = 0.01;
    double phi2 = 0.01;
    double beta = 1.0;

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParameterError("alpha must lie in [0, 1]");
        if (!(phi1 >= 0.0) || !(phi2 >= 0.0)) throw ParameterError("phi weights must be >= 0");
        if (!(beta >= 0.0)) throw ParameterError("beta must be >= 0");
    }
};

struct FakeLatents {
    const Matrix& visual;
    const Matrix& tactile;
};

/// Z3 = (1−α)Z1 + αZ2, plus φ1·Z1_fake + φ2·Z2_fake when fakes are given.
inline Matrix fuse(const Matrix& z1, const Matrix& z2, std::optional<FakeLatents> fakes,
                   const FusionWeights& w) {
    w.validate();
    if (!z1.same_shape(z2)) {
        throw DimensionError("fuse shape mismatch: " + z1.shape_string() + " vs " +
                             z2.shape_string());
    }
    Matrix z3 = (1.0 - w.alpha) * z1 + w.alpha * z2;
    if (fakes) {
        if (!fakes->visual.same_shape(z1) || !fakes->tactile.same_shape(z1)) {
            throw DimensionError("fuse: fake latents must match " + z1.shape_string());
        }
        z3 += w.phi1 * fakes->visual;
        z3 += w.phi2 * fakes->tactile;
    }
    return z3;
}

// ---------------------------------------------------------------- KL losses

/// Σ_n w_n Σ_j p_nj log(p_nj/q_nj); empty weights mean all ones.
inline double kl_divergence(const Matrix& p, const Matrix& q,
                            std::span<const double> row_weights = {}) {
    if (!p.same_shape(q)) {
        throw DimensionError("kl_divergence shape mismatch: " + p.shape_string() + " vs " +
                             q.shape_string());
    }
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        const double w = row_weights.empty() ? 1.0 : row_weights[i];
        if (w == 0.0) continue;
        double row = 0.0;
        // p·log(p/q) − p + q is ≥ 0 term by term and sums to the same value
        // when both rows are distributions, so round-off cannot go negative.
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double pij = p(i, j), qij = q(i, j);
            const double t = pij > 0.0 ? pij * (std::log(pij) - std::log(qij)) - pij + qij : qij;
            row += std::max(t, 0.0);
        }
        total += w * row;
    }
    return total;
}

/// KL(P‖Q) + β·KL(P3‖Q3) on precomputed distributions.
inline double kl_loss(const Matrix& p, const Matrix& q, const Matrix& p3, const Matrix& q3,
                      double beta) {
    return kl_divergence(p, q) + beta * kl_divergence(p3, q3);
}

/// One KL term Σ_n w_n KL(P_n ‖ Q(Z_n; μ)) with P held fixed.
struct KlTerm {
    const Matrix& z;
    const Matrix& centers;
    const Matrix& p;
    std::span<const double> row_weights = {};
};

struct KlTermResult {
    double loss = 0.0;
    Matrix q;
    Matrix d_z;
    Matrix d_centers;
};

inline KlTermResult kl_term(const KlTerm& term, double gamma) {
    KlTermResult r;
    r.q = soft_assign(term.z, term.centers, gamma);
    if (!r.q.same_shape(term.p)) {
        throw DimensionError("kl target " + term.p.shape_string() + " does not match Q " +
                             r.q.shape_string());
    }
    r.loss = kl_divergence(term.p, r.q, term.row_weights);
    Matrix d_q(r.q.rows(), r.q.cols());
    for (std::size_t i = 0; i < r.q.rows(); ++i) {
        const double w = term.row_weights.empty() ? 1.0 : term.row_weights[i];
        for (std::size_t j = 0; j < r.q.cols(); ++j)
            d_q(i, j) = -w * term.p(i, j) / r.q(i, j);
    }
    auto g = soft_assign_backward(term.z, term.centers, gamma, r.q, d_q);
    r.d_z = std::move(g.d_z);
    r.d_centers = std::move(g.d_centers);
    return r;
}

struct FusedKlResult {
    double loss = 0.0;
    double modality_loss = 0.0;
    double fused_loss = 0.0;
    Matrix d_z;           // w.r.t. the modality latents
    Matrix d_centers;     // w.r.t. the modality centers
    Matrix d_z_fused;     // w.r.t. Z3 (already scaled by β)
};

/// L = KL(P‖Q) + β·KL(P3‖Q3) with gradients through the soft assignment. The
/// fused term's centers are not trained, so only its Z3 gradient is returned.
inline FusedKlResult kl_loss(const KlTerm& modality, const KlTerm& fused, double beta,
                             double gamma = 1.0) {
    if (!(beta >= 0.0)) throw ParameterError("beta must be >= 0");
    FusedKlResult out;
    auto m = kl_term(modality, gamma);
    out.modality_loss = m.loss;
    out.d_z = std::move(m.d_z);
    out.d_centers = std::move(m.d_centers);
    if (beta > 0.0) {
        auto f = kl_term(fused, gamma);
        out.fused_loss = f.loss;
        out.d_z_fused = std::move(f.d_z) * beta;
    } else {
        out.d_z_fused = Matrix(fused.z.rows(), fused.z.cols());
    }
    out.loss = out.modality_loss + beta * out.fused_loss;
    return out;
}

/// μ_j = Σ_n q_nj z_n / Σ_n q_nj.
inline Matrix weighted_centers(const Matrix& z, const Matrix& q) {
    if (z.rows() != q.rows()) throw DimensionError("weighted_centers row mismatch");
    Matrix c(q.cols(), z.cols());
    std::vector<double> mass(q.cols(), 0.0);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < q.cols(); ++j) {
            const double w = q(i, j);
            mass[j] += w;
            auto cj = c.row(j);
            const auto zi = z.row(i);
            for (std::size_t t = 0; t < cj.size(); ++t) cj[t] += w * zi[t];
        }
    for (std::size_t j = 0; j < q.cols(); ++j) {
        if (!(mass[j] > 0.0)) {
            throw DegenerateClusterError("cluster " + std::to_string(j) + " has zero mass");
        }
        for (double& v : c.row(j)) v /= mass[j];
    }
    return c;
}

/// Mean of the points whose soft assignment peaks at each cluster (argmax of
/// Q, ties to the lowest index). A cluster that wins no point keeps its
/// previous center.
inline Matrix argmax_centers(const Matrix& z, const Matrix& q, const Matrix& previous) {
    if (z.rows() != q.rows() || previous.rows() != q.cols() || previous.cols() != z.cols()) {
        throw DimensionError("argmax_centers shape mismatch");
    }
    const auto labels = row_argmax(q);
    Matrix c(q.cols(), z.cols());
    std::vector<std::size_t> count(q.cols(), 0);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        ++count[labels[i]];
        auto cj = c.row(labels[i]);
        const auto zi = z.row(i);
        for (std::size_t t = 0; t < cj.size(); ++t) cj[t] += zi[t];
    }
    for (std::size_t j = 0; j < q.cols(); ++j) {
        if (count[j] == 0) {
            std::copy(previous.row(j).begin(), previous.row(j).end(), c.row(j).begin());
            continue;
        }
        for (double& v : c.row(j)) v /= static_cast<double>(count[j]);
    }
    return c;
}

}  // namespace gpvtf
