#pragma once

// Clustering accuracy under optimal label matching, and normalized mutual
// information.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "gpvtf/numeric.hpp"

namespace gpvtf {

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// path with row/column potentials, O(k³)). Returns assignment[row] = column.
inline std::vector<std::size_t> hungarian(const Matrix& cost) {
    if (cost.rows() != cost.cols()) {
        throw DimensionError("hungarian requires a square cost matrix, got " +
                             cost.shape_string());
    }
    const std::size_t n = cost.rows();
    if (n == 0) return {};
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based with sentinel column 0.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = match[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) assignment[match[j] - 1] = j - 1;
    return assignment;
}

struct ContingencyTable {
    // counts[t][p]
    std::vector<std::vector<std::size_t>> counts;
    std::size_t n = 0;

    std::size_t k_true() const noexcept { return counts.size(); }
    std::size_t k_pred() const noexcept { return counts.empty() ? 0 : counts.front().size(); }
};

inline void check_label_pair(std::span<const int> truth, std::span<const int> pred) {
    if (truth.size() != pred.size()) {
        throw ParameterError("label vectors differ in length: " + std::to_string(truth.size()) +
                             " vs " + std::to_string(pred.size()));
    }
    const auto negative = [](int v) { return v < 0; };
    if (std::any_of(truth.begin(), truth.end(), negative) ||
        std::any_of(pred.begin(), pred.end(), negative)) {
        throw ParameterError("labels must be non-negative integers");
    }
}

inline ContingencyTable contingency(std::span<const int> truth, std::span<const int> pred) {
    check_label_pair(truth, pred);
    ContingencyTable t;
    t.n = truth.size();
    const int kt = truth.empty() ? 0 : *std::max_element(truth.begin(), truth.end()) + 1;
    const int kp = pred.empty() ? 0 : *std::max_element(pred.begin(), pred.end()) + 1;
    t.counts.assign(static_cast<std::size_t>(kt), std::vector<std::size_t>(kp, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) ++t.counts[truth[i]][pred[i]];
    return t;
}

inline double accuracy(std::span<const int> truth, std::span<const int> pred) {
    const ContingencyTable t = contingency(truth, pred);
    if (t.n == 0) throw ParameterError("accuracy of empty labelings is undefined");
    const std::size_t k = std::max(t.k_true(), t.k_pred());
    Matrix cost(k, k, 0.0);
    for (std::size_t a = 0; a < t.k_true(); ++a)
        for (std::size_t b = 0; b < t.k_pred(); ++b)
            cost(a, b) = -static_cast<double>(t.counts[a][b]);
    const auto assign = hungarian(cost);
    double matched = 0.0;
    for (std::size_t a = 0; a < k; ++a) matched -= cost(a, assign[a]);
    return matched / static_cast<double>(t.n);
}

/// I(T;P) / √(H(T)·H(P)), natural logs. Identical partitions give 1; when one
/// side has zero entropy and the partitions differ the result is 0.
inline double nmi(std::span<const int> truth, std::span<const int> pred) {
    const ContingencyTable t = contingency(truth, pred);
    if (t.n == 0) throw ParameterError("nmi of empty labelings is undefined");
    const double n = static_cast<double>(t.n);
    std::vector<double> row(t.k_true(), 0.0), col(t.k_pred(), 0.0);
    for (std::size_t a = 0; a < t.k_true(); ++a)
        for (std::size_t b = 0; b < t.k_pred(); ++b) {
            row[a] += static_cast<double>(t.counts[a][b]);
            col[b] += static_cast<double>(t.counts[a][b]);
        }
    const auto entropy = [n](const std::vector<double>& c) {
        double h = 0.0;
        for (double x : c)
            if (x > 0) h -= (x / n) * std::log(x / n);
        return h;
    };
    const double ht = entropy(row);
    const double hp = entropy(col);

    // Same partition up to relabeling: a one-to-one non-empty block structure.
    std::size_t nonzero = 0, used_rows = 0, used_cols = 0;
    for (std::size_t a = 0; a < t.k_true(); ++a)
        for (std::size_t b = 0; b < t.k_pred(); ++b)
            if (t.counts[a][b] > 0) ++nonzero;
    for (double x : row) used_rows += x > 0;
    for (double x : col) used_cols += x > 0;
    if (nonzero == used_rows && nonzero == used_cols) return 1.0;
    if (ht <= 0.0 || hp <= 0.0) return 0.0;

    double mi = 0.0;
    for (std::size_t a = 0; a < t.k_true(); ++a)
        for (std::size_t b = 0; b < t.k_pred(); ++b) {
            const double c = static_cast<double>(t.counts[a][b]);
            if (c > 0) mi += (c / n) * std::log(c * n / (row[a] * col[b]));
        }
    return std::clamp(mi / std::sqrt(ht * hp), 0.0, 1.0);
}

}  // namespace gpvtf
