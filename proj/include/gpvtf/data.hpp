#pragma once

// Paired visual/tactile feature datasets: CSV ingestion, a synthetic
// generator, missing-slot masks and shuffled mini-batches.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gpvtf/numeric.hpp"

namespace gpvtf {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AlignmentError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LabelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Modality : std::size_t { visual = 0, tactile = 1 };

inline constexpr Modality other(Modality m) noexcept {
    return m == Modality::visual ? Modality::tactile : Modality::visual;
}

inline const char* modality_name(Modality m) noexcept {
    return m == Modality::visual ? "visual" : "tactile";
}

struct PairedDataset {
    Matrix visual;   // n×d1
    Matrix tactile;  // n×d2
    std::vector<int> labels;
    int k = 0;

    std::size_t size() const noexcept { return labels.size(); }
    const Matrix& features(Modality m) const noexcept {
        return m == Modality::visual ? visual : tactile;
    }

    void validate() const {
        if (visual.rows() != tactile.rows()) {
            throw AlignmentError("visual has " + std::to_string(visual.rows()) +
                                 " rows but tactile has " + std::to_string(tactile.rows()));
        }
        if (labels.size() != visual.rows()) {
            throw AlignmentError("labels have " + std::to_string(labels.size()) +
                                 " rows but features have " + std::to_string(visual.rows()));
        }
        if (k < 1) throw LabelError("cluster count k must be >= 1");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0 || labels[i] >= k) {
                throw LabelError("label " + std::to_string(labels[i]) + " at row " +
                                 std::to_string(i + 1) + " outside 0.." + std::to_string(k - 1));
            }
        }
    }
};

// ---------------------------------------------------------------- CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view cell, const std::string& where) {
    cell = trim(cell);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric cell '" + std::string(cell) + "' at " + where);
    }
    return v;
}

inline int parse_int(std::string_view cell, const std::string& where) {
    cell = trim(cell);
    int v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw ParseError("non-integer cell '" + std::string(cell) + "' at " + where);
    }
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

}  // namespace detail

/// Headerless numeric CSV, one sample per row.
inline Matrix read_matrix_csv(const std::string& path) {
    auto in = detail::open_in(path);
    std::vector<double> values;
    std::size_t cols = 0, rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        std::size_t c = 0;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            const std::string where = path + " row " + std::to_string(rows + 1) + " column " +
                                      std::to_string(c + 1);
            values.push_back(detail::parse_double(rest.substr(0, comma), where));
            ++c;
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (rows == 0) {
            cols = c;
        } else if (c != cols) {
            throw ParseError(path + " row " + std::to_string(rows + 1) + " has " +
                             std::to_string(c) + " columns, expected " + std::to_string(cols));
        }
        ++rows;
    }
    return Matrix(rows, cols, std::move(values));
}

inline void write_matrix_csv(const std::string& path, const Matrix& m) {
    auto out = detail::open_out(path);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << detail::format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::vector<int> read_labels_csv(const std::string& path) {
    auto in = detail::open_in(path);
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        labels.push_back(
            detail::parse_int(line, path + " row " + std::to_string(labels.size() + 1)));
    }
    return labels;
}

inline void write_labels_csv(const std::string& path, std::span<const int> labels) {
    auto out = detail::open_out(path);
    for (int l : labels) out << l << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

/// k defaults to max(label) + 1.
inline PairedDataset load_dataset(const std::string& visual_path, const std::string& tactile_path,
                                  const std::string& labels_path,
                                  std::optional<int> k = std::nullopt) {
    PairedDataset ds;
    ds.visual = read_matrix_csv(visual_path);
    ds.tactile = read_matrix_csv(tactile_path);
    ds.labels = read_labels_csv(labels_path);
    if (ds.labels.empty()) throw ParseError("labels file '" + labels_path + "' is empty");
    ds.k = k.value_or(*std::max_element(ds.labels.begin(), ds.labels.end()) + 1);
    ds.validate();
    return ds;
}

inline void save_dataset(const PairedDataset& ds, const std::string& visual_path,
                         const std::string& tactile_path, const std::string& labels_path) {
    write_matrix_csv(visual_path, ds.visual);
    write_matrix_csv(tactile_path, ds.tactile);
    write_labels_csv(labels_path, ds.labels);
}

// ---------------------------------------------------------------- synthesis

struct SynthParams {
    int k = 5;
    int per_cluster = 100;
    int d1 = 32;
    int d2 = 24;
    double separation = 1.0;
    double modality_noise = 1.0;
    int latent_dim = 8;
    int view_rank = 0;  // rank of each modality's map; 0 means latent_dim
    std::uint64_t seed = 0;
};

/// Cluster means μ_c ~ N(0, separation²·I) in a latent space; each sample's
/// shared code is μ_c + N(0, I). Each modality applies its own fixed random
/// linear map A_m plus N(0, modality_noise²) feature noise. With view_rank
/// below latent_dim, A_m factors through a random view_rank-dimensional
/// subspace, so each modality observes only part of the cluster structure.
inline PairedDataset synth_dataset(const SynthParams& p) {
    if (p.k < 1 || p.per_cluster < 1 || p.d1 < 1 || p.d2 < 1 || p.latent_dim < 1) {
        throw ParameterError("synth_dataset counts must all be >= 1");
    }
    if (p.view_rank < 0 || p.view_rank > p.latent_dim) {
        throw ParameterError("synth_dataset view_rank must lie in [0, latent_dim]");
    }
    if (!(p.separation > 0.0)) throw ParameterError("synth_dataset separation must be > 0");
    if (!(p.modality_noise >= 0.0)) {
        throw ParameterError("synth_dataset modality_noise must be >= 0");
    }
    Rng rng(p.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t r = static_cast<std::size_t>(p.latent_dim);
    const std::size_t n = static_cast<std::size_t>(p.k) * static_cast<std::size_t>(p.per_cluster);

    Matrix means(p.k, r);
    for (double& v : means.data()) v = p.separation * normal(rng);
    const std::size_t q = p.view_rank == 0 ? r : static_cast<std::size_t>(p.view_rank);
    auto random_map = [&](int d) {
        Matrix a(r, static_cast<std::size_t>(d));
        const double scale = 1.0 / std::sqrt(static_cast<double>(r));
        for (double& v : a.data()) v = scale * normal(rng);
        if (q == r) return a;
        Matrix basis(r, q);
        for (double& v : basis.data()) v = normal(rng) / std::sqrt(static_cast<double>(q));
        return matmul(matmul(basis, transpose(basis)), a);
    };
    const Matrix a1 = random_map(p.d1);
    const Matrix a2 = random_map(p.d2);

    PairedDataset ds;
    ds.k = p.k;
    Matrix codes(n, r);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(i / static_cast<std::size_t>(p.per_cluster));
        ds.labels[i] = c;
        for (std::size_t j = 0; j < r; ++j) codes(i, j) = means(c, j) + normal(rng);
    }
    ds.visual = matmul(codes, a1);
    for (double& v : ds.visual.data()) v += p.modality_noise * normal(rng);
    ds.tactile = matmul(codes, a2);
    for (double& v : ds.tactile.data()) v += p.modality_noise * normal(rng);
    return ds;
}

// ---------------------------------------------------------------- masks

struct MissingMask {
    std::vector<bool> visual_present;
    std::vector<bool> tactile_present;
    double missing_rate = 0.0;

    std::size_t size() const noexcept { return visual_present.size(); }
    bool present(Modality m, std::size_t i) const noexcept {
        return m == Modality::visual ? visual_present[i] : tactile_present[i];
    }
    const std::vector<bool>& presence(Modality m) const noexcept {
        return m == Modality::visual ? visual_present : tactile_present;
    }
    std::size_t masked_slots() const noexcept {
        std::size_t c = 0;
        for (std::size_t i = 0; i < size(); ++i) c += !visual_present[i] + !tactile_present[i];
        return c;
    }

    static MissingMask complete(std::size_t n) {
        return {std::vector<bool>(n, true), std::vector<bool>(n, true), 0.0};
    }
};

/// Masks exactly ⌊missing_rate·2n⌋ (sample, modality) slots. The masked slots
/// fall on distinct samples, so each sample keeps at least one modality; every
/// valid slot set of that size is equally likely.
inline MissingMask make_mask(std::size_t n, double missing_rate, std::uint64_t seed) {
    if (!(missing_rate >= 0.0 && missing_rate <= 0.5)) {
        throw ParameterError("missing_rate must lie in [0, 0.5], got " +
                             detail::format_double(missing_rate));
    }
    MissingMask mask = MissingMask::complete(n);
    mask.missing_rate = missing_rate;
    const auto slots = static_cast<std::size_t>(
        std::floor(missing_rate * 2.0 * static_cast<double>(n) + 1e-9));
    Rng rng(seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t s = 0; s < slots; ++s) {
        if (coin(rng)) {
            mask.visual_present[order[s]] = false;
        } else {
            mask.tactile_present[order[s]] = false;
        }
    }
    return mask;
}

inline void save_mask(const std::string& path, const MissingMask& mask) {
    auto out = detail::open_out(path);
    out << "sample_index,visual_present,tactile_present\n";
    for (std::size_t i = 0; i < mask.size(); ++i) {
        out << i << ',' << int(mask.visual_present[i]) << ',' << int(mask.tactile_present[i])
            << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline MissingMask load_mask(const std::string& path, double missing_rate = 0.0) {
    auto in = detail::open_in(path);
    std::string line;
    MissingMask mask;
    mask.missing_rate = missing_rate;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (row == 1 || detail::trim(line).empty()) continue;
        std::vector<int> cells;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            cells.push_back(detail::parse_int(rest.substr(0, comma),
                                              path + " row " + std::to_string(row)));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (cells.size() != 3 || cells[0] != static_cast<int>(mask.size())) {
            throw ParseError(path + " row " + std::to_string(row) + " is malformed");
        }
        if (!cells[1] && !cells[2]) {
            throw ParseError(path + " row " + std::to_string(row) +
                             " masks both modalities of one sample");
        }
        mask.visual_present.push_back(cells[1] != 0);
        mask.tactile_present.push_back(cells[2] != 0);
    }
    return mask;
}

/// Column z-scores using statistics over present rows only; absent rows are
/// left at 0, the column mean.
inline Matrix standardize(const Matrix& x, const std::vector<bool>& present) {
    if (present.size() != x.rows()) throw DimensionError("presence vector length mismatch");
    Matrix out(x.rows(), x.cols(), 0.0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double sum = 0.0, count = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i)
            if (present[i]) sum += x(i, j), count += 1.0;
        if (count == 0.0) continue;
        const double mean = sum / count;
        double var = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i)
            if (present[i]) var += (x(i, j) - mean) * (x(i, j) - mean);
        const double sd = std::sqrt(var / count);
        const double scale = sd > 1e-12 ? 1.0 / sd : 1.0;
        for (std::size_t i = 0; i < x.rows(); ++i)
            if (present[i]) out(i, j) = (x(i, j) - mean) * scale;
    }
    return out;
}

// ---------------------------------------------------------------- batches

struct Batch {
    std::vector<std::size_t> indices;
    Matrix visual;
    Matrix tactile;
    std::vector<bool> visual_present;
    std::vector<bool> tactile_present;

    std::size_t size() const noexcept { return indices.size(); }
};

/// One shuffled epoch of batches over `features` (already standardized) that
/// covers every sample exactly once. Only the final batch may be short.
inline std::vector<Batch> batches(const Matrix& visual, const Matrix& tactile,
                                  const MissingMask& mask, std::size_t batch_size, Rng& rng) {
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    const std::size_t n = visual.rows();
    if (tactile.rows() != n || mask.size() != n) {
        throw AlignmentError("batches: features and mask disagree on sample count");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Batch> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        Batch b;
        b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
        b.visual = select_rows(visual, b.indices);
        b.tactile = select_rows(tactile, b.indices);
        for (std::size_t i : b.indices) {
            b.visual_present.push_back(mask.visual_present[i]);
            b.tactile_present.push_back(mask.tactile_present[i]);
        }
        out.push_back(std::move(b));
    }
    return out;
}

inline std::vector<Batch> batches(const PairedDataset& ds, const MissingMask& mask,
                                  std::size_t batch_size, std::uint64_t seed) {
    Rng rng(seed);
    return batches(ds.visual, ds.tactile, mask, batch_size, rng);
}

}  // namespace gpvtf
