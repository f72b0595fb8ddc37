#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include <Eigen/Eigenvalues>

#include "gpvtf/clustering.hpp"
#include "gpvtf/data.hpp"
#include "gpvtf/metrics.hpp"

using namespace gpvtf;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("gpvtf_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                 "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

std::string toy_rows(int rows, int cols) {
    std::string s;
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) s += (j ? "," : "") + std::to_string(i * 0.5 + j);
        s += '\n';
    }
    return s;
}

std::string toy_labels(int rows, int k) {
    std::string s;
    for (int i = 0; i < rows; ++i) s += std::to_string(i % k) + "\n";
    return s;
}

}  // namespace

TEST(LoadDataset, EightSampleFixture) {
    TempDir dir;
    write_text(dir.file("v.csv"), toy_rows(8, 3));
    write_text(dir.file("t.csv"), toy_rows(8, 2));
    write_text(dir.file("y.csv"), toy_labels(8, 2));
    const PairedDataset ds = load_dataset(dir.file("v.csv"), dir.file("t.csv"), dir.file("y.csv"));
    EXPECT_EQ(ds.size(), 8u);
    EXPECT_EQ(ds.k, 2);
    EXPECT_EQ(ds.visual.cols(), 3u);
    EXPECT_EQ(ds.tactile.cols(), 2u);
    EXPECT_DOUBLE_EQ(ds.visual(3, 2), 3.5);
}

TEST(LoadDataset, RowCountMismatchIsAlignmentError) {
    TempDir dir;
    write_text(dir.file("v.csv"), toy_rows(8, 3));
    write_text(dir.file("t.csv"), toy_rows(7, 2));
    write_text(dir.file("y.csv"), toy_labels(8, 2));
    EXPECT_THROW(load_dataset(dir.file("v.csv"), dir.file("t.csv"), dir.file("y.csv")),
                 AlignmentError);
}

TEST(LoadDataset, LabelEqualToKIsLabelError) {
    TempDir dir;
    write_text(dir.file("v.csv"), toy_rows(4, 2));
    write_text(dir.file("t.csv"), toy_rows(4, 2));
    write_text(dir.file("y.csv"), "0\n1\n2\n0\n");
    EXPECT_THROW(load_dataset(dir.file("v.csv"), dir.file("t.csv"), dir.file("y.csv"), 2),
                 LabelError);
}

TEST(LoadDataset, NonNumericCellReportsRowAndColumn) {
    TempDir dir;
    write_text(dir.file("v.csv"), "1,2\n3,abc\n");
    try {
        (void)read_matrix_csv(dir.file("v.csv"));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("row 2"), std::string::npos);
        EXPECT_NE(what.find("column 2"), std::string::npos);
    }
}

TEST(LoadDataset, MissingFileIsIoError) {
    EXPECT_THROW(read_matrix_csv("/nonexistent/gpvtf/v.csv"), IoError);
}

TEST(LoadDataset, SaveLoadRoundTripsBitExactly) {
    TempDir dir;
    SynthParams p;
    p.per_cluster = 10;
    p.seed = 4;
    const PairedDataset ds = synth_dataset(p);
    save_dataset(ds, dir.file("v.csv"), dir.file("t.csv"), dir.file("y.csv"));
    const PairedDataset back =
        load_dataset(dir.file("v.csv"), dir.file("t.csv"), dir.file("y.csv"), ds.k);
    EXPECT_EQ(back.visual, ds.visual);
    EXPECT_EQ(back.tactile, ds.tactile);
    EXPECT_EQ(back.labels, ds.labels);
}

TEST(Synth, BalancedLabels) {
    const PairedDataset ds = synth_dataset({.k = 5, .per_cluster = 100});
    ASSERT_EQ(ds.size(), 500u);
    std::vector<int> counts(5, 0);
    for (int l : ds.labels) ++counts[l];
    for (int c : counts) EXPECT_EQ(c, 100);
    EXPECT_EQ(ds.visual.cols(), 32u);
    EXPECT_EQ(ds.tactile.cols(), 24u);
}

TEST(Synth, WellSeparatedClustersAreRecoveredByKMeans) {
    SynthParams p;
    p.separation = 10.0;
    p.modality_noise = 0.01;
    p.seed = 12;
    const PairedDataset ds = synth_dataset(p);
    for (Modality m : {Modality::visual, Modality::tactile}) {
        const KMeansResult km = kmeans(ds.features(m), p.k, 100, 1, 5);
        EXPECT_GT(accuracy(ds.labels, km.labels), 0.95) << modality_name(m);
    }
}

TEST(Synth, SameSeedIsBitIdentical) {
    SynthParams p;
    p.seed = 77;
    const PairedDataset a = synth_dataset(p), b = synth_dataset(p);
    EXPECT_EQ(a.visual, b.visual);
    EXPECT_EQ(a.tactile, b.tactile);
    EXPECT_EQ(a.labels, b.labels);
}

TEST(Synth, InvalidParametersThrow) {
    EXPECT_THROW(synth_dataset({.k = 0}), ParameterError);
    EXPECT_THROW(synth_dataset({.separation = 0.0}), ParameterError);
    EXPECT_THROW(synth_dataset({.latent_dim = 4, .view_rank = 5}), ParameterError);
}

TEST(Synth, ReducedViewRankLimitsModalityRank) {
    SynthParams p;
    p.view_rank = 2;
    p.modality_noise = 0.0;
    const PairedDataset ds = synth_dataset(p);
    // every centered visual row lies in a 2-D subspace: Gram matrix rank 2
    Matrix x = ds.visual;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, j);
        mean /= static_cast<double>(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) x(i, j) -= mean;
    }
    const Matrix gram = matmul_tn(x, x);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> g(
        gram.data().data(), static_cast<Eigen::Index>(gram.rows()),
        static_cast<Eigen::Index>(gram.cols()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g);
    const auto ev = solver.eigenvalues();
    EXPECT_GT(ev(ev.size() - 2), 1e-6 * ev(ev.size() - 1));
    EXPECT_LT(ev(ev.size() - 3), 1e-9 * ev(ev.size() - 1));
}

TEST(MakeMask, ZeroRateKeepsEverything) {
    const MissingMask m = make_mask(50, 0.0, 1);
    EXPECT_EQ(m.masked_slots(), 0u);
}

TEST(MakeMask, ExactSlotCountAndNoFullyMaskedSample) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const MissingMask m = make_mask(100, 0.1, seed);
        EXPECT_EQ(m.masked_slots(), 20u);
        for (std::size_t i = 0; i < m.size(); ++i)
            EXPECT_TRUE(m.visual_present[i] || m.tactile_present[i]);
    }
    EXPECT_EQ(make_mask(100, 0.5, 3).masked_slots(), 100u);
    EXPECT_EQ(make_mask(101, 0.3, 3).masked_slots(), 60u);
}

TEST(MakeMask, RateOutsideRangeIsParameterError) {
    EXPECT_THROW(make_mask(100, 0.6, 0), ParameterError);
    EXPECT_THROW(make_mask(100, -0.1, 0), ParameterError);
}

TEST(MakeMask, LabelBlindChiSquare) {
    // masked slots per class, pooled over seeds, against a uniform expectation
    const int k = 5, per = 40, seeds = 200;
    std::vector<double> masked(k, 0.0);
    for (int s = 0; s < seeds; ++s) {
        const MissingMask m = make_mask(static_cast<std::size_t>(k * per), 0.3, s);
        for (std::size_t i = 0; i < m.size(); ++i)
            masked[i % k] += !m.visual_present[i] + !m.tactile_present[i];
    }
    double total = 0.0;
    for (double c : masked) total += c;
    double chi2 = 0.0;
    for (double c : masked) chi2 += (c - total / k) * (c - total / k) / (total / k);
    // 4 degrees of freedom, 0.999 quantile
    EXPECT_LT(chi2, 18.467);
}

TEST(MakeMask, SaveLoadRoundTrip) {
    TempDir dir;
    const MissingMask m = make_mask(30, 0.2, 8);
    save_mask(dir.file("mask.csv"), m);
    std::ifstream in(dir.file("mask.csv"));
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "sample_index,visual_present,tactile_present");
    const MissingMask back = load_mask(dir.file("mask.csv"), 0.2);
    EXPECT_EQ(back.visual_present, m.visual_present);
    EXPECT_EQ(back.tactile_present, m.tactile_present);
}

TEST(Standardize, PresentRowsAreZScoredAbsentRowsZero) {
    const Matrix x{{1.0}, {3.0}, {100.0}, {5.0}};
    const Matrix z = standardize(x, {true, true, false, true});
    // mean 3, population sd sqrt(8/3)
    const double sd = std::sqrt(8.0 / 3.0);
    EXPECT_NEAR(z(0, 0), -2.0 / sd, 1e-12);
    EXPECT_NEAR(z(1, 0), 0.0, 1e-12);
    EXPECT_EQ(z(2, 0), 0.0);
    EXPECT_NEAR(z(3, 0), 2.0 / sd, 1e-12);
}

TEST(Batches, SizesFollowArithmetic) {
    SynthParams p;
    p.k = 2;
    p.per_cluster = 65;
    const PairedDataset ds = synth_dataset(p);
    const auto bs = batches(ds, MissingMask::complete(130), 64, 1);
    ASSERT_EQ(bs.size(), 3u);
    EXPECT_EQ(bs[0].size(), 64u);
    EXPECT_EQ(bs[1].size(), 64u);
    EXPECT_EQ(bs[2].size(), 2u);
}

TEST(Batches, PartitionEverySampleOnce) {
    SynthParams p;
    p.k = 3;
    p.per_cluster = 43;
    const PairedDataset ds = synth_dataset(p);
    const MissingMask mask = make_mask(ds.size(), 0.2, 2);
    std::multiset<std::size_t> seen;
    for (const Batch& b : batches(ds, mask, 16, 5)) {
        for (std::size_t r = 0; r < b.size(); ++r) {
            const std::size_t i = b.indices[r];
            seen.insert(i);
            EXPECT_EQ(b.visual_present[r], mask.visual_present[i]);
            EXPECT_EQ(b.visual(r, 0), ds.visual(i, 0));
        }
    }
    ASSERT_EQ(seen.size(), ds.size());
    std::size_t expect = 0;
    for (std::size_t i : seen) EXPECT_EQ(i, expect++);
}

TEST(Batches, SameSeedSameOrder) {
    const PairedDataset ds = synth_dataset({.k = 2, .per_cluster = 20});
    const auto a = batches(ds, MissingMask::complete(40), 8, 9);
    const auto b = batches(ds, MissingMask::complete(40), 8, 9);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].indices, b[i].indices);
}

TEST(Batches, ZeroBatchSizeIsParameterError) {
    const PairedDataset ds = synth_dataset({.k = 2, .per_cluster = 5});
    EXPECT_THROW(batches(ds, MissingMask::complete(10), 0, 1), ParameterError);
}
