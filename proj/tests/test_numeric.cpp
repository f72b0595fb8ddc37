#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "gpvtf/numeric.hpp"

using namespace gpvtf;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(r, c);
    for (double& v : m.data()) v = normal(rng);
    return m;
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

// Central differences of a scalar function of one matrix argument.
Matrix numeric_gradient(Matrix& x, const std::function<double()>& f, double h = 1e-4) {
    Matrix g(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + h;
        const double up = f();
        x.data()[i] = saved - h;
        const double down = f();
        x.data()[i] = saved;
        g.data()[i] = (up - down) / (2.0 * h);
    }
    return g;
}

double weighted_sum(const Matrix& m, const Matrix& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i] * w.data()[i];
    return s;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    const Matrix a{{1, 2, 3}, {4, 5, 6}};
    EXPECT_EQ(matmul(Matrix::identity(2), a), a);
}

TEST(Matmul, HandEvaluatedProduct) {
    const Matrix out = matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{0}, {1}});
    ASSERT_EQ(out.rows(), 2u);
    ASSERT_EQ(out.cols(), 1u);
    EXPECT_DOUBLE_EQ(out(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(out(1, 0), 4.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    const Matrix a(2, 3), b(2, 3);
    try {
        (void)matmul(a, b);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        EXPECT_NE(std::string(e.what()).find("2x3"), std::string::npos);
    }
}

TEST(Matmul, TransposedVariantsAgreeWithExplicitTranspose) {
    Rng rng(3);
    const Matrix a = random_matrix(4, 3, rng), b = random_matrix(4, 5, rng);
    const Matrix c = random_matrix(6, 3, rng);
    const Matrix tn = matmul_tn(a, b), ref_tn = matmul(transpose(a), b);
    const Matrix nt = matmul_nt(a, c), ref_nt = matmul(a, transpose(c));
    for (std::size_t i = 0; i < tn.size(); ++i) EXPECT_NEAR(tn.data()[i], ref_tn.data()[i], 1e-12);
    for (std::size_t i = 0; i < nt.size(); ++i) EXPECT_NEAR(nt.data()[i], ref_nt.data()[i], 1e-12);
}

TEST(Xavier, EntriesWithinGlorotBound) {
    Rng rng(1);
    const Matrix w = xavier_init(3, 3, rng);
    for (double v : w.data()) {
        EXPECT_GE(v, -1.0);
        EXPECT_LE(v, 1.0);
    }
}

TEST(Xavier, SameSeedSameMatrix) {
    Rng a(42), b(42);
    EXPECT_EQ(xavier_init(7, 5, a), xavier_init(7, 5, b));
}

TEST(Xavier, EmpiricalMeanNearZero) {
    Rng rng(9);
    const Matrix w = xavier_init(100, 100, rng);
    double sum = 0.0;
    for (double v : w.data()) sum += v;
    EXPECT_LT(std::abs(sum / static_cast<double>(w.size())), 0.02);
}

TEST(Xavier, ZeroFanIsParameterError) {
    Rng rng(0);
    EXPECT_THROW(xavier_init(0, 4, rng), ParameterError);
    EXPECT_THROW(xavier_init(4, 0, rng), ParameterError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Matrix p(1, 1, 0.5);
    AdamState s(p, 1e-4);
    adam_step(p, Matrix(1, 1, 1.0), s);
    // m̂ = v̂ = 1, so the step is lr / (1 + ε)
    EXPECT_NEAR(p(0, 0), 0.5 - 1e-4 / (1.0 + 1e-8), 1e-15);
    EXPECT_EQ(s.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    Matrix p{{1.0, -2.0}, {3.0, 0.25}};
    const Matrix before = p;
    AdamState s(p, 1e-3);
    adam_step(p, Matrix(2, 2), s);
    EXPECT_EQ(p, before);
}

TEST(Adam, RepeatedPositiveGradientDecreasesMonotonically) {
    Matrix p(1, 1, 0.0);
    AdamState s(p, 1e-4);
    adam_step(p, Matrix(1, 1, 1.0), s);
    const double after_one = p(0, 0);
    adam_step(p, Matrix(1, 1, 1.0), s);
    EXPECT_LT(after_one, 0.0);
    EXPECT_LT(p(0, 0), after_one);
    EXPECT_EQ(s.step, 2u);
}

TEST(Adam, ShapeMismatchIsDimensionError) {
    Matrix p(2, 2);
    AdamState s(p, 1e-3);
    EXPECT_THROW(adam_step(p, Matrix(2, 3), s), DimensionError);
}

TEST(DenseForward, ZeroLayerWithReluIsZero) {
    const Matrix out = dense_forward(Matrix{{1, -2, 3}}, Matrix(3, 4), std::vector<double>(4, 0.0),
                                     Activation::relu);
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(DenseForward, SigmoidStaysInUnitInterval) {
    Rng rng(5);
    // moderate pre-activations stay strictly inside; huge ones saturate in
    // double precision but never leave [0, 1]
    for (double scale : {2.0, 500.0}) {
        const Matrix x = random_matrix(10, 4, rng, scale);
        const Matrix out = dense_forward(x, random_matrix(4, 3, rng), std::vector<double>(3, 0.0),
                                         Activation::sigmoid);
        for (double v : out.data()) {
            if (scale < 10.0) {
                EXPECT_GT(v, 0.0);
                EXPECT_LT(v, 1.0);
            } else {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
            }
        }
    }
}

TEST(DenseForward, LinearIdentityReturnsInput) {
    const Matrix x{{1.5, -2.0}, {0.0, 4.0}};
    EXPECT_EQ(dense_forward(x, Matrix::identity(2), std::vector<double>(2, 0.0), Activation::linear), x);
}

TEST(DenseForward, ShapeMismatchIsDimensionError) {
    EXPECT_THROW(dense_forward(Matrix(2, 3), Matrix(4, 2), std::vector<double>(2, 0.0),
                               Activation::linear),
                 DimensionError);
}

class DenseGradient : public ::testing::TestWithParam<Activation> {};

TEST_P(DenseGradient, MatchesCentralDifferences) {
    Rng rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        Matrix x = random_matrix(4, 6, rng);
        Matrix w = random_matrix(6, 5, rng);
        Matrix b = random_matrix(1, 5, rng);
        const Matrix probe = random_matrix(4, 5, rng);
        auto loss = [&] {
            return weighted_sum(dense_forward(x, w, b.row(0), GetParam()), probe);
        };
        const DenseBackward back = dense_backward(x, w, b.row(0), GetParam(), probe);
        const Matrix gw = numeric_gradient(w, loss);
        const Matrix gx = numeric_gradient(x, loss);
        const Matrix gb = numeric_gradient(b, loss);
        for (std::size_t i = 0; i < gw.size(); ++i)
            EXPECT_LT(relative_error(back.grads.weights.data()[i], gw.data()[i]), 1e-5);
        for (std::size_t i = 0; i < gx.size(); ++i)
            EXPECT_LT(relative_error(back.input_grad.data()[i], gx.data()[i]), 1e-5);
        for (std::size_t i = 0; i < gb.size(); ++i)
            EXPECT_LT(relative_error(back.grads.bias[i], gb.data()[i]), 1e-5);
    }
}

INSTANTIATE_TEST_SUITE_P(Activations, DenseGradient,
                         ::testing::Values(Activation::relu, Activation::sigmoid,
                                           Activation::linear));

TEST(DenseBackward, ZeroUpstreamGivesZeroGradients) {
    Rng rng(2);
    const Matrix x = random_matrix(3, 4, rng), w = random_matrix(4, 2, rng);
    const DenseBackward back =
        dense_backward(x, w, std::vector<double>(2, 0.1), Activation::sigmoid, Matrix(3, 2));
    for (double v : back.grads.weights.data()) EXPECT_EQ(v, 0.0);
    for (double v : back.grads.bias) EXPECT_EQ(v, 0.0);
    for (double v : back.input_grad.data()) EXPECT_EQ(v, 0.0);
}

TEST(DenseBackward, LinearSingleUnitInputGradIsUpstreamTimesWeightsTransposed) {
    const Matrix x{{1.0, 2.0, 3.0}};
    const Matrix w{{0.5}, {-1.0}, {2.0}};
    const Matrix up{{3.0}};
    const DenseBackward back = dense_backward(x, w, std::vector<double>{0.0}, Activation::linear, up);
    EXPECT_DOUBLE_EQ(back.input_grad(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(back.input_grad(0, 1), -3.0);
    EXPECT_DOUBLE_EQ(back.input_grad(0, 2), 6.0);
}
