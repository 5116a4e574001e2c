#include <gtest/gtest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "cflsim/errors.hpp"
#include "cflsim/objectives.hpp"
#include "cflsim/rng.hpp"

using namespace cflsim;

namespace {

Vector random_vector(int d, DerivedStream& rng, double sd = 1.0) {
    std::normal_distribution<double> n(0.0, sd);
    Vector v(d);
    for (int i = 0; i < d; ++i) v[i] = n(rng);
    return v;
}

SampleSet random_samples(std::size_t n, int d, DerivedStream& rng) {
    SampleSet s;
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t j = 0; j < n; ++j) {
        s.features.push_back(random_vector(d, rng));
        s.targets.push_back(g(rng));
    }
    return s;
}

// Mean squared residual evaluated directly from the samples.
double sample_loss(const SampleSet& s, const Vector& w) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
        const double r = s.features[j].dot(w) - s.targets[j];
        acc += r * r;
    }
    return acc / static_cast<double>(s.size());
}

template <class F>
Vector central_difference(F f, const Vector& w, double h) {
    Vector g(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        Vector p = w, m = w;
        p[i] += h;
        m[i] -= h;
        g[i] = (f(p) - f(m)) / (2 * h);
    }
    return g;
}

Eigen::VectorXd eigenvalues(const Matrix& A) {
    return Eigen::SelfAdjointEigenSolver<Matrix>(A, Eigen::EigenvaluesOnly).eigenvalues();
}

}  // namespace

TEST(BuildQuadratic, PinnedSpectrumLargeL) {
    const auto q = build_quadratic(10, 1.0, 20.0, 7);
    const auto ev = eigenvalues(q.A);
    EXPECT_NEAR(ev.minCoeff(), 1.0, 1e-9);
    EXPECT_NEAR(ev.maxCoeff(), 20.0, 1e-9);
    EXPECT_EQ(q.c, 0.0);
    EXPECT_LT((q.A - q.A.transpose()).norm(), 1e-12);
}

TEST(BuildQuadratic, DegenerateSpectrumIsMultipleOfIdentity) {
    const auto q = build_quadratic(2, 3.0, 3.0, 0);
    EXPECT_LT((q.A - 3.0 * Matrix::Identity(2, 2)).norm(), 1e-12);
}

TEST(BuildQuadratic, GeneralConvexHasZeroEigenvalue) {
    const auto q = build_quadratic(10, 0.0, 5.0, 7);
    EXPECT_NEAR(eigenvalues(q.A).minCoeff(), 0.0, 1e-9);
    // b is kept in range(A) so the optimum exists.
    EXPECT_NO_THROW(exact_optimum(q));
}

TEST(BuildQuadratic, SpectrumContainmentAcrossSeeds) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const double mu = static_cast<double>(seed % 3);
        const double L = mu + 1.0 + static_cast<double>(seed);
        const auto ev = eigenvalues(build_quadratic(6, mu, L, seed).A);
        EXPECT_GE(ev.minCoeff(), mu - 1e-9);
        EXPECT_LE(ev.maxCoeff(), L + 1e-9);
    }
}

TEST(BuildQuadratic, DeterministicPerSeed) {
    const auto a = build_quadratic(5, 1, 5, 42);
    const auto b = build_quadratic(5, 1, 5, 42);
    const auto c = build_quadratic(5, 1, 5, 43);
    EXPECT_EQ(a.A, b.A);
    EXPECT_EQ(a.b, b.b);
    EXPECT_NE(a.b, c.b);
}

TEST(BuildQuadratic, RejectsBadParameters) {
    EXPECT_THROW(build_quadratic(1, 1, 2, 0), ConfigError);
    EXPECT_THROW(build_quadratic(4, 3, 2, 0), ConfigError);
    EXPECT_THROW(build_quadratic(4, -1, 2, 0), ConfigError);
}

TEST(Gradient, Examples) {
    const auto id = make_quadratic(Matrix::Identity(2, 2), Vector::Zero(2));
    EXPECT_EQ(gradient(id, Vector::Zero(2)), Vector::Zero(2));
    const auto q = make_quadratic(Matrix::Identity(2, 2), Vector::Constant(2, 2.0));
    EXPECT_EQ(gradient(q, Vector::Constant(2, 1.0)), Vector::Constant(2, 4.0));
    EXPECT_THROW(gradient(q, Vector::Zero(3)), DimensionError);
}

TEST(Gradient, MatchesCentralDifferences) {
    DerivedStream rng(11);
    const auto q = build_quadratic(8, 1, 5, 3);
    for (int k = 0; k < 20; ++k) {
        const Vector w = random_vector(8, rng);
        const Vector fd = central_difference([&](const Vector& x) { return value(q, x); }, w, 1e-5);
        const Vector g = gradient(q, w);
        EXPECT_LE((g - fd).norm(), 1e-5 * std::max(1.0, g.norm()));
    }
}

TEST(Hessian, IsTwiceA) {
    const auto q = build_quadratic(5, 1, 5, 1);
    EXPECT_LT((hessian(q) - 2.0 * q.A).norm(), 1e-14);
}

TEST(LossMetric, Examples) {
    const auto q = make_quadratic(Matrix::Identity(2, 2), Vector::Zero(2));
    Vector w(2);
    w << 3, 4;
    EXPECT_DOUBLE_EQ(loss_metric(q, w), 10.0);

    DerivedStream rng(5);
    const auto r = build_quadratic(6, 0.5, 4, 9);
    const Vector x = random_vector(6, rng);
    EXPECT_NEAR(loss_metric(r, x), gradient(r, x).norm(), 1e-12);
    EXPECT_THROW(loss_metric(r, Vector::Zero(2)), DimensionError);
}

TEST(ExactOptimum, Examples) {
    Vector b(2);
    b << -2, -4;
    const Vector w = exact_optimum(make_quadratic(Matrix::Identity(2, 2), b));
    EXPECT_NEAR(w[0], 1.0, 1e-12);
    EXPECT_NEAR(w[1], 2.0, 1e-12);

    Matrix A = Matrix::Zero(2, 2);
    A(0, 0) = 1;
    A(1, 1) = 20;
    EXPECT_LT(exact_optimum(make_quadratic(A, Vector::Zero(2))).norm(), 1e-15);
}

TEST(ExactOptimum, ConsistentForRandomObjectives) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto q = build_quadratic(10, 0.1 + static_cast<double>(seed % 4), 20, seed);
        EXPECT_LE(loss_metric(q, exact_optimum(q)), 1e-9);
    }
}

TEST(ExactOptimum, SingularReturnsLeastNormOrThrows) {
    Matrix A = Matrix::Zero(2, 2);
    A(0, 0) = 1;
    Vector b(2);
    b << -2, 0;
    const Vector w = exact_optimum(make_quadratic(A, b));
    EXPECT_NEAR(w[0], 1.0, 1e-12);
    EXPECT_NEAR(w[1], 0.0, 1e-12);
    b[1] = 1e-3;
    EXPECT_THROW(exact_optimum(make_quadratic(A, b)), UnboundedError);
}

TEST(FitLeastSquares, SingleSample) {
    SampleSet s;
    Vector x(2);
    x << 1, 0;
    s.features.push_back(x);
    s.targets.push_back(0.0);
    const auto q = fit_least_squares(s);
    Matrix expect = Matrix::Zero(2, 2);
    expect(0, 0) = 1;
    EXPECT_LT((q.A - expect).norm(), 1e-15);
    EXPECT_LT(q.b.norm(), 1e-15);
}

TEST(FitLeastSquares, MatchesSampleLossAndFiniteDifferences) {
    DerivedStream rng(21);
    const auto s = random_samples(30, 4, rng);
    const auto q = fit_least_squares(s);
    for (int k = 0; k < 20; ++k) {
        const Vector w = random_vector(4, rng);
        EXPECT_NEAR(value(q, w), sample_loss(s, w), 1e-10);
        EXPECT_NEAR(value(Objective{s}, w), value(q, w), 1e-10);
        EXPECT_LE((gradient(Objective{s}, w) - gradient(q, w)).norm(), 1e-10);
        const Vector fd = central_difference([&](const Vector& v) { return sample_loss(s, v); }, w, 1e-6);
        EXPECT_LE((gradient(q, w) - fd).cwiseAbs().maxCoeff(), 1e-5);
    }
}

TEST(FitLeastSquares, DuplicationInvariant) {
    DerivedStream rng(4);
    const auto s = random_samples(12, 3, rng);
    SampleSet twice = s;
    twice.features.insert(twice.features.end(), s.features.begin(), s.features.end());
    twice.targets.insert(twice.targets.end(), s.targets.begin(), s.targets.end());
    const auto a = fit_least_squares(s);
    const auto b = fit_least_squares(twice);
    EXPECT_LT((a.A - b.A).norm(), 1e-12);
    EXPECT_LT((a.b - b.b).norm(), 1e-12);
    EXPECT_NEAR(a.c, b.c, 1e-12);
}

TEST(FitLeastSquares, RejectsEmpty) { EXPECT_THROW(fit_least_squares(SampleSet{}), ConfigError); }
