#include "cflsim/objectives.hpp"

#include <cmath>
#include <random>
#include <string>

#include "cflsim/errors.hpp"
#include "cflsim/rng.hpp"

namespace cflsim {
namespace {

void check_dim(Eigen::Index expected, const Vector& w) {
    if (w.size() != expected) {
        throw DimensionError("expected dimension " + std::to_string(expected) + ", got " +
                             std::to_string(w.size()));
    }
}

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

// Canonicalizing on every call keeps the two evaluation paths literally the
// same arithmetic for least squares.
QuadraticObjective as_quadratic(const Objective& obj) {
    return std::visit(overloaded{[](const QuadraticObjective& q) { return q; },
                                 [](const SampleSet& s) { return fit_least_squares(s); }},
                      obj);
}

}  // namespace

QuadraticObjective build_quadratic(int d, double mu, double L, std::uint64_t seed) {
    if (d < 2) throw ConfigError("build_quadratic: d must be >= 2, got " + std::to_string(d));
    if (mu < 0.0) throw ConfigError("build_quadratic: mu must be >= 0");
    if (mu > L) throw ConfigError("build_quadratic: mu must not exceed L");

    DerivedStream rng(seed, StreamTag::Objective);
    std::uniform_real_distribution<double> unif(mu, L);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Vector lambda(d);
    for (int i = 0; i < d; ++i) lambda(i) = unif(rng);
    lambda(0) = mu;
    lambda(d - 1) = L;

    Matrix G(d, d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) G(i, j) = gauss(rng);
    Eigen::HouseholderQR<Matrix> qr(G);
    Matrix Q = qr.householderQ();
    // Sign-fix the columns so Q is Haar distributed rather than QR-convention biased.
    Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j)
        if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
    const Matrix U = Q.transpose();

    QuadraticObjective q;
    q.A = U.transpose() * lambda.asDiagonal() * U;
    q.A = (0.5 * (q.A + q.A.transpose())).eval();
    q.b.resize(d);
    for (int i = 0; i < d; ++i) q.b(i) = gauss(rng);
    if (mu == 0.0) {
        // Row 0 of U is the eigenvector of the pinned zero eigenvalue.
        const Vector v = U.row(0).transpose();
        q.b -= v * v.dot(q.b);
    }
    q.c = 0.0;
    q.mu = mu;
    q.L = L;
    return q;
}

QuadraticObjective make_quadratic(Matrix A, Vector b, double c) {
    if (A.rows() != A.cols() || A.rows() != b.size())
        throw DimensionError("make_quadratic: A must be square and match b");
    QuadraticObjective q;
    q.A = 0.5 * (A + A.transpose());
    q.b = std::move(b);
    q.c = c;
    if (q.A.size() > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(q.A, Eigen::EigenvaluesOnly);
        q.mu = std::max(0.0, es.eigenvalues().minCoeff());
        q.L = std::max(q.mu, es.eigenvalues().maxCoeff());
    }
    return q;
}

Eigen::Index dim(const Objective& obj) {
    return std::visit(overloaded{[](const QuadraticObjective& q) { return q.dim(); },
                                 [](const SampleSet& s) { return s.dim(); }},
                      obj);
}

double value(const Objective& obj, const Vector& w) {
    return std::visit(overloaded{[&](const QuadraticObjective& q) {
                                     check_dim(q.dim(), w);
                                     return w.dot(q.A * w) + q.b.dot(w) + q.c;
                                 },
                                 [&](const SampleSet& s) {
                                     if (s.size() == 0) throw ConfigError("empty sample set");
                                     check_dim(s.dim(), w);
                                     double acc = 0.0;
                                     for (std::size_t j = 0; j < s.size(); ++j) {
                                         const double r = s.features[j].dot(w) - s.targets[j];
                                         acc += r * r;
                                     }
                                     return acc / static_cast<double>(s.size());
                                 }},
                      obj);
}

Vector gradient(const Objective& obj, const Vector& w) {
    return std::visit(overloaded{[&](const QuadraticObjective& q) -> Vector {
                                     check_dim(q.dim(), w);
                                     return 2.0 * (q.A * w) + q.b;
                                 },
                                 [&](const SampleSet& s) -> Vector {
                                     const auto q = fit_least_squares(s);
                                     check_dim(q.dim(), w);
                                     return 2.0 * (q.A * w) + q.b;
                                 }},
                      obj);
}

Matrix hessian(const Objective& obj) { return 2.0 * as_quadratic(obj).A; }

double loss_metric(const Objective& obj, const Vector& w) { return gradient(obj, w).norm(); }

Vector exact_optimum(const Objective& obj) {
    const auto q = as_quadratic(obj);
    const Eigen::Index d = q.dim();
    Eigen::SelfAdjointEigenSolver<Matrix> es(2.0 * q.A);
    const Vector& lam = es.eigenvalues();
    const Matrix& V = es.eigenvectors();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    const double cutoff = 1e-10 * scale;

    // Solve H w = -b on range(H); anything of b outside the range is unreachable.
    const Vector coeffs = V.transpose() * q.b;
    Vector w = Vector::Zero(d);
    double outside = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
        if (std::abs(lam(k)) > cutoff) {
            w -= V.col(k) * (coeffs(k) / lam(k));
        } else {
            outside += coeffs(k) * coeffs(k);
        }
    }
    if (std::sqrt(outside) > 1e-8) {
        throw UnboundedError("objective is unbounded below: b has a component of norm " +
                             std::to_string(std::sqrt(outside)) + " outside range(A)");
    }
    return w;
}

QuadraticObjective fit_least_squares(const SampleSet& samples) {
    if (samples.size() == 0) throw ConfigError("fit_least_squares: empty sample set");
    if (samples.targets.size() != samples.features.size())
        throw DimensionError("fit_least_squares: features and targets differ in length");
    const Eigen::Index d = samples.dim();
    Matrix A = Matrix::Zero(d, d);
    Vector b = Vector::Zero(d);
    double c = 0.0;
    for (std::size_t j = 0; j < samples.size(); ++j) {
        const Vector& x = samples.features[j];
        check_dim(d, x);
        A.selfadjointView<Eigen::Lower>().rankUpdate(x);
        b -= 2.0 * samples.targets[j] * x;
        c += samples.targets[j] * samples.targets[j];
    }
    const double n = static_cast<double>(samples.size());
    A = A.selfadjointView<Eigen::Lower>();
    return make_quadratic(A / n, b / n, c / n);
}

}  // namespace cflsim
