#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace cflsim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// f(w) = w'Aw + b'w + c, so grad f(w) = 2Aw + b and the Hessian is 2A.
/// mu and L bound the spectrum of A (not of the Hessian).
struct QuadraticObjective {
    Matrix A;
    Vector b;
    double c = 0.0;
    double mu = 0.0;
    double L = 0.0;

    Eigen::Index dim() const { return b.size(); }
};

/// Least-squares data: f(w) = (1/n) sum_j (x_j'w - y_j)^2.
struct SampleSet {
    std::vector<Vector> features;
    std::vector<double> targets;

    std::size_t size() const { return features.size(); }
    Eigen::Index dim() const { return features.empty() ? 0 : features.front().size(); }
};

using Objective = std::variant<QuadraticObjective, SampleSet>;

/// Builds A = U' diag(lambda) U with lambda uniform in [mu, L], lambda_min pinned
/// to mu and lambda_max pinned to L, U Haar-orthogonal. b is standard Gaussian;
/// when mu == 0 its component along the null space of A is removed so the
/// problem stays bounded below.
QuadraticObjective build_quadratic(int d, double mu, double L, std::uint64_t seed);

/// Wraps (A, b, c), symmetrizing A and filling mu/L from its spectrum.
QuadraticObjective make_quadratic(Matrix A, Vector b, double c = 0.0);

Eigen::Index dim(const Objective& obj);
double value(const Objective& obj, const Vector& w);
Vector gradient(const Objective& obj, const Vector& w);
Matrix hessian(const Objective& obj);

/// Norm of the gradient residual. Zero exactly at the optimum.
double loss_metric(const Objective& obj, const Vector& w);

/// Minimizer of the objective (least-norm one when A is singular).
/// Throws UnboundedError if b has a component outside range(A).
Vector exact_optimum(const Objective& obj);

/// Canonical quadratic form of the mean squared residual:
/// A = (1/n) sum x x', b = -(2/n) sum y x, c = (1/n) sum y^2.
QuadraticObjective fit_least_squares(const SampleSet& samples);

}  // namespace cflsim
