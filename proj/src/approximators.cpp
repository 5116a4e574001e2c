#include "cflsim/approximators.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "cflsim/errors.hpp"

namespace cflsim {
namespace {

void check_dim(Eigen::Index expected, const Vector& w, const char* who) {
    if (w.size() != expected)
        throw DimensionError(std::string(who) + ": expected dimension " + std::to_string(expected) +
                             ", got " + std::to_string(w.size()));
}

}  // namespace

ApproxObjective taylor_fit(const Objective& obj, const Vector& anchor, int origin_round) {
    check_dim(dim(obj), anchor, "taylor_fit");
    ApproxObjective a;
    a.anchor = anchor;
    a.grad_at_anchor = gradient(obj, anchor);
    a.hessian_at_anchor = hessian(obj);
    a.origin_round = origin_round;
    return a;
}

Vector approx_gradient(const ApproxObjective& approx, const Vector& w) {
    check_dim(approx.anchor.size(), w, "approx_gradient");
    return approx.grad_at_anchor + approx.hessian_at_anchor * (w - approx.anchor);
}

ApproxObjective perturb_hessian(const ApproxObjective& approx, double eps, DerivedStream& rng) {
    if (!(eps >= 0.0)) throw ConfigError("perturb_hessian: eps must be >= 0");
    if (eps == 0.0) return approx;
    const Eigen::Index d = approx.anchor.size();
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix E(d, d);
    for (Eigen::Index j = 0; j < d; ++j)
        for (Eigen::Index i = 0; i < d; ++i) E(i, j) = gauss(rng);
    E = (0.5 * (E + E.transpose())).eval();
    Eigen::SelfAdjointEigenSolver<Matrix> es(E, Eigen::EigenvaluesOnly);
    const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
    ApproxObjective out = approx;
    out.hessian_at_anchor += (eps / norm) * E;
    return out;
}

double info_loss(const Objective& obj, const ApproxObjective& approx, const Vector& w) {
    check_dim(dim(obj), w, "info_loss");
    return (gradient(obj, w) - approx_gradient(approx, w)).norm();
}

double avg_info_loss(const std::vector<std::vector<double>>& records, int t, int S) {
    if (t < 1 || S < 1) throw ConfigError("avg_info_loss: t and S must be >= 1");
    if (records.size() < static_cast<std::size_t>(t))
        throw ConfigError("avg_info_loss: missing rounds (have " + std::to_string(records.size()) +
                          ", need " + std::to_string(t) + ")");
    double acc = 0.0;
    for (int tau = 0; tau < t; ++tau) {
        const auto& row = records[static_cast<std::size_t>(tau)];
        if (row.size() < static_cast<std::size_t>(S))
            throw ConfigError("avg_info_loss: round " + std::to_string(tau + 1) +
                              " is missing client records");
        for (int i = 0; i < S; ++i) acc += row[static_cast<std::size_t>(i)];
    }
    return acc / (static_cast<double>(t) * S);
}

CoreSet select_core_set_naive(const SampleSet& samples, std::size_t m, DerivedStream& rng) {
    if (m == 0) throw ConfigError("select_core_set_naive: capacity must be >= 1");
    const std::size_t n = samples.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t k = std::min(m, n);
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
    return CoreSet{std::move(idx), m};
}

CoreSet select_core_set_icarl(const SampleSet& samples, std::size_t m, const FeatureFn& feature_fn) {
    if (m == 0) throw ConfigError("select_core_set_icarl: capacity must be >= 1");
    const std::size_t n = samples.size();
    if (n == 0) throw ConfigError("select_core_set_icarl: empty sample set");

    std::vector<Vector> phi;
    phi.reserve(n);
    for (const auto& x : samples.features) phi.push_back(feature_fn ? feature_fn(x) : x);
    Vector mean = Vector::Zero(phi.front().size());
    for (const auto& f : phi) mean += f;
    mean /= static_cast<double>(n);

    const std::size_t k_max = std::min(m, n);
    std::vector<bool> taken(n, false);
    Vector chosen_sum = Vector::Zero(mean.size());
    CoreSet core{{}, m};
    core.indices.reserve(k_max);
    for (std::size_t k = 1; k <= k_max; ++k) {
        std::size_t best = n;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (taken[j]) continue;
            const double dist = (mean - (phi[j] + chosen_sum) / static_cast<double>(k)).norm();
            if (dist < best_dist) {
                best_dist = dist;
                best = j;
            }
        }
        taken[best] = true;
        chosen_sum += phi[best];
        core.indices.push_back(best);
    }
    return core;
}

SampleSet subset(const SampleSet& samples, const CoreSet& core) {
    SampleSet out;
    out.features.reserve(core.indices.size());
    out.targets.reserve(core.indices.size());
    for (std::size_t j : core.indices) {
        if (j >= samples.size()) throw DimensionError("subset: core-set index out of range");
        out.features.push_back(samples.features[j]);
        out.targets.push_back(samples.targets[j]);
    }
    return out;
}

SampleSet mcmc_generate(const EnergyGrad& energy_grad, std::size_t n, double eta, double sigma,
                        int steps, int d, DerivedStream& rng) {
    if (!(eta > 0.0)) throw ConfigError("mcmc_generate: eta must be > 0");
    if (steps < 1) throw ConfigError("mcmc_generate: steps must be >= 1");
    if (!(sigma >= 0.0)) throw ConfigError("mcmc_generate: sigma must be >= 0");
    if (d < 1) throw ConfigError("mcmc_generate: dimension must be >= 1");
    std::uniform_real_distribution<double> init(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    SampleSet out;
    out.features.reserve(n);
    out.targets.assign(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        Vector x(d);
        for (int i = 0; i < d; ++i) x(i) = init(rng);
        for (int s = 0; s < steps; ++s) {
            x -= eta * energy_grad(x);
            if (sigma > 0.0)
                for (int i = 0; i < d; ++i) x(i) += sigma * gauss(rng);
        }
        out.features.push_back(std::move(x));
    }
    return out;
}

HistoryBuffer::HistoryBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("HistoryBuffer: capacity must be >= 1");
}

void HistoryBuffer::push(HistoryEntry entry) {
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(std::move(entry));
}

Vector cfl_combined_gradient(const Vector& current_grad, const HistoryBuffer& history,
                             const RoundWeights& weights, const Vector& w) {
    if (weights.size() != history.size() + 1)
        throw ConfigError("cfl_combined_gradient: " + std::to_string(weights.size()) +
                          " weights for " + std::to_string(history.size()) + " history entries");
    Vector g = weights.current() * current_grad;
    for (std::size_t tau = 0; tau < history.size(); ++tau)
        g += weights.p[tau] * approx_gradient(history[tau].approx, w);
    return g;
}

}  // namespace cflsim
