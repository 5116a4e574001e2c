#include "cflsim/drift_model.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cflsim/errors.hpp"

namespace cflsim {

void DriftConfig::validate() const {
    std::vector<std::string> errs;
    if (!(client_var >= 0.0)) errs.emplace_back("drift.client_var must be >= 0");
    if (!(time_var >= 0.0)) errs.emplace_back("drift.time_var must be >= 0");
    if (!(sgd_var >= 0.0)) errs.emplace_back("drift.sgd_var must be >= 0");
    if (d < 1) errs.emplace_back("drift dimension must be >= 1");
    if (!errs.empty()) throw ConfigError(std::move(errs));
}

Vector sample_drift(double var, int d, DerivedStream& rng) {
    if (!(var >= 0.0)) throw ConfigError("sample_drift: variance must be >= 0");
    if (d < 1) throw ConfigError("sample_drift: dimension must be >= 1");
    if (var == 0.0) return Vector::Zero(d);
    std::normal_distribution<double> gauss(0.0, std::sqrt(var / d));
    Vector v(d);
    for (int i = 0; i < d; ++i) v(i) = gauss(rng);
    return v;
}

ClientDriftState::ClientDriftState(std::uint64_t client_id, std::uint64_t master_seed,
                                   const DriftConfig& cfg)
    : client_id_(client_id), master_seed_(master_seed) {
    DerivedStream rng(master_seed, StreamTag::ClientDrift, client_id);
    delta_ = sample_drift(cfg.client_var, cfg.d, rng);
}

Vector ClientDriftState::time_drift(std::uint64_t round, const DriftConfig& cfg) const {
    DerivedStream rng(master_seed_, StreamTag::TimeDrift, client_id_, round);
    return sample_drift(cfg.time_var, cfg.d, rng);
}

Vector ClientDriftState::sgd_noise(std::uint64_t round, std::uint64_t step,
                                   const DriftConfig& cfg) const {
    DerivedStream rng(master_seed_, StreamTag::SgdNoise, client_id_, round, step);
    return sample_drift(cfg.sgd_var, cfg.d, rng);
}

Vector noisy_gradient(const Objective& obj, const Vector& w, const ClientDriftState& state,
                      std::uint64_t round, std::uint64_t step, const DriftConfig& cfg) {
    if (dim(obj) != cfg.d || state.delta().size() != cfg.d)
        throw DimensionError("noisy_gradient: objective, drift state and config disagree on d");
    Vector g = gradient(obj, w);
    g += state.delta();
    g += state.time_drift(round, cfg);
    g += state.sgd_noise(round, step, cfg);
    return g;
}

double empirical_second_moment(std::span<const Vector> draws) {
    if (draws.empty()) throw ConfigError("empirical_second_moment: no draws");
    double acc = 0.0;
    for (const auto& v : draws) acc += v.squaredNorm();
    return acc / static_cast<double>(draws.size());
}

}  // namespace cflsim
