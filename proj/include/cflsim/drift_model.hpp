#pragma once

#include <cstdint>
#include <span>

#include "cflsim/objectives.hpp"
#include "cflsim/rng.hpp"

namespace cflsim {

/// Second moments of the three additive noise sources. The multiplicative drift
/// coefficients are identically zero in this model.
struct DriftConfig {
    double client_var = 0.0;  ///< E|delta_i|^2
    double time_var = 0.0;    ///< E|xi_{t,i}|^2
    double sgd_var = 0.0;     ///< E|nu_{t,i,k}|^2
    int d = 0;

    void validate() const;
};

/// Isotropic Gaussian with per-coordinate variance var/d, so E|v|^2 = var.
Vector sample_drift(double var, int d, DerivedStream& rng);

/// Noise state of one simulated client. delta is drawn once; xi and nu are
/// regenerated on demand from (master seed, client id, round[, step]) so any
/// execution order sees the same values.
class ClientDriftState {
public:
    ClientDriftState(std::uint64_t client_id, std::uint64_t master_seed, const DriftConfig& cfg);

    std::uint64_t client_id() const noexcept { return client_id_; }
    const Vector& delta() const noexcept { return delta_; }

    /// xi_{round, i}: shared by every local step of the round.
    Vector time_drift(std::uint64_t round, const DriftConfig& cfg) const;
    /// nu_{round, i, step}: fresh per step.
    Vector sgd_noise(std::uint64_t round, std::uint64_t step, const DriftConfig& cfg) const;

private:
    std::uint64_t client_id_;
    std::uint64_t master_seed_;
    Vector delta_;
};

/// grad f(w) + delta_i + xi_{round,i} + nu_{round,i,step}.
Vector noisy_gradient(const Objective& obj, const Vector& w, const ClientDriftState& state,
                      std::uint64_t round, std::uint64_t step, const DriftConfig& cfg);

/// Mean of squared norms.
double empirical_second_moment(std::span<const Vector> draws);

}  // namespace cflsim
