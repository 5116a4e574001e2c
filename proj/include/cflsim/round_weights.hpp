#pragma once

#include <cstddef>
#include <vector>

namespace cflsim {

/// Simplex weights p_1 .. p_t for one client on round t. Past rounds come first
/// (oldest at index 0); the current round is the last entry.
struct RoundWeights {
    std::vector<double> p;

    std::size_t size() const { return p.size(); }
    double current() const { return p.back(); }
    double past_mass() const;
    double sum_of_squares() const;
};

/// Closed-form schedule that balances time-drift variance D^2 against the
/// information-loss bound R^2:
///   p_tau = D^2 / (t D^2 + (t-1) R^2)            for tau < t
///   p_t   = ((t-1) R^2 + D^2) / (t D^2 + (t-1) R^2)
/// t = 1 always gives {1}. R = D = 0 with t >= 2 is a ConfigError.
RoundWeights compute_round_weights(int t, double R, double D);

RoundWeights uniform_weights(int t);

/// Grid search over the simplex for argmin (1 - p_t)^2 R^2 + G^2 + D^2 sum p^2,
/// resolution 1/grid. Oracle for compute_round_weights; only t <= 4.
RoundWeights brute_force_optimal_weights(int t, double R, double D, double G, int grid);

/// Per-client objective minimized by the schedule above.
double weight_objective(const RoundWeights& w, double R, double D, double G);

}  // namespace cflsim
