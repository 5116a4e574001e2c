#include "cflsim/round_weights.hpp"

#include <limits>
#include <numeric>
#include <string>

#include "cflsim/errors.hpp"

namespace cflsim {

double RoundWeights::past_mass() const {
    return std::accumulate(p.begin(), p.end() - 1, 0.0);
}

double RoundWeights::sum_of_squares() const {
    double s = 0.0;
    for (double x : p) s += x * x;
    return s;
}

RoundWeights compute_round_weights(int t, double R, double D) {
    if (t < 1) throw ConfigError("compute_round_weights: t must be >= 1");
    if (R < 0.0 || D < 0.0) throw ConfigError("compute_round_weights: R and D must be >= 0");
    if (t == 1) return RoundWeights{{1.0}};
    const double R2 = R * R;
    const double D2 = D * D;
    const double tm1 = static_cast<double>(t - 1);
    const double denom = static_cast<double>(t) * D2 + tm1 * R2;
    if (!(denom > 0.0))
        throw ConfigError("compute_round_weights: R = D = 0 leaves the schedule undefined for t >= 2");
    RoundWeights w;
    w.p.assign(static_cast<std::size_t>(t), D2 / denom);
    w.p.back() = (tm1 * R2 + D2) / denom;
    return w;
}

RoundWeights uniform_weights(int t) {
    if (t < 1) throw ConfigError("uniform_weights: t must be >= 1");
    return RoundWeights{std::vector<double>(static_cast<std::size_t>(t), 1.0 / t)};
}

double weight_objective(const RoundWeights& w, double R, double D, double G) {
    const double miss = 1.0 - w.current();
    return miss * miss * R * R + G * G + D * D * w.sum_of_squares();
}

RoundWeights brute_force_optimal_weights(int t, double R, double D, double G, int grid) {
    if (t < 1) throw ConfigError("brute_force_optimal_weights: t must be >= 1");
    if (t > 4) throw ConfigError("brute_force_optimal_weights: t > 4 is too large for the grid");
    if (grid < 100) throw ConfigError("brute_force_optimal_weights: grid must be >= 100");
    if (t == 1) return RoundWeights{{1.0}};

    // Enumerate compositions k_1 + ... + k_t = grid.
    std::vector<int> k(static_cast<std::size_t>(t), 0);
    RoundWeights best;
    double best_val = std::numeric_limits<double>::infinity();
    RoundWeights cand;
    cand.p.resize(static_cast<std::size_t>(t));

    auto recurse = [&](auto&& self, int idx, int remaining) -> void {
        if (idx == t - 1) {
            k[static_cast<std::size_t>(idx)] = remaining;
            for (int j = 0; j < t; ++j)
                cand.p[static_cast<std::size_t>(j)] =
                    static_cast<double>(k[static_cast<std::size_t>(j)]) / grid;
            const double v = weight_objective(cand, R, D, G);
            if (v < best_val) {
                best_val = v;
                best = cand;
            }
            return;
        }
        for (int x = 0; x <= remaining; ++x) {
            k[static_cast<std::size_t>(idx)] = x;
            self(self, idx + 1, remaining - x);
        }
    };
    recurse(recurse, 0, grid);
    return best;
}

}  // namespace cflsim
