#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cflsim/config.hpp"
#include "cflsim/simulation.hpp"

namespace cflsim {

/// Mean loss over the last `last` records (all of them if fewer).
double final_loss(const std::vector<RunRecord>& records, std::size_t last = 10);

std::vector<double> losses(const std::vector<RunRecord>& records);

/// Mean over sliding windows of the population standard deviation inside each
/// window. Throws ConfigError for window 0 or window > series length.
double smoothness_metric(std::span<const double> series, std::size_t window);

/// {0.01, 0.02, 0.03, 0.05, 0.08, 0.1, 0.2, 0.3, 0.5}
std::vector<double> default_lr_grid();

struct SweepRow {
    double lr = 0.0;
    double mean_final_loss = 0.0;      ///< over non-diverged seeds; +inf if none
    double divergence_fraction = 0.0;
    bool improving = false;            ///< mean final loss below the initial loss
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::optional<double> best_lr;  ///< lowest mean among lrs where no seed diverged
};

/// Runs every (lr, seed) pair, concurrently when `parallel` is set; results are
/// reduced in (lr, seed) order.
SweepResult lr_sweep(const ExperimentConfig& cfg, const std::vector<double>& lrs,
                     const std::vector<std::uint64_t>& seeds, bool parallel = true);

/// Inputs and outputs of the one-round progress bound
///   f(w_t) - f* <= (1/eta)(1 - mu eta / 2) E|w_t - w*|^2 - (1/eta) E|w_{t+1} - w*|^2
///                  + c1 eta + c2 eta^2 + phi_t.
/// mu and L are the constants of f itself (twice those of A).
struct TheoremConstants {
    double sigma2 = 0.0;  ///< per-step gradient noise
    double G2 = 0.0;      ///< client drift
    double D2 = 0.0;      ///< time drift
    double R = 0.0;       ///< information-loss bound
    int K = 1;
    double N = 1.0;
    double eta_g = 1.0;
    double eta_l = 0.0;
    double mu = 0.0;
    double L = 0.0;
    double sum_p_sq = 1.0;   ///< sum_tau p_tau^2
    double past_mass = 0.0;  ///< sum_{tau<t} p_tau

    double eta() const { return K * eta_g * eta_l; }
    double c_pG() const { return G2 + D2 * sum_p_sq; }
    double c_R() const { return past_mass * past_mass * R * R; }
    double c1() const { return 2.0 * c_pG() + sigma2 / (N * K) + 2.0 * c_R(); }
    double c2() const {
        return L * c_pG() / (3.0 * eta_g * eta_g) + L * sigma2 / (6.0 * eta_g * eta_g * K) +
               L * c_R() / (3.0 * eta_g * eta_g);
    }
};

/// Largest eta_l (with eta_g = 1) for which the progress bound's step-size
/// precondition holds: (sqrt(3 + 4c) - sqrt(4c)) / (6 K L sqrt(c)), c = 1.
double theorem_step_bound(int K, double L);

struct Theorem1Report {
    enum class Status { Checked, Skipped };
    Status status = Status::Checked;
    std::string message;
    std::size_t rounds_checked = 0;
    std::size_t rounds_satisfied = 0;
    double satisfaction_rate = 0.0;
    double phi_constant = 0.0;       ///< calibrated on held-out seeds
    std::size_t calibration_replicates = 0;
    std::size_t replicates = 0;
    double step_bound = 0.0;
    double R = 0.0;
    TheoremConstants last_constants;

    bool passed(double required = 0.99) const {
        return status == Status::Checked && satisfaction_rate >= required;
    }
};

/// Seed-averaged check of the one-round progress bound. Needs a strongly
/// convex quadratic (exact optimum) and at least 200 replicates; skipped when
/// eta_l exceeds theorem_step_bound.
Theorem1Report theorem1_check(const ExperimentConfig& cfg, std::size_t replicates = 200);

/// "setting=<name> algo=<name> final_loss=<v> smoothness=<v> diverged=<bool>"
std::string summary_line(const ExperimentConfig& cfg, const std::vector<RunRecord>& records,
                         std::size_t smoothness_window = 20);

/// Shortest decimal that round-trips.
std::string format_double(double v);

}  // namespace cflsim
