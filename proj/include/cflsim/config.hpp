#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cflsim/drift_model.hpp"
#include "cflsim/fl_engine.hpp"

namespace cflsim {

enum class Scenario { Quadratic, LeastSquares, Stateless };

/// Synthetic labeled data for the least-squares scenario. Class c has feature
/// mean m_c ~ N(0, class_spread^2 I); items are x ~ N(m_c, feature_sd^2 I) with
/// target y = x'w_true + offset_c + N(0, target_noise^2).
struct DataConfig {
    int classes = 10;
    int items_per_class = 1200;
    double class_spread = 2.0;
    double feature_sd = 1.0;
    double offset_sd = 1.0;
    double target_noise = 0.1;
    int items_per_client = 1600;    ///< N in the client-level split
    int subsets_per_client = 8;     ///< T in the round-level split
    double alpha = 0.5;             ///< inter-client concentration
    double beta = 0.5;              ///< intra-client (across rounds) concentration
    int window = 200;               ///< S_l, items a client trains on per round
    int step = 200;                 ///< s, pointer advance per round
};

struct ExperimentConfig {
    std::string name = "custom";
    Scenario scenario = Scenario::Quadratic;
    std::uint64_t seed = 0;                     ///< noise, sampling and data streams
    std::optional<std::uint64_t> objective_seed;  ///< defaults to seed

    int d = 10;
    double mu = 1.0;
    double L = 5.0;

    int rounds = 500;
    int clients_per_round = 7;
    int population = 7;
    int local_steps = 5;
    double eta_l = 0.01;
    double eta_g = 1.0;

    AlgorithmSpec algorithm = CflSpec{};
    DriftConfig drift{0.01, 0.01, 1e-5, 10};
    DataConfig data;
    Execution execution = Execution::Parallel;
    KernelMode kernel = KernelMode::Fused;

    std::uint64_t effective_objective_seed() const { return objective_seed.value_or(seed); }
    /// Throws ConfigError listing every violation.
    void validate() const;
};

/// Parses JSON text. Unknown keys, duplicate keys and type mismatches are
/// rejected; syntax errors carry line and column.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Inverse of parse_config, pretty printed.
std::string serialize_config(const ExperimentConfig& cfg);

/// Names of the 2 x 2 x 2 noisy-quadratic grid:
/// {smallL,largeL}-{sc,gc}-{smalldrift,bigdrift}. An "nqm-" prefix is accepted.
std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

std::string to_string(Scenario s);

}  // namespace cflsim
