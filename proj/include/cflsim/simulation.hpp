#pragma once

#include <optional>
#include <vector>

#include "cflsim/config.hpp"
#include "cflsim/data_partition.hpp"
#include "cflsim/fl_engine.hpp"

namespace cflsim {

/// Labeled items for the least-squares scenario, plus the noiseless labeling
/// rule y = x'w_true used for generated samples.
struct SyntheticData {
    std::vector<Vector> features;
    std::vector<double> targets;
    std::vector<int> labels;
    Vector w_true;

    SampleSet gather(const std::vector<ItemId>& ids) const;
};

SyntheticData generate_data(const DataConfig& cfg, int d, std::uint64_t seed);

/// A configured federated run, advanced one round at a time.
class Simulation {
public:
    explicit Simulation(ExperimentConfig cfg);

    /// Runs one round and returns its record. Throws std::logic_error when the
    /// run is finished or has diverged.
    RunRecord step();
    /// Remaining rounds; stops after the first diverged round.
    std::vector<RunRecord> run();

    const ExperimentConfig& config() const noexcept { return cfg_; }
    const Vector& model() const noexcept { return server_.w; }
    int round() const noexcept { return static_cast<int>(server_.round); }
    bool diverged() const noexcept { return diverged_; }
    bool finished() const noexcept { return diverged_ || round() >= cfg_.rounds; }

    /// The objective the loss is reported on.
    const QuadraticObjective& global_objective() const noexcept { return global_; }
    const std::optional<Vector>& optimum() const noexcept { return optimum_; }
    double initial_loss() const noexcept { return initial_loss_; }
    const std::optional<RoundOutcome>& last_outcome() const noexcept { return last_; }
    /// Partition used by the least-squares scenario (empty otherwise).
    const PartitionManifest& manifest() const noexcept { return manifest_; }

private:
    struct RoundData {
        SampleSet samples;
        QuadraticObjective objective;
    };

    void setup_least_squares();
    void prepare_round_data(std::uint64_t round);
    RoundOutcome stateless_round();

    ExperimentConfig cfg_;
    ServerState server_;
    QuadraticObjective global_;
    std::optional<Vector> optimum_;
    double initial_loss_ = 0.0;
    bool diverged_ = false;
    std::vector<ClientState> clients_;
    std::optional<RoundOutcome> last_;

    // least-squares scenario
    SyntheticData data_;
    PartitionManifest manifest_;
    std::vector<RoundData> round_data_;

    // stateless scenario: averaged artifacts handed to each fresh client
    HistoryBuffer server_history_;
};

/// Runs a config to completion (or divergence).
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg);

}  // namespace cflsim
