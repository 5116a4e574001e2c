#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cflsim/approximators.hpp"
#include "cflsim/drift_model.hpp"
#include "cflsim/objectives.hpp"
#include "cflsim/round_weights.hpp"

namespace cflsim {

// ---------------------------------------------------------------------------
// Algorithm description

struct FedAvgSpec {};

struct FedProxSpec {
    double prox_mu = 0.1;
};

struct TaylorApprox {
    double eps = 0.0;  ///< spectral norm of the injected Hessian error
};

enum class CoreSetMethod { Naive, Icarl };

struct CoreSetApprox {
    std::size_t m = 100;
    CoreSetMethod method = CoreSetMethod::Naive;
};

struct McmcApprox {
    std::size_t samples = 100;
    double eta = 0.1;
    double sigma = 0.1;
    int steps = 100;
};

using Approximator = std::variant<TaylorApprox, CoreSetApprox, McmcApprox>;

struct Theorem2Weights {
    double R = 0.0;
    double D = 1.0;
};
struct UniformWeights {};
/// Fixed weights; must have exactly history + 1 entries when used.
struct ExplicitWeights {
    std::vector<double> p;
};

using WeightMode = std::variant<Theorem2Weights, UniformWeights, ExplicitWeights>;

struct CflSpec {
    Approximator approximator = TaylorApprox{};
    WeightMode weights = Theorem2Weights{};
    std::size_t history_capacity = HistoryBuffer::kDefaultCapacity;
};

using AlgorithmSpec = std::variant<FedAvgSpec, FedProxSpec, CflSpec>;

/// "fedavg", "fedprox", "cfl-taylor", "cfl-coreset-naive", ...
std::string algorithm_name(const AlgorithmSpec& spec);
bool is_cfl(const AlgorithmSpec& spec);
/// Throws ConfigError listing every invalid field.
void validate(const AlgorithmSpec& spec);

/// Weights for a client that holds `history_len` past approximations.
RoundWeights weights_for(const WeightMode& mode, std::size_t history_len);

// ---------------------------------------------------------------------------
// Clients and rounds

enum class Execution { Serial, Parallel };

/// Fused: each round's gradient is collapsed into one affine map H w + o before
/// the local steps. Reference: every step re-evaluates the gradient term by term.
enum class KernelMode { Fused, Reference };

struct ClientState {
    ClientState(std::uint64_t id, std::uint64_t master_seed, const DriftConfig& drift_cfg,
                std::size_t history_capacity = HistoryBuffer::kDefaultCapacity);

    std::uint64_t id;
    ClientDriftState drift;
    HistoryBuffer history;
};

using LabelRule = std::function<double(const Vector&)>;

/// What client i trains on in round t, before drift is added.
struct LocalTask {
    const QuadraticObjective* objective = nullptr;
    const SampleSet* samples = nullptr;  ///< round data; required by core-set and MCMC
    LabelRule label_rule;                ///< targets for MCMC-generated samples
};

/// Everything a client needs besides its own state.
struct RoundContext {
    const AlgorithmSpec* spec = nullptr;
    const DriftConfig* drift = nullptr;
    std::uint64_t master_seed = 0;
    std::uint64_t round = 1;  ///< 1-based
    int local_steps = 1;
    double eta_l = 0.0;
    KernelMode kernel = KernelMode::Fused;
};

/// f_{t,i}: the task objective with this round's delta_i + xi_{t,i} folded into b.
QuadraticObjective drifted_objective(const QuadraticObjective& base, const ClientState& client,
                                     std::uint64_t round, const DriftConfig& cfg);

/// Per-step gradient as the algorithm defines it (reference path).
///   FedAvg:  noisy gradient of f_{t,i}
///   FedProx: FedAvg + prox_mu (w - w_round_start)
///   CFL:     p_t grad f_{t,i} + sum p_tau grad f~_tau, plus fresh nu
Vector local_gradient(const RoundContext& ctx, const ClientState& client, const LocalTask& task,
                      const RoundWeights& weights, const Vector& w, const Vector& w_round_start,
                      std::uint64_t step);

struct ClientRoundResult {
    std::uint64_t client_id = 0;
    Vector delta;
    bool diverged = false;
    std::vector<double> info_losses;       ///< one per history entry, at the round-start model
    std::optional<HistoryEntry> artifact;  ///< to be committed after aggregation (CFL only)
    RoundWeights weights;
};

/// K local steps from w_t. Pure with respect to `client`: the round's
/// approximation artifact is returned, not appended.
ClientRoundResult run_local_update(const RoundContext& ctx, const ClientState& client,
                                   const LocalTask& task, const Vector& w_t);

/// Appends a result's artifact to the client's history.
void commit(ClientState& client, ClientRoundResult& result);

struct ServerState {
    Vector w;
    std::uint64_t round = 0;  ///< rounds completed
    std::uint64_t seed = 0;
};

struct RoundParams {
    std::size_t clients_per_round = 1;
    int local_steps = 1;
    double eta_l = 0.0;
    double eta_g = 1.0;
    Execution execution = Execution::Parallel;
    KernelMode kernel = KernelMode::Fused;
};

struct RoundOutcome {
    std::vector<std::size_t> selected;           ///< indices into the population, ascending
    std::vector<ClientRoundResult> results;      ///< parallel to `selected`
    bool diverged = false;
    std::optional<double> avg_info_loss;         ///< mean over all (client, history entry) pairs
    double mean_weight_sum_sq = 1.0;             ///< (1/N) sum_i sum_tau p_{tau,i}^2
    double mean_past_mass_sq = 0.0;              ///< (1/N) sum_i (sum_{tau<t} p_{tau,i})^2
};

using TaskProvider = std::function<LocalTask(const ClientState&, std::uint64_t round)>;

/// Uniformly samples S of `clients` without replacement (all of them when
/// S == population).
std::vector<std::size_t> sample_clients(std::size_t population, std::size_t S, std::uint64_t seed,
                                        std::uint64_t round);

/// One communication round: sample, run local updates (concurrently under
/// Execution::Parallel), reduce deltas in ascending client order, apply
/// w += (eta_g / S) sum delta, then commit history artifacts. Clients are not
/// committed when the round diverges.
RoundOutcome run_round(ServerState& server, std::vector<ClientState>& clients,
                       const AlgorithmSpec& spec, const DriftConfig& drift, const RoundParams& params,
                       const TaskProvider& tasks);

/// One row of the per-round output.
struct RunRecord {
    std::uint64_t round = 0;
    double loss = 0.0;
    std::optional<double> dist_to_opt;
    std::optional<double> info_loss;
    bool diverged = false;
};

constexpr double kDivergenceThreshold = 1e12;

}  // namespace cflsim
