#include "cflsim/fl_engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include "cflsim/errors.hpp"
#include "cflsim/rng.hpp"

namespace cflsim {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

const CflSpec* as_cfl(const AlgorithmSpec& spec) { return std::get_if<CflSpec>(&spec); }

// Mean-and-spread Gaussian energy around the round's features: the generator
// targets the empirical distribution of the data it replaces.
EnergyGrad gaussian_energy(const SampleSet& samples) {
    const Eigen::Index d = samples.dim();
    Vector mean = Vector::Zero(d);
    for (const auto& x : samples.features) mean += x;
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (const auto& x : samples.features) var += (x - mean).squaredNorm();
    var /= static_cast<double>(samples.size() * static_cast<std::size_t>(d));
    if (!(var > 0.0)) var = 1.0;
    return [mean, var](const Vector& x) -> Vector { return (x - mean) / var; };
}

HistoryEntry make_artifact(const RoundContext& ctx, const ClientState& client, const LocalTask& task,
                           const QuadraticObjective& local, const Vector& w_final) {
    const auto& cfl = std::get<CflSpec>(*ctx.spec);
    const int origin = static_cast<int>(ctx.round);
    const Vector drift_shift = local.b - task.objective->b;

    auto with_drift = [&](QuadraticObjective q) {
        q.b += drift_shift;
        return q;
    };

    HistoryEntry entry;
    entry.truth = local;
    entry.approx = std::visit(
        overloaded{
            [&](const TaylorApprox& t) {
                ApproxObjective a = taylor_fit(local, w_final, origin);
                if (t.eps > 0.0) {
                    DerivedStream rng(ctx.master_seed, StreamTag::Perturbation, client.id, ctx.round);
                    a = perturb_hessian(a, t.eps, rng);
                }
                return a;
            },
            [&](const CoreSetApprox& c) {
                if (task.samples == nullptr)
                    throw ConfigError("core-set approximation needs round samples");
                CoreSet core;
                if (c.method == CoreSetMethod::Naive) {
                    DerivedStream rng(ctx.master_seed, StreamTag::CoreSet, client.id, ctx.round);
                    core = select_core_set_naive(*task.samples, c.m, rng);
                } else {
                    core = select_core_set_icarl(*task.samples, c.m);
                }
                return taylor_fit(with_drift(fit_least_squares(subset(*task.samples, core))), w_final,
                                  origin);
            },
            [&](const McmcApprox& m) {
                if (task.samples == nullptr || !task.label_rule)
                    throw ConfigError("MCMC approximation needs round samples and a label rule");
                DerivedStream rng(ctx.master_seed, StreamTag::Mcmc, client.id, ctx.round);
                SampleSet gen = mcmc_generate(gaussian_energy(*task.samples), m.samples, m.eta, m.sigma,
                                              m.steps, static_cast<int>(local.dim()), rng);
                for (std::size_t j = 0; j < gen.size(); ++j) gen.targets[j] = task.label_rule(gen.features[j]);
                return taylor_fit(with_drift(fit_least_squares(gen)), w_final, origin);
            }},
        cfl.approximator);
    return entry;
}

}  // namespace

std::string algorithm_name(const AlgorithmSpec& spec) {
    return std::visit(
        overloaded{[](const FedAvgSpec&) -> std::string { return "fedavg"; },
                   [](const FedProxSpec&) -> std::string { return "fedprox"; },
                   [](const CflSpec& c) -> std::string {
                       return std::visit(
                           overloaded{[](const TaylorApprox&) -> std::string { return "cfl-taylor"; },
                                      [](const CoreSetApprox& cs) -> std::string {
                                          return cs.method == CoreSetMethod::Naive ? "cfl-coreset-naive"
                                                                                   : "cfl-coreset-icarl";
                                      },
                                      [](const McmcApprox&) -> std::string { return "cfl-mcmc"; }},
                           c.approximator);
                   }},
        spec);
}

bool is_cfl(const AlgorithmSpec& spec) { return as_cfl(spec) != nullptr; }

void validate(const AlgorithmSpec& spec) {
    std::vector<std::string> errs;
    if (const auto* p = std::get_if<FedProxSpec>(&spec)) {
        if (!(p->prox_mu >= 0.0)) errs.emplace_back("algorithm.prox_mu must be >= 0");
    }
    if (const auto* c = as_cfl(spec)) {
        if (c->history_capacity == 0) errs.emplace_back("algorithm.history_capacity must be >= 1");
        if (const auto* t = std::get_if<TaylorApprox>(&c->approximator)) {
            if (!(t->eps >= 0.0)) errs.emplace_back("algorithm.approximator.eps must be >= 0");
        } else if (const auto* cs = std::get_if<CoreSetApprox>(&c->approximator)) {
            if (cs->m == 0) errs.emplace_back("algorithm.approximator.m must be >= 1");
        } else if (const auto* m = std::get_if<McmcApprox>(&c->approximator)) {
            if (m->samples == 0) errs.emplace_back("algorithm.approximator.samples must be >= 1");
            if (!(m->eta > 0.0)) errs.emplace_back("algorithm.approximator.eta must be > 0");
            if (!(m->sigma >= 0.0)) errs.emplace_back("algorithm.approximator.sigma must be >= 0");
            if (m->steps < 1) errs.emplace_back("algorithm.approximator.steps must be >= 1");
        }
        if (const auto* w = std::get_if<Theorem2Weights>(&c->weights)) {
            if (!(w->R >= 0.0)) errs.emplace_back("algorithm.weights.R must be >= 0");
            if (!(w->D >= 0.0)) errs.emplace_back("algorithm.weights.D must be >= 0");
            if (w->R == 0.0 && w->D == 0.0)
                errs.emplace_back("algorithm.weights: R and D cannot both be 0 in theorem2 mode");
        } else if (const auto* e = std::get_if<ExplicitWeights>(&c->weights)) {
            if (e->p.empty()) errs.emplace_back("algorithm.weights.p must not be empty");
            for (double x : e->p)
                if (!(x >= 0.0)) errs.emplace_back("algorithm.weights.p entries must be >= 0");
        }
    }
    if (!errs.empty()) throw ConfigError(std::move(errs));
}

RoundWeights weights_for(const WeightMode& mode, std::size_t history_len) {
    const int t = static_cast<int>(history_len) + 1;
    return std::visit(
        overloaded{[&](const Theorem2Weights& w) { return compute_round_weights(t, w.R, w.D); },
                   [&](const UniformWeights&) { return uniform_weights(t); },
                   [&](const ExplicitWeights& w) {
                       if (w.p.size() != static_cast<std::size_t>(t))
                           throw ConfigError("explicit weights have " + std::to_string(w.p.size()) +
                                             " entries but round needs " + std::to_string(t));
                       const double s = std::accumulate(w.p.begin(), w.p.end(), 0.0);
                       if (std::abs(s - 1.0) > 1e-12)
                           throw ConfigError("explicit weights must sum to 1");
                       return RoundWeights{w.p};
                   }},
        mode);
}

ClientState::ClientState(std::uint64_t id_, std::uint64_t master_seed, const DriftConfig& drift_cfg,
                         std::size_t history_capacity)
    : id(id_), drift(id_, master_seed, drift_cfg), history(history_capacity) {}

QuadraticObjective drifted_objective(const QuadraticObjective& base, const ClientState& client,
                                     std::uint64_t round, const DriftConfig& cfg) {
    QuadraticObjective local = base;
    local.b += client.drift.delta();
    local.b += client.drift.time_drift(round, cfg);
    return local;
}

Vector local_gradient(const RoundContext& ctx, const ClientState& client, const LocalTask& task,
                      const RoundWeights& weights, const Vector& w, const Vector& w_round_start,
                      std::uint64_t step) {
    const auto& cfg = *ctx.drift;
    return std::visit(
        overloaded{
            [&](const FedAvgSpec&) -> Vector {
                return noisy_gradient(*task.objective, w, client.drift, ctx.round, step, cfg);
            },
            [&](const FedProxSpec& p) -> Vector {
                return noisy_gradient(*task.objective, w, client.drift, ctx.round, step, cfg) +
                       p.prox_mu * (w - w_round_start);
            },
            [&](const CflSpec&) -> Vector {
                const QuadraticObjective local = drifted_objective(*task.objective, client, ctx.round, cfg);
                return cfl_combined_gradient(gradient(local, w), client.history, weights, w) +
                       client.drift.sgd_noise(ctx.round, step, cfg);
            }},
        *ctx.spec);
}

ClientRoundResult run_local_update(const RoundContext& ctx, const ClientState& client,
                                   const LocalTask& task, const Vector& w_t) {
    if (ctx.local_steps < 1) throw ConfigError("run_local_update: K must be >= 1");
    if (!(ctx.eta_l >= 0.0)) throw ConfigError("run_local_update: eta_l must be >= 0");
    if (task.objective == nullptr) throw ConfigError("run_local_update: task has no objective");
    const auto& cfg = *ctx.drift;
    const Eigen::Index d = w_t.size();
    if (task.objective->dim() != d) throw DimensionError("run_local_update: model and objective disagree on d");

    ClientRoundResult res;
    res.client_id = client.id;
    const CflSpec* cfl = as_cfl(*ctx.spec);
    res.weights = cfl ? weights_for(cfl->weights, client.history.size()) : RoundWeights{{1.0}};

    const QuadraticObjective local = drifted_objective(*task.objective, client, ctx.round, cfg);
    res.info_losses.reserve(client.history.size());
    for (const auto& entry : client.history)
        if (entry.truth) res.info_losses.push_back(info_loss(*entry.truth, entry.approx, w_t));

    Vector w = w_t;
    if (ctx.kernel == KernelMode::Fused) {
        // Every algorithm's step gradient is affine in w within a round.
        Matrix H = 2.0 * local.A;
        Vector o = local.b;
        if (const auto* prox = std::get_if<FedProxSpec>(ctx.spec)) {
            H.diagonal().array() += prox->prox_mu;
            o -= prox->prox_mu * w_t;
        } else if (cfl) {
            const double pt = res.weights.current();
            H *= pt;
            o *= pt;
            for (std::size_t tau = 0; tau < client.history.size(); ++tau) {
                const auto& a = client.history[tau].approx;
                const double p = res.weights.p[tau];
                H.noalias() += p * a.hessian_at_anchor;
                o.noalias() += p * (a.grad_at_anchor - a.hessian_at_anchor * a.anchor);
            }
        }
        Vector g(d);
        for (int k = 1; k <= ctx.local_steps; ++k) {
            g.noalias() = H * w;
            g += o;
            g += client.drift.sgd_noise(ctx.round, static_cast<std::uint64_t>(k), cfg);
            w.noalias() -= ctx.eta_l * g;
        }
    } else {
        for (int k = 1; k <= ctx.local_steps; ++k) {
            const Vector g = local_gradient(ctx, client, task, res.weights, w, w_t, static_cast<std::uint64_t>(k));
            w -= ctx.eta_l * g;
        }
    }

    res.delta = w - w_t;
    res.diverged = !w.allFinite() || w.cwiseAbs().maxCoeff() > kDivergenceThreshold;
    if (cfl && !res.diverged) res.artifact = make_artifact(ctx, client, task, local, w);
    return res;
}

void commit(ClientState& client, ClientRoundResult& result) {
    if (result.artifact) {
        client.history.push(std::move(*result.artifact));
        result.artifact.reset();
    }
}

std::vector<std::size_t> sample_clients(std::size_t population, std::size_t S, std::uint64_t seed,
                                        std::uint64_t round) {
    if (S > population)
        throw ConfigError("cannot select " + std::to_string(S) + " clients from a population of " +
                          std::to_string(population));
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (S == population) return idx;
    DerivedStream rng(seed, StreamTag::ClientSampling, round);
    for (std::size_t i = 0; i < S; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, population - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(S);
    std::sort(idx.begin(), idx.end());
    return idx;
}

RoundOutcome run_round(ServerState& server, std::vector<ClientState>& clients,
                       const AlgorithmSpec& spec, const DriftConfig& drift, const RoundParams& params,
                       const TaskProvider& tasks) {
    if (params.clients_per_round == 0) throw ConfigError("run_round: S must be >= 1");
    if (!(params.eta_g > 0.0)) throw ConfigError("run_round: eta_g must be > 0");

    RoundOutcome out;
    const std::uint64_t round = server.round + 1;
    out.selected = sample_clients(clients.size(), params.clients_per_round, server.seed, round);

    RoundContext ctx;
    ctx.spec = &spec;
    ctx.drift = &drift;
    ctx.master_seed = server.seed;
    ctx.round = round;
    ctx.local_steps = params.local_steps;
    ctx.eta_l = params.eta_l;
    ctx.kernel = params.kernel;

    const std::size_t S = out.selected.size();
    out.results.resize(S);
    std::vector<std::exception_ptr> errors(S);
    const bool parallel = params.execution == Execution::Parallel;

#pragma omp parallel for schedule(static) if (parallel)
    for (std::size_t j = 0; j < S; ++j) {
        try {
            const ClientState& client = clients[out.selected[j]];
            const LocalTask task = tasks(client, round);
            out.results[j] = run_local_update(ctx, client, task, server.w);
        } catch (...) {
            errors[j] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    // Fixed-order reduction: the sum never depends on completion order.
    Vector sum = Vector::Zero(server.w.size());
    double info_sum = 0.0;
    std::size_t info_count = 0;
    double sq_sum = 0.0;
    double past_sq = 0.0;
    for (const auto& r : out.results) {
        out.diverged = out.diverged || r.diverged;
        sum += r.delta;
        for (double x : r.info_losses) info_sum += x;
        info_count += r.info_losses.size();
        sq_sum += r.weights.sum_of_squares();
        past_sq += r.weights.past_mass() * r.weights.past_mass();
    }
    out.mean_weight_sum_sq = sq_sum / static_cast<double>(S);
    out.mean_past_mass_sq = past_sq / static_cast<double>(S);
    if (info_count > 0) out.avg_info_loss = info_sum / static_cast<double>(info_count);

    if (!out.diverged) {
        Vector next = server.w + (params.eta_g / static_cast<double>(S)) * sum;
        if (!next.allFinite()) {
            out.diverged = true;
        } else {
            server.w = std::move(next);
            for (std::size_t j = 0; j < S; ++j) commit(clients[out.selected[j]], out.results[j]);
        }
    }
    server.round = round;
    return out;
}

}  // namespace cflsim
