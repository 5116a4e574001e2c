#include <gtest/gtest.h>

#include <random>

#include <set>

#include "cflsim/errors.hpp"
#include "cflsim/fl_engine.hpp"
#include "cflsim/simulation.hpp"

using namespace cflsim;

namespace {

struct Fixture {
    QuadraticObjective q = build_quadratic(6, 1, 5, 11);
    DriftConfig drift{0.01, 100, 1e-5, 6};
    AlgorithmSpec spec = FedAvgSpec{};

    RoundContext ctx(std::uint64_t round = 1, int K = 5, double lr = 0.01,
                     KernelMode kernel = KernelMode::Fused) const {
        RoundContext c;
        c.spec = &spec;
        c.drift = &drift;
        c.master_seed = 3;
        c.round = round;
        c.local_steps = K;
        c.eta_l = lr;
        c.kernel = kernel;
        return c;
    }
    LocalTask task() const { return LocalTask{&q, nullptr, {}}; }
};

ExperimentConfig small_config(AlgorithmSpec algo) {
    ExperimentConfig cfg = preset("smallL-sc-bigdrift");
    cfg.algorithm = std::move(algo);
    cfg.rounds = 60;
    return cfg;
}

}  // namespace

TEST(LocalGradient, FedProxReducesToFedAvg) {
    Fixture f;
    const ClientState client(0, 3, f.drift);
    const Vector w = Vector::Constant(6, 0.4), start = Vector::Zero(6);
    const auto ctx_avg = f.ctx();
    const Vector g_avg = local_gradient(ctx_avg, client, f.task(), RoundWeights{{1.0}}, w, start, 1);

    f.spec = FedProxSpec{0.0};
    EXPECT_EQ(local_gradient(f.ctx(), client, f.task(), RoundWeights{{1.0}}, w, start, 1), g_avg);
    f.spec = FedProxSpec{0.7};
    EXPECT_EQ(local_gradient(f.ctx(), client, f.task(), RoundWeights{{1.0}}, w, w, 1),
              local_gradient(ctx_avg, client, f.task(), RoundWeights{{1.0}}, w, w, 1));
}

TEST(LocalGradient, CflWithHugeRMatchesFedAvg) {
    Fixture f;
    ClientState client(2, 3, f.drift);
    for (int t = 1; t <= 4; ++t) client.history.push(HistoryEntry{taylor_fit(f.q, Vector::Constant(6, t)), f.q});
    const Vector w = Vector::Constant(6, -0.3);
    const Vector fedavg = local_gradient(f.ctx(5), client, f.task(), RoundWeights{{1.0}}, w, w, 2);
    f.spec = CflSpec{TaylorApprox{}, Theorem2Weights{1e6, 1.0}};
    const auto weights = weights_for(std::get<CflSpec>(f.spec).weights, client.history.size());
    const Vector cfl = local_gradient(f.ctx(5), client, f.task(), weights, w, w, 2);
    EXPECT_LE((cfl - fedavg).norm(), 1e-6 * fedavg.norm());
}

TEST(WeightsFor, ExplicitNeedsMatchingLength) {
    EXPECT_THROW(weights_for(ExplicitWeights{{0.5, 0.5}}, 0), ConfigError);
    EXPECT_THROW(weights_for(ExplicitWeights{{0.5, 0.6}}, 1), ConfigError);
    EXPECT_EQ(weights_for(ExplicitWeights{{0.25, 0.75}}, 1).p, (std::vector<double>{0.25, 0.75}));
    EXPECT_THROW(weights_for(Theorem2Weights{0, 0}, 1), ConfigError);
}

TEST(LocalUpdate, SingleNoiselessStep) {
    Fixture f;
    f.drift = DriftConfig{0, 0, 0, 6};
    const ClientState client(0, 3, f.drift);
    const Vector w = Vector::LinSpaced(6, -1, 1);
    const auto res = run_local_update(f.ctx(1, 1, 0.05), client, f.task(), w);
    EXPECT_LT((res.delta + 0.05 * gradient(f.q, w)).norm(), 1e-14);
    EXPECT_EQ(run_local_update(f.ctx(1, 3, 0.0), client, f.task(), w).delta, Vector::Zero(6));
}

TEST(LocalUpdate, FiveStepsMatchClosedForm) {
    Fixture f;
    f.drift = DriftConfig{0, 0, 0, 6};
    const ClientState client(0, 3, f.drift);
    const Vector w0 = Vector::Constant(6, 2.0);
    const double lr = 0.03;
    const Vector opt = exact_optimum(f.q);
    Matrix M = Matrix::Identity(6, 6) - 2 * lr * f.q.A;
    Matrix P = Matrix::Identity(6, 6);
    for (int k = 0; k < 5; ++k) P = M * P;
    const Vector expect = opt + P * (w0 - opt) - w0;
    for (KernelMode kernel : {KernelMode::Fused, KernelMode::Reference}) {
        const auto res = run_local_update(f.ctx(1, 5, lr, kernel), client, f.task(), w0);
        EXPECT_LE((res.delta - expect).norm(), 1e-9);
    }
}

TEST(LocalUpdate, FusedMatchesReference) {
    const std::vector<AlgorithmSpec> specs = {
        FedAvgSpec{}, FedProxSpec{0.3}, CflSpec{TaylorApprox{}, Theorem2Weights{0.5, 1.0}},
        CflSpec{TaylorApprox{0.2}, UniformWeights{}}};
    for (const auto& spec : specs) {
        Fixture f;
        f.spec = spec;
        ClientState client(1, 3, f.drift);
        Vector w = Vector::Constant(6, 0.5);
        for (std::uint64_t t = 1; t <= 6; ++t) {
            auto fused = run_local_update(f.ctx(t, 5, 0.02, KernelMode::Fused), client, f.task(), w);
            const auto ref = run_local_update(f.ctx(t, 5, 0.02, KernelMode::Reference), client, f.task(), w);
            EXPECT_LE((fused.delta - ref.delta).norm(), 1e-10 * (1 + ref.delta.norm())) << algorithm_name(spec);
            w += fused.delta;
            commit(client, fused);
        }
    }
}

TEST(LocalUpdate, ArtifactAnchoredAtFinalIterate) {
    Fixture f;
    f.spec = CflSpec{};
    ClientState client(4, 3, f.drift);
    const Vector w = Vector::Zero(6);
    auto res = run_local_update(f.ctx(), client, f.task(), w);
    EXPECT_EQ(client.history.size(), 0u);  // not appended until commit
    ASSERT_TRUE(res.artifact.has_value());
    EXPECT_LT((res.artifact->approx.anchor - (w + res.delta)).norm(), 1e-15);
    EXPECT_EQ(res.artifact->approx.origin_round, 1);
    commit(client, res);
    EXPECT_EQ(client.history.size(), 1u);
}

TEST(LocalUpdate, DivergenceIsFlagged) {
    Fixture f;
    const ClientState client(0, 3, f.drift);
    const auto res = run_local_update(f.ctx(1, 200, 10.0), client, f.task(), Vector::Ones(6));
    EXPECT_TRUE(res.diverged);
}

TEST(SampleClients, UniformWithoutReplacement) {
    EXPECT_EQ(sample_clients(5, 5, 1, 1), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    EXPECT_THROW(sample_clients(3, 4, 1, 1), ConfigError);
    std::vector<int> counts(10, 0);
    for (std::uint64_t r = 1; r <= 5000; ++r) {
        const auto s = sample_clients(10, 3, 8, r);
        ASSERT_EQ(s.size(), 3u);
        EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
        EXPECT_EQ(std::set<std::size_t>(s.begin(), s.end()).size(), 3u);
        for (auto i : s) ++counts[i];
    }
    for (int c : counts) EXPECT_NEAR(c / 5000.0, 0.3, 0.03);
}

TEST(RunRound, SingleClientIsContinualLearning) {
    Fixture f;
    std::vector<ClientState> clients;
    for (int i = 0; i < 4; ++i) clients.emplace_back(i, 3, f.drift);
    ServerState server{Vector::Constant(6, 1.0), 0, 3};
    const Vector before = server.w;
    RoundParams params{1, 5, 0.01, 1.0, Execution::Serial, KernelMode::Fused};
    const auto out = run_round(server, clients, f.spec, f.drift, params,
                               [&](const ClientState&, std::uint64_t) { return f.task(); });
    ASSERT_EQ(out.selected.size(), 1u);
    EXPECT_EQ(server.w, before + out.results[0].delta);
    EXPECT_EQ(server.round, 1u);
}

TEST(RunRound, ZeroDeltasLeaveModel) {
    Fixture f;
    std::vector<ClientState> clients;
    for (int i = 0; i < 3; ++i) clients.emplace_back(i, 3, f.drift);
    ServerState server{Vector::Constant(6, 1.0), 0, 3};
    RoundParams params{3, 5, 0.0, 1.0, Execution::Parallel, KernelMode::Fused};
    run_round(server, clients, f.spec, f.drift, params, [&](const ClientState&, std::uint64_t) { return f.task(); });
    EXPECT_EQ(server.w, Vector::Constant(6, 1.0));
    params.clients_per_round = 4;
    EXPECT_THROW(run_round(server, clients, f.spec, f.drift, params,
                           [&](const ClientState&, std::uint64_t) { return f.task(); }),
                 ConfigError);
}

TEST(RunRound, SerialAndParallelBitIdentical) {
    auto cfg = small_config(CflSpec{TaylorApprox{0.1}, Theorem2Weights{0.3, 10}});
    cfg.execution = Execution::Serial;
    Simulation a(cfg);
    cfg.execution = Execution::Parallel;
    Simulation b(cfg);
    a.run();
    b.run();
    EXPECT_EQ(a.model(), b.model());
}

TEST(RunExperiment, ZeroRounds) {
    auto cfg = preset("smallL-sc-smalldrift");
    cfg.rounds = 0;
    EXPECT_TRUE(run_experiment(cfg).empty());
    Simulation sim(cfg);
    EXPECT_EQ(sim.model(), Vector::Zero(10));
}

TEST(RunExperiment, NoiselessGradientDescentDecreases) {
    auto cfg = preset("smallL-sc-smalldrift");
    cfg.algorithm = FedAvgSpec{};
    cfg.drift = DriftConfig{0, 0, 0, cfg.d};
    cfg.clients_per_round = 1;
    cfg.local_steps = 1;
    cfg.eta_l = 0.05;
    cfg.rounds = 50;
    const auto rec = run_experiment(cfg);
    ASSERT_EQ(rec.size(), 50u);
    for (std::size_t i = 1; i < rec.size(); ++i) EXPECT_LT(rec[i].loss, rec[i - 1].loss);
    EXPECT_TRUE(rec.front().dist_to_opt.has_value());
}

TEST(RunExperiment, CflBeatsFedAvgOnBigDrift) {
    auto cfl = small_config(CflSpec{TaylorApprox{}, Theorem2Weights{0, 10}});
    cfl.rounds = 300;
    auto avg = cfl;
    avg.algorithm = FedAvgSpec{};
    double a = 0, c = 0;
    for (std::uint64_t s = 1; s <= 3; ++s) {
        cfl.seed = avg.seed = s;
        const auto rc = run_experiment(cfl);
        const auto ra = run_experiment(avg);
        for (std::size_t i = rc.size() - 10; i < rc.size(); ++i) {
            c += rc[i].loss;
            a += ra[i].loss;
        }
    }
    EXPECT_LT(c, a);
}

TEST(RunExperiment, FedAvgRecoveryWithHugeR) {
    auto cfl = small_config(CflSpec{TaylorApprox{}, Theorem2Weights{1e7, 10}});
    auto avg = cfl;
    avg.algorithm = FedAvgSpec{};
    const auto rc = run_experiment(cfl);
    const auto ra = run_experiment(avg);
    ASSERT_EQ(rc.size(), ra.size());
    for (std::size_t i = 0; i < rc.size(); ++i) EXPECT_NEAR(rc[i].loss, ra[i].loss, 1e-4 * ra[i].loss);
}

TEST(RunExperiment, DivergenceStopsRun) {
    auto cfg = small_config(FedAvgSpec{});
    cfg.eta_l = 5.0;
    const auto rec = run_experiment(cfg);
    ASSERT_FALSE(rec.empty());
    EXPECT_LT(rec.size(), 60u);
    EXPECT_TRUE(rec.back().diverged);
}

TEST(RunExperiment, RecordsInfoLossForCfl) {
    auto cfg = small_config(CflSpec{TaylorApprox{0.5}, Theorem2Weights{1, 10}});
    const auto rec = run_experiment(cfg);
    EXPECT_FALSE(rec[0].info_loss.has_value());
    ASSERT_TRUE(rec[5].info_loss.has_value());
    EXPECT_GT(*rec[5].info_loss, 0.0);
    cfg.algorithm = FedAvgSpec{};
    EXPECT_FALSE(run_experiment(cfg)[5].info_loss.has_value());
}

TEST(Stateless, RunsAndIsDeterministic) {
    auto cfg = small_config(CflSpec{});
    cfg.scenario = Scenario::Stateless;
    cfg.population = 1;
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    ASSERT_EQ(a.size(), 60u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].loss, b[i].loss);
    EXPECT_TRUE(a[10].info_loss.has_value());
    EXPECT_LE(*a[10].info_loss, 1e-9);  // averaged exact Taylor fits stay exact
}

TEST(Stateless, RejectsCoreSets) {
    auto cfg = small_config(CflSpec{CoreSetApprox{}, UniformWeights{}});
    cfg.scenario = Scenario::Stateless;
    EXPECT_THROW(Simulation{cfg}, ConfigError);
}

namespace {
ExperimentConfig small_least_squares(Approximator approx) {
    ExperimentConfig cfg;
    cfg.name = "ls";
    cfg.scenario = Scenario::LeastSquares;
    cfg.d = 5;
    cfg.drift = DriftConfig{0.01, 0.01, 1e-5, 5};
    cfg.rounds = 20;
    cfg.population = 3;
    cfg.clients_per_round = 3;
    cfg.local_steps = 5;
    cfg.eta_l = 0.01;
    cfg.algorithm = CflSpec{approx, UniformWeights{}, 40};
    cfg.data.classes = 4;
    cfg.data.items_per_class = 300;
    cfg.data.items_per_client = 320;
    cfg.data.subsets_per_client = 4;
    cfg.data.window = 80;
    cfg.data.step = 60;
    return cfg;
}
}  // namespace

TEST(LeastSquares, CoreSetAndMcmcRun) {
    for (Approximator a : {Approximator{CoreSetApprox{20, CoreSetMethod::Naive}},
                           Approximator{CoreSetApprox{20, CoreSetMethod::Icarl}}, Approximator{McmcApprox{30}},
                           Approximator{TaylorApprox{}}}) {
        const auto cfg = small_least_squares(a);
        Simulation sim(cfg);
        const auto rec = sim.run();
        ASSERT_EQ(rec.size(), 20u);
        EXPECT_FALSE(rec.back().diverged);
        EXPECT_LT(rec.back().loss, sim.initial_loss());
        EXPECT_FALSE(rec.back().dist_to_opt.has_value());
        ASSERT_TRUE(rec.back().info_loss.has_value());
        EXPECT_EQ(sim.manifest().clients(), 3u);
    }
}

TEST(LeastSquares, ApproximatorsNeedData) {
    auto cfg = preset("smallL-sc-smalldrift");
    cfg.algorithm = CflSpec{McmcApprox{}, UniformWeights{}};
    EXPECT_THROW(cfg.validate(), ConfigError);
}
