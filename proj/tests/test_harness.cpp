#include <gtest/gtest.h>

#include <random>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "cflsim/csv.hpp"
#include "cflsim/errors.hpp"
#include "cflsim/experiment.hpp"

using namespace cflsim;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ExperimentConfig short_run(const std::string& name, int rounds = 40) {
    auto c = preset(name);
    c.rounds = rounds;
    return c;
}

}  // namespace

TEST(FinalLoss, MeanOfLastTen) {
    std::vector<RunRecord> r;
    for (int i = 1; i <= 15; ++i) r.push_back(RunRecord{static_cast<std::uint64_t>(i), double(i), {}, {}, false});
    EXPECT_DOUBLE_EQ(final_loss(r), 10.5);
    r.resize(4);
    EXPECT_DOUBLE_EQ(final_loss(r), 2.5);
    EXPECT_TRUE(std::isnan(final_loss({})));
}

TEST(Smoothness, Examples) {
    const std::vector<double> flat(30, 2.5);
    EXPECT_EQ(smoothness_metric(flat, 20), 0.0);
    std::vector<double> alt;
    for (int i = 0; i < 50; ++i) alt.push_back(i % 2);
    EXPECT_DOUBLE_EQ(smoothness_metric(alt, 2), 0.5);
    EXPECT_THROW(smoothness_metric(alt, 0), ConfigError);
    EXPECT_THROW(smoothness_metric(alt, 51), ConfigError);
}

TEST(Csv, HeaderAndRows) {
    std::stringstream empty;
    write_csv({}, empty);
    EXPECT_EQ(empty.str(), "round,loss,dist_to_opt,info_loss,diverged\n");

    std::vector<RunRecord> r{{1, 0.1, 2.5, {}, false}, {2, 1e-20, {}, 0.3, false}, {3, 1.0 / 3, {}, {}, true}};
    std::stringstream out;
    write_csv(r, out);
    EXPECT_EQ(out.str(),
              "round,loss,dist_to_opt,info_loss,diverged\n"
              "1,0.1,2.5,,false\n"
              "2,1e-20,,0.3,false\n"
              "3,0.3333333333333333,,,true\n");
}

TEST(Csv, ShortestRoundTrip) {
    for (double v : {0.1, 1.0 / 3, 1e-300, 123456789.125, 5e-324}) {
        const std::string s = format_double(v);
        double back = 0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        EXPECT_EQ(back, v) << s;
    }
}

TEST(Csv, IdenticalSeedsAreByteIdentical) {
    auto cfg = short_run("smallL-gc-bigdrift", 30);
    const auto dir = std::filesystem::temp_directory_path();
    const auto a = dir / "cflsim_a.csv", b = dir / "cflsim_b.csv";
    emit_csv(run_experiment(cfg), a);
    cfg.execution = Execution::Serial;
    emit_csv(run_experiment(cfg), b);
    EXPECT_EQ(slurp(a), slurp(b));
    std::filesystem::remove(a);
    std::filesystem::remove(b);
    EXPECT_THROW(emit_csv({}, dir / "no-such-dir" / "x.csv"), std::runtime_error);
}

TEST(LrSweep, ZeroLearningRateIsFlat) {
    auto cfg = short_run("smallL-sc-smalldrift", 20);
    cfg.algorithm = FedAvgSpec{};
    const auto res = lr_sweep(cfg, {0.0, 0.05}, {1, 2});
    ASSERT_EQ(res.rows.size(), 2u);
    EXPECT_FALSE(res.rows[0].improving);
    const auto rec = run_experiment([&] {
        auto c = cfg;
        c.eta_l = 0.0;
        return c;
    }());
    for (const auto& r : rec) EXPECT_EQ(r.loss, rec.front().loss);
    EXPECT_TRUE(res.rows[1].improving);
    EXPECT_EQ(res.best_lr, 0.05);
}

TEST(LrSweep, DivergedLearningRatesAreNotBest) {
    auto cfg = short_run("largeL-sc-bigdrift", 30);
    cfg.algorithm = FedAvgSpec{};
    const auto res = lr_sweep(cfg, {0.01, 5.0}, {1, 2, 3});
    EXPECT_EQ(res.rows[1].divergence_fraction, 1.0);
    EXPECT_TRUE(std::isinf(res.rows[1].mean_final_loss));
    EXPECT_EQ(res.best_lr, 0.01);
}

TEST(LrSweep, ParallelMatchesSerial) {
    const auto cfg = short_run("smallL-sc-bigdrift", 25);
    const auto a = lr_sweep(cfg, {0.01, 0.1}, {3, 4, 5}, true);
    const auto b = lr_sweep(cfg, {0.01, 0.1}, {3, 4, 5}, false);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(a.rows[i].mean_final_loss, b.rows[i].mean_final_loss);
}

TEST(LrSweep, RejectsEmptyLists) {
    const auto cfg = short_run("smallL-sc-bigdrift");
    EXPECT_THROW(lr_sweep(cfg, {}, {1}), ConfigError);
    EXPECT_THROW(lr_sweep(cfg, {0.1}, {}), ConfigError);
}

TEST(TheoremConstants, MatchIndependentDerivation) {
    DerivedStream rng(4);
    std::uniform_real_distribution<double> u(0.01, 5.0);
    for (int k = 0; k < 50; ++k) {
        TheoremConstants c;
        c.sigma2 = u(rng);
        c.G2 = u(rng);
        c.D2 = u(rng);
        c.R = u(rng);
        c.K = 1 + k % 7;
        c.N = 1 + k % 5;
        c.eta_g = u(rng);
        c.eta_l = u(rng) / 100;
        c.L = u(rng);
        c.sum_p_sq = u(rng) / 5;
        c.past_mass = u(rng) / 5;
        // Expanded by hand: c1 = 2G^2 + 2D^2 S + s^2/(NK) + 2 P^2 R^2,
        // c2 = L/(eta_g^2) (G^2/3 + D^2 S/3 + s^2/(6K) + P^2 R^2/3).
        const double S = c.sum_p_sq, P = c.past_mass;
        const double c1 = 2 * c.G2 + 2 * c.D2 * S + c.sigma2 / (c.N * c.K) + 2 * P * P * c.R * c.R;
        const double c2 = c.L / (c.eta_g * c.eta_g) *
                          (c.G2 / 3 + c.D2 * S / 3 + c.sigma2 / (6 * c.K) + P * P * c.R * c.R / 3);
        EXPECT_NEAR(c.c1(), c1, 1e-12 * std::max(1.0, c1));
        EXPECT_NEAR(c.c2(), c2, 1e-12 * std::max(1.0, c2));
        EXPECT_DOUBLE_EQ(c.eta(), c.K * c.eta_g * c.eta_l);
    }
}

TEST(Theorem1, StepBoundValue) {
    EXPECT_NEAR(theorem_step_bound(5, 10.0), (std::sqrt(7.0) - 2.0) / 300.0, 1e-15);
}

TEST(Theorem1, GuardsAndErrors) {
    auto cfg = preset("smallL-sc-bigdrift");
    cfg.rounds = 5;
    cfg.eta_l = 0.01;  // above the bound for L_f = 10, K = 5
    const auto rep = theorem1_check(cfg, 200);
    EXPECT_EQ(rep.status, Theorem1Report::Status::Skipped);
    EXPECT_NE(rep.message.find("skipped"), std::string::npos);

    EXPECT_THROW(theorem1_check(cfg, 100), ConfigError);
    auto gc = preset("smallL-gc-bigdrift");
    EXPECT_THROW(theorem1_check(gc, 200), ConfigError);
    auto ls = cfg;
    ls.scenario = Scenario::Stateless;
    EXPECT_THROW(theorem1_check(ls, 200), ConfigError);
}

TEST(Theorem1, NoiselessHoldsEveryRound) {
    auto cfg = preset("smallL-sc-smalldrift");
    cfg.rounds = 40;
    cfg.drift = DriftConfig{0, 0, 0, cfg.d};
    cfg.algorithm = CflSpec{TaylorApprox{}, UniformWeights{}};
    cfg.eta_l = theorem_step_bound(cfg.local_steps, 2 * cfg.L);
    const auto rep = theorem1_check(cfg, 200);
    ASSERT_EQ(rep.status, Theorem1Report::Status::Checked);
    EXPECT_EQ(rep.rounds_satisfied, rep.rounds_checked);
    EXPECT_LE(rep.R, 1e-12);
}

TEST(Summary, Format) {
    const auto cfg = short_run("largeL-gc-smalldrift", 30);
    const auto line = summary_line(cfg, run_experiment(cfg));
    EXPECT_TRUE(std::regex_match(
        line, std::regex(R"(setting=largeL-gc-smalldrift algo=cfl-taylor final_loss=\S+ smoothness=\S+ diverged=false)")))
        << line;
}
