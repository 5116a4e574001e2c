#include "cflsim/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <sstream>

#include "cflsim/errors.hpp"
#include "cflsim/rng.hpp"

namespace cflsim {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double final_loss(const std::vector<RunRecord>& records, std::size_t last) {
    if (records.empty() || last == 0) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t n = std::min(last, records.size());
    double s = 0.0;
    for (std::size_t i = records.size() - n; i < records.size(); ++i) s += records[i].loss;
    return s / static_cast<double>(n);
}

std::vector<double> losses(const std::vector<RunRecord>& records) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.loss);
    return out;
}

double smoothness_metric(std::span<const double> series, std::size_t window) {
    if (window == 0) throw ConfigError("smoothness_metric: window must be >= 1");
    if (window > series.size())
        throw ConfigError("smoothness_metric: window " + std::to_string(window) + " exceeds series length " +
                          std::to_string(series.size()));
    const std::size_t positions = series.size() - window + 1;
    double total = 0.0;
    for (std::size_t s = 0; s < positions; ++s) {
        const auto w = series.subspan(s, window);
        const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(window);
        double var = 0.0;
        for (double x : w) var += (x - mean) * (x - mean);
        total += std::sqrt(var / static_cast<double>(window));
    }
    return total / static_cast<double>(positions);
}

std::vector<double> default_lr_grid() { return {0.01, 0.02, 0.03, 0.05, 0.08, 0.1, 0.2, 0.3, 0.5}; }

SweepResult lr_sweep(const ExperimentConfig& cfg, const std::vector<double>& lrs,
                     const std::vector<std::uint64_t>& seeds, bool parallel) {
    if (lrs.empty()) throw ConfigError("lr_sweep: no learning rates");
    if (seeds.empty()) throw ConfigError("lr_sweep: no seeds");
    cfg.validate();

    struct Cell {
        double final = 0.0;
        double initial = 0.0;
        bool diverged = false;
    };
    const std::size_t n = lrs.size() * seeds.size();
    std::vector<Cell> cells(n);
    std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::size_t j = 0; j < n; ++j) {
        try {
            ExperimentConfig c = cfg;
            c.eta_l = lrs[j / seeds.size()];
            c.seed = seeds[j % seeds.size()];
            c.objective_seed = cfg.objective_seed;
            c.execution = Execution::Serial;
            Simulation sim(c);
            const auto records = sim.run();
            cells[j] = {final_loss(records), sim.initial_loss(), sim.diverged()};
        } catch (...) {
            errors[j] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    SweepResult out;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < lrs.size(); ++l) {
        SweepRow row;
        row.lr = lrs[l];
        double sum = 0.0;
        double init = 0.0;
        std::size_t ok = 0;
        std::size_t div = 0;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const Cell& c = cells[l * seeds.size() + s];
            if (c.diverged) {
                ++div;
                continue;
            }
            sum += c.final;
            init += c.initial;
            ++ok;
        }
        row.divergence_fraction = static_cast<double>(div) / static_cast<double>(seeds.size());
        row.mean_final_loss = ok ? sum / static_cast<double>(ok) : std::numeric_limits<double>::infinity();
        row.improving = ok > 0 && row.mean_final_loss < init / static_cast<double>(ok);
        if (div == 0 && row.mean_final_loss < best) {
            best = row.mean_final_loss;
            out.best_lr = row.lr;
        }
        out.rows.push_back(row);
    }
    return out;
}

double theorem_step_bound(int K, double L) {
    const double c = 1.0;
    return (std::sqrt(3.0 + 4.0 * c) - std::sqrt(4.0 * c)) / (6.0 * K * L * std::sqrt(c));
}

namespace {

// Per-round traces of one replicate; index t refers to w_t (t = 0 is w_0).
struct Trace {
    std::vector<double> gap;        // f(w_t) - f*
    std::vector<double> dist2;      // |w_t - w*|^2
    std::vector<double> sum_p_sq;   // weights used on the round from w_t to w_{t+1}
    std::vector<double> past_sq;
    double max_info = 0.0;
    bool diverged = false;
};

Trace trace_replicate(const ExperimentConfig& cfg) {
    Simulation sim(cfg);
    const auto& f = sim.global_objective();
    const Vector& opt = *sim.optimum();
    const auto T = static_cast<std::size_t>(cfg.rounds);
    Trace tr;
    tr.gap.reserve(T + 1);
    tr.dist2.reserve(T + 1);
    auto observe = [&] {
        const Vector e = sim.model() - opt;
        tr.gap.push_back(e.dot(f.A * e));
        tr.dist2.push_back(e.squaredNorm());
    };
    observe();
    while (!sim.finished()) {
        const RunRecord rec = sim.step();
        const auto& out = *sim.last_outcome();
        tr.sum_p_sq.push_back(out.mean_weight_sum_sq);
        tr.past_sq.push_back(out.mean_past_mass_sq);
        if (rec.info_loss) tr.max_info = std::max(tr.max_info, *rec.info_loss);
        if (rec.diverged) {
            tr.diverged = true;
            break;
        }
        observe();
    }
    return tr;
}

std::vector<Trace> trace_replicates(const ExperimentConfig& cfg, std::size_t count, std::uint64_t stream) {
    std::vector<Trace> traces(count);
    std::vector<std::exception_ptr> errors(count);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t r = 0; r < count; ++r) {
        try {
            ExperimentConfig c = cfg;
            c.objective_seed = cfg.effective_objective_seed();
            c.seed = derive_seed(cfg.seed, StreamTag::Data, stream, r);
            c.execution = Execution::Serial;
            traces[r] = trace_replicate(c);
        } catch (...) {
            errors[r] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return traces;
}

struct Expectations {
    std::vector<double> gap, dist2, sum_p_sq, past_sq;
    std::size_t rounds = 0;  // rounds every replicate completed
    double max_info = 0.0;
    bool any_diverged = false;
};

Expectations average(const std::vector<Trace>& traces) {
    Expectations e;
    std::size_t rounds = std::numeric_limits<std::size_t>::max();
    for (const auto& t : traces) {
        rounds = std::min(rounds, t.dist2.size() - 1);
        e.max_info = std::max(e.max_info, t.max_info);
        e.any_diverged = e.any_diverged || t.diverged;
    }
    e.rounds = rounds;
    e.gap.assign(rounds + 1, 0.0);
    e.dist2.assign(rounds + 1, 0.0);
    e.sum_p_sq.assign(rounds, 0.0);
    e.past_sq.assign(rounds, 0.0);
    const double n = static_cast<double>(traces.size());
    for (const auto& t : traces) {
        for (std::size_t i = 0; i <= rounds; ++i) {
            e.gap[i] += t.gap[i] / n;
            e.dist2[i] += t.dist2[i] / n;
        }
        for (std::size_t i = 0; i < rounds; ++i) {
            e.sum_p_sq[i] += t.sum_p_sq[i] / n;
            e.past_sq[i] += t.past_sq[i] / n;
        }
    }
    return e;
}

TheoremConstants base_constants(const ExperimentConfig& cfg, double R) {
    TheoremConstants k;
    k.sigma2 = cfg.drift.sgd_var;
    k.G2 = cfg.drift.client_var;
    k.D2 = cfg.drift.time_var;
    k.R = R;
    k.K = cfg.local_steps;
    k.N = cfg.clients_per_round;
    k.eta_g = cfg.eta_g;
    k.eta_l = cfg.eta_l;
    k.mu = 2.0 * cfg.mu;
    k.L = 2.0 * cfg.L;
    return k;
}

struct Slack {
    double excess;  // lhs - rhs without phi
    double phi_unit;  // phi_t / C
    double scale;   // magnitude of the terms, for rounding tolerance
};

Slack round_slack(const Expectations& e, std::size_t t, TheoremConstants k, double w0_dist) {
    k.sum_p_sq = e.sum_p_sq[t];
    k.past_mass = std::sqrt(e.past_sq[t]);
    const double eta = k.eta();
    const double a1 = (1.0 - k.mu * eta / 2.0) * e.dist2[t] / eta - e.dist2[t + 1] / eta;
    const double rhs = a1 + k.c1() * eta + k.c2() * eta * eta;
    const double scale = e.gap[t] + e.dist2[t] / eta + e.dist2[t + 1] / eta + k.c1() * eta;
    return {e.gap[t] - rhs, k.past_mass * k.R * w0_dist, scale};
}

constexpr double kRoundingTolerance = 1e-9;

}  // namespace

Theorem1Report theorem1_check(const ExperimentConfig& cfg, std::size_t replicates) {
    if (cfg.scenario != Scenario::Quadratic)
        throw ConfigError("theorem1_check: needs the quadratic scenario");
    if (!(cfg.mu > 0.0)) throw ConfigError("theorem1_check: needs mu > 0 for an exact optimum");
    if (replicates < 200) throw ConfigError("theorem1_check: needs at least 200 replicates");
    cfg.validate();

    Theorem1Report rep;
    rep.replicates = replicates;
    rep.step_bound = theorem_step_bound(cfg.local_steps, 2.0 * cfg.L);
    if (cfg.eta_g * cfg.eta_l > rep.step_bound) {
        rep.status = Theorem1Report::Status::Skipped;
        rep.message = "skipped: eta_g * eta_l = " + format_double(cfg.eta_g * cfg.eta_l) +
                      " exceeds the step-size bound " + format_double(rep.step_bound);
        return rep;
    }
    if (!(cfg.eta_l > 0.0)) {
        rep.status = Theorem1Report::Status::Skipped;
        rep.message = "skipped: eta_l must be > 0";
        return rep;
    }

    const QuadraticObjective f = build_quadratic(cfg.d, cfg.mu, cfg.L, cfg.effective_objective_seed());
    const double w0_dist = exact_optimum(f).norm();  // w_0 = 0

    // Calibrate the phi_t constant on held-out seeds.
    rep.calibration_replicates = std::max<std::size_t>(50, replicates / 4);
    const Expectations cal = average(trace_replicates(cfg, rep.calibration_replicates, 1));
    rep.R = cal.max_info;
    const TheoremConstants k = base_constants(cfg, rep.R);
    double C = 0.0;
    for (std::size_t t = 0; t < cal.rounds; ++t) {
        const Slack s = round_slack(cal, t, k, w0_dist);
        if (s.excess > kRoundingTolerance * s.scale && s.phi_unit > 0.0) C = std::max(C, s.excess / s.phi_unit);
    }
    rep.phi_constant = C;

    const Expectations val = average(trace_replicates(cfg, replicates, 2));
    rep.rounds_checked = static_cast<std::size_t>(cfg.rounds);
    for (std::size_t t = 0; t < val.rounds; ++t) {
        const Slack s = round_slack(val, t, k, w0_dist);
        if (s.excess <= C * s.phi_unit + kRoundingTolerance * s.scale) ++rep.rounds_satisfied;
    }
    rep.satisfaction_rate = rep.rounds_checked
                                ? static_cast<double>(rep.rounds_satisfied) / static_cast<double>(rep.rounds_checked)
                                : 1.0;
    rep.last_constants = k;
    if (val.rounds > 0) {
        rep.last_constants.sum_p_sq = val.sum_p_sq.back();
        rep.last_constants.past_mass = std::sqrt(val.past_sq.back());
    }
    std::ostringstream msg;
    msg << "satisfied " << rep.rounds_satisfied << "/" << rep.rounds_checked << " rounds";
    if (val.any_diverged) msg << " (some replicates diverged)";
    rep.message = msg.str();
    return rep;
}

std::string summary_line(const ExperimentConfig& cfg, const std::vector<RunRecord>& records,
                         std::size_t smoothness_window) {
    const auto series = losses(records);
    const double smooth = series.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : smoothness_metric(series, std::min(smoothness_window, series.size()));
    const bool diverged = !records.empty() && records.back().diverged;
    return "setting=" + cfg.name + " algo=" + algorithm_name(cfg.algorithm) +
           " final_loss=" + format_double(final_loss(records)) + " smoothness=" + format_double(smooth) +
           " diverged=" + (diverged ? "true" : "false");
}

}  // namespace cflsim
