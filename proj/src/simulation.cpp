#include "cflsim/simulation.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "cflsim/errors.hpp"
#include "cflsim/rng.hpp"

namespace cflsim {
namespace {

Vector gaussian_vector(int d, double sd, DerivedStream& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vector v(d);
    for (int j = 0; j < d; ++j) v[j] = sd * n(rng);
    return v;
}

bool loss_diverged(double loss) { return !std::isfinite(loss) || loss > kDivergenceThreshold; }

// Average of one round's stateless artifacts, re-expressed around anchor 0 so
// anchors from different clients can be pooled.
HistoryEntry average_artifacts(const std::vector<const HistoryEntry*>& entries, int origin) {
    const Eigen::Index d = entries.front()->approx.anchor.size();
    const double n = static_cast<double>(entries.size());
    ApproxObjective avg{Vector::Zero(d), Vector::Zero(d), Matrix::Zero(d, d), origin};
    Matrix A = Matrix::Zero(d, d);
    Vector b = Vector::Zero(d);
    double c = 0.0;
    bool have_truth = true;
    for (const auto* e : entries) {
        const auto& a = e->approx;
        avg.grad_at_anchor += (a.grad_at_anchor - a.hessian_at_anchor * a.anchor) / n;
        avg.hessian_at_anchor += a.hessian_at_anchor / n;
        if (e->truth) {
            A += e->truth->A / n;
            b += e->truth->b / n;
            c += e->truth->c / n;
        } else {
            have_truth = false;
        }
    }
    HistoryEntry out;
    out.approx = std::move(avg);
    if (have_truth) out.truth = make_quadratic(std::move(A), std::move(b), c);
    return out;
}

}  // namespace

SampleSet SyntheticData::gather(const std::vector<ItemId>& ids) const {
    SampleSet s;
    s.features.reserve(ids.size());
    s.targets.reserve(ids.size());
    for (ItemId id : ids) {
        s.features.push_back(features.at(id));
        s.targets.push_back(targets.at(id));
    }
    return s;
}

SyntheticData generate_data(const DataConfig& cfg, int d, std::uint64_t seed) {
    DerivedStream rng(seed, StreamTag::Data);
    std::normal_distribution<double> n(0.0, 1.0);
    SyntheticData data;
    data.w_true = gaussian_vector(d, 1.0, rng);
    const std::size_t total = static_cast<std::size_t>(cfg.classes) * static_cast<std::size_t>(cfg.items_per_class);
    data.features.reserve(total);
    data.targets.reserve(total);
    data.labels.reserve(total);
    for (int c = 0; c < cfg.classes; ++c) {
        const Vector mean = gaussian_vector(d, cfg.class_spread, rng);
        const double offset = cfg.offset_sd * n(rng);
        for (int j = 0; j < cfg.items_per_class; ++j) {
            Vector x = mean + gaussian_vector(d, cfg.feature_sd, rng);
            const double y = x.dot(data.w_true) + offset + cfg.target_noise * n(rng);
            data.features.push_back(std::move(x));
            data.targets.push_back(y);
            data.labels.push_back(c);
        }
    }
    return data;
}

Simulation::Simulation(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.drift.d = cfg_.d;
    cfg_.validate();
    const auto* cfl = std::get_if<CflSpec>(&cfg_.algorithm);
    const std::size_t capacity = cfl ? cfl->history_capacity : HistoryBuffer::kDefaultCapacity;

    server_.w = Vector::Zero(cfg_.d);
    server_.seed = cfg_.seed;
    server_history_ = HistoryBuffer(capacity);

    if (cfg_.scenario == Scenario::LeastSquares) {
        setup_least_squares();
    } else {
        global_ = build_quadratic(cfg_.d, cfg_.mu, cfg_.L, cfg_.effective_objective_seed());
    }
    if (cfg_.scenario != Scenario::Stateless) {
        clients_.reserve(static_cast<std::size_t>(cfg_.population));
        for (int i = 0; i < cfg_.population; ++i)
            clients_.emplace_back(static_cast<std::uint64_t>(i), cfg_.seed, cfg_.drift, capacity);
    }
    try {
        optimum_ = exact_optimum(global_);
    } catch (const UnboundedError&) {
        optimum_.reset();
    }
    initial_loss_ = loss_metric(global_, server_.w);
}

void Simulation::setup_least_squares() {
    const auto& dc = cfg_.data;
    const std::uint64_t problem_seed = cfg_.effective_objective_seed();
    data_ = generate_data(dc, cfg_.d, problem_seed);

    std::vector<std::size_t> counts(static_cast<std::size_t>(dc.classes), static_cast<std::size_t>(dc.items_per_class));
    LabeledPool pool = LabeledPool::from_counts(counts);
    DerivedStream rng(problem_seed, StreamTag::Partition);
    manifest_ = hierarchical_split(pool, data_.labels, static_cast<std::size_t>(cfg_.population),
                                   static_cast<std::size_t>(dc.subsets_per_client),
                                   static_cast<std::size_t>(dc.items_per_client), dc.alpha, dc.beta, rng);

    std::vector<ItemId> all;
    for (std::size_t i = 0; i < manifest_.clients(); ++i) {
        const auto seq = manifest_.sequence(i);
        all.insert(all.end(), seq.begin(), seq.end());
    }
    global_ = fit_least_squares(data_.gather(all));
    round_data_.resize(manifest_.clients());
}

void Simulation::prepare_round_data(std::uint64_t round) {
    const auto& dc = cfg_.data;
    for (std::size_t i = 0; i < manifest_.clients(); ++i) {
        const auto window = overlap_window(manifest_.sequence(i), static_cast<std::size_t>(dc.window),
                                           static_cast<std::size_t>(dc.step), round - 1);
        round_data_[i].samples = data_.gather(window);
        round_data_[i].objective = fit_least_squares(round_data_[i].samples);
    }
}

RoundOutcome Simulation::stateless_round() {
    const std::uint64_t round = server_.round + 1;
    const std::size_t S = static_cast<std::size_t>(cfg_.clients_per_round);
    const auto* cfl = std::get_if<CflSpec>(&cfg_.algorithm);

    // Fresh clients for every (round, slot); each starts from the server's history.
    std::vector<ClientState> fresh;
    fresh.reserve(S);
    for (std::size_t j = 0; j < S; ++j) {
        fresh.emplace_back((round - 1) * S + j, cfg_.seed, cfg_.drift, server_history_.capacity());
        fresh.back().history = server_history_;
    }

    RoundParams params{S, cfg_.local_steps, cfg_.eta_l, cfg_.eta_g, cfg_.execution, cfg_.kernel};
    TaskProvider tasks = [this](const ClientState&, std::uint64_t) { return LocalTask{&global_, nullptr, {}}; };
    RoundOutcome out = run_round(server_, fresh, cfg_.algorithm, cfg_.drift, params, tasks);

    if (cfl && !out.diverged) {
        std::vector<const HistoryEntry*> produced;
        for (const auto& c : fresh)
            if (c.history.size() > 0 && c.history[c.history.size() - 1].approx.origin_round == static_cast<int>(round))
                produced.push_back(&c.history[c.history.size() - 1]);
        if (!produced.empty()) server_history_.push(average_artifacts(produced, static_cast<int>(round)));
    }
    return out;
}

RunRecord Simulation::step() {
    if (finished()) throw std::logic_error("Simulation::step: run is finished");

    RoundOutcome out;
    if (cfg_.scenario == Scenario::Stateless) {
        out = stateless_round();
    } else {
        const std::uint64_t round = server_.round + 1;
        RoundParams params{static_cast<std::size_t>(cfg_.clients_per_round),
                           cfg_.local_steps,
                           cfg_.eta_l,
                           cfg_.eta_g,
                           cfg_.execution,
                           cfg_.kernel};
        TaskProvider tasks;
        if (cfg_.scenario == Scenario::LeastSquares) {
            prepare_round_data(round);
            tasks = [this](const ClientState& c, std::uint64_t) {
                const RoundData& rd = round_data_[c.id];
                const Vector& w_true = data_.w_true;
                return LocalTask{&rd.objective, &rd.samples, [&w_true](const Vector& x) { return x.dot(w_true); }};
            };
        } else {
            tasks = [this](const ClientState&, std::uint64_t) { return LocalTask{&global_, nullptr, {}}; };
        }
        out = run_round(server_, clients_, cfg_.algorithm, cfg_.drift, params, tasks);
    }

    RunRecord rec;
    rec.round = server_.round;
    rec.info_loss = out.avg_info_loss;
    if (out.diverged) {
        rec.loss = std::numeric_limits<double>::infinity();
        rec.diverged = true;
    } else {
        rec.loss = loss_metric(global_, server_.w);
        rec.diverged = loss_diverged(rec.loss);
        if (optimum_ && cfg_.scenario != Scenario::LeastSquares) rec.dist_to_opt = (server_.w - *optimum_).norm();
    }
    diverged_ = rec.diverged;
    last_ = std::move(out);
    return rec;
}

std::vector<RunRecord> Simulation::run() {
    std::vector<RunRecord> records;
    records.reserve(static_cast<std::size_t>(std::max(0, cfg_.rounds - round())));
    while (!finished()) records.push_back(step());
    return records;
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg) {
    Simulation sim(cfg);
    return sim.run();
}

}  // namespace cflsim
