#include "cflsim/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cflsim/errors.hpp"

namespace cflsim {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

/// Strict view of one JSON object: every key must be read exactly once, and
/// type mismatches are collected rather than thrown one at a time.
class Section {
public:
    Section(const json& j, std::string path, std::vector<std::string>& errs)
        : j_(j), path_(std::move(path)), errs_(errs) {
        if (!j_.is_object()) errs_.push_back(where() + "expected an object");
    }

    bool has(const char* key) const { return j_.is_object() && j_.contains(key); }

    void read(const char* key, int& out) {
        if (const json* v = take(key)) {
            if (v->is_number_integer()) out = v->get<int>();
            else errs_.push_back(where(key) + "expected an integer");
        }
    }
    void read(const char* key, std::size_t& out) {
        if (const json* v = take(key)) {
            if (v->is_number_unsigned()) out = v->get<std::size_t>();
            else errs_.push_back(where(key) + "expected a non-negative integer");
        }
    }
    void read(const char* key, double& out) {
        if (const json* v = take(key)) {
            if (v->is_number()) out = v->get<double>();
            else errs_.push_back(where(key) + "expected a number");
        }
    }
    void read(const char* key, std::string& out) {
        if (const json* v = take(key)) {
            if (v->is_string()) out = v->get<std::string>();
            else errs_.push_back(where(key) + "expected a string");
        }
    }
    void read(const char* key, std::vector<double>& out) {
        if (const json* v = take(key)) {
            if (!v->is_array()) {
                errs_.push_back(where(key) + "expected an array of numbers");
                return;
            }
            out.clear();
            for (const auto& x : *v) {
                if (!x.is_number()) {
                    errs_.push_back(where(key) + "expected an array of numbers");
                    return;
                }
                out.push_back(x.get<double>());
            }
        }
    }

    std::optional<Section> child(const char* key) {
        if (const json* v = take(key)) return Section(*v, path_ + key + ".", errs_);
        return std::nullopt;
    }

    void finish() const {
        if (!j_.is_object()) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) errs_.push_back("unknown key '" + path_ + it.key() + "'");
    }

    std::string where(const char* key = nullptr) const {
        std::string p = path_ + (key ? key : "");
        if (!p.empty() && p.back() == '.') p.pop_back();
        return (p.empty() ? std::string("config") : p) + ": ";
    }

private:
    const json* take(const char* key) {
        if (!has(key)) return nullptr;
        seen_.insert(key);
        return &j_.at(key);
    }

    const json& j_;
    std::string path_;
    std::vector<std::string>& errs_;
    std::set<std::string> seen_;
};

json parse_strict(const std::string& text) {
    std::vector<std::set<std::string>> keys;
    std::vector<std::string> path;
    std::string pending;
    json::parser_callback_t cb = [&](int, json::parse_event_t ev, json& parsed) {
        switch (ev) {
            case json::parse_event_t::object_start:
                keys.emplace_back();
                path.push_back(pending);
                break;
            case json::parse_event_t::object_end:
                keys.pop_back();
                path.pop_back();
                break;
            case json::parse_event_t::key: {
                pending = parsed.get<std::string>();
                if (!keys.back().insert(pending).second) {
                    std::string where;
                    for (const auto& p : path)
                        if (!p.empty()) where += p + ".";
                    throw ConfigError("duplicate key '" + where + pending + "'");
                }
                break;
            }
            default:
                break;
        }
        return true;
    };
    try {
        return json::parse(text, cb);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
}

Scenario parse_scenario(const std::string& s, std::vector<std::string>& errs) {
    if (s == "quadratic") return Scenario::Quadratic;
    if (s == "least_squares") return Scenario::LeastSquares;
    if (s == "stateless") return Scenario::Stateless;
    errs.push_back("scenario: unknown value '" + s + "'");
    return Scenario::Quadratic;
}

AlgorithmSpec parse_algorithm(Section& sec, const DriftConfig& drift, std::vector<std::string>& errs) {
    std::string kind;
    sec.read("kind", kind);
    if (kind == "fedavg") {
        sec.finish();
        return FedAvgSpec{};
    }
    if (kind == "fedprox") {
        FedProxSpec p;
        sec.read("prox_mu", p.prox_mu);
        sec.finish();
        return p;
    }
    if (kind != "cfl") {
        errs.push_back("algorithm.kind: expected fedavg, fedprox or cfl, got '" + kind + "'");
        return FedAvgSpec{};
    }

    CflSpec c;
    sec.read("history_capacity", c.history_capacity);
    if (auto a = sec.child("approximator")) {
        std::string ak;
        a->read("kind", ak);
        if (ak == "taylor") {
            TaylorApprox t;
            a->read("eps", t.eps);
            c.approximator = t;
        } else if (ak == "coreset") {
            CoreSetApprox cs;
            std::string method = "naive";
            a->read("m", cs.m);
            a->read("method", method);
            if (method == "naive") cs.method = CoreSetMethod::Naive;
            else if (method == "icarl") cs.method = CoreSetMethod::Icarl;
            else errs.push_back("algorithm.approximator.method: expected naive or icarl");
            c.approximator = cs;
        } else if (ak == "mcmc") {
            McmcApprox m;
            a->read("samples", m.samples);
            a->read("eta", m.eta);
            a->read("sigma", m.sigma);
            a->read("steps", m.steps);
            c.approximator = m;
        } else {
            errs.push_back("algorithm.approximator.kind: expected taylor, coreset or mcmc, got '" + ak + "'");
        }
        a->finish();
    }
    // D defaults to the time-drift scale sqrt(E|xi|^2).
    Theorem2Weights t2{0.0, std::sqrt(drift.time_var)};
    c.weights = t2;
    if (auto w = sec.child("weights")) {
        std::string mode;
        w->read("mode", mode);
        if (mode == "theorem2") {
            w->read("R", t2.R);
            w->read("D", t2.D);
            c.weights = t2;
        } else if (mode == "uniform") {
            c.weights = UniformWeights{};
        } else if (mode == "explicit") {
            ExplicitWeights e;
            w->read("p", e.p);
            c.weights = e;
        } else {
            errs.push_back("algorithm.weights.mode: expected theorem2, uniform or explicit, got '" + mode + "'");
        }
        w->finish();
    }
    sec.finish();
    return c;
}

ordered_json algorithm_json(const AlgorithmSpec& spec) {
    return std::visit(
        overloaded{
            [](const FedAvgSpec&) { return ordered_json{{"kind", "fedavg"}}; },
            [](const FedProxSpec& p) { return ordered_json{{"kind", "fedprox"}, {"prox_mu", p.prox_mu}}; },
            [](const CflSpec& c) {
                ordered_json j{{"kind", "cfl"}};
                j["approximator"] = std::visit(
                    overloaded{[](const TaylorApprox& t) { return ordered_json{{"kind", "taylor"}, {"eps", t.eps}}; },
                               [](const CoreSetApprox& cs) {
                                   return ordered_json{{"kind", "coreset"},
                                                       {"m", cs.m},
                                                       {"method", cs.method == CoreSetMethod::Naive ? "naive" : "icarl"}};
                               },
                               [](const McmcApprox& m) {
                                   return ordered_json{{"kind", "mcmc"}, {"samples", m.samples}, {"eta", m.eta},
                                                       {"sigma", m.sigma}, {"steps", m.steps}};
                               }},
                    c.approximator);
                j["weights"] = std::visit(
                    overloaded{[](const Theorem2Weights& w) {
                                   return ordered_json{{"mode", "theorem2"}, {"R", w.R}, {"D", w.D}};
                               },
                               [](const UniformWeights&) { return ordered_json{{"mode", "uniform"}}; },
                               [](const ExplicitWeights& w) { return ordered_json{{"mode", "explicit"}, {"p", w.p}}; }},
                    c.weights);
                j["history_capacity"] = c.history_capacity;
                return j;
            }},
        spec);
}

std::string canonical_preset(const std::string& name) {
    return name.rfind("nqm-", 0) == 0 ? name.substr(4) : name;
}

}  // namespace

std::string to_string(Scenario s) {
    switch (s) {
        case Scenario::Quadratic: return "quadratic";
        case Scenario::LeastSquares: return "least_squares";
        case Scenario::Stateless: return "stateless";
    }
    return "?";
}

void ExperimentConfig::validate() const {
    std::vector<std::string> errs;
    if (d < 2) errs.emplace_back("model.d must be >= 2");
    if (!(mu >= 0.0)) errs.emplace_back("model.mu must be >= 0");
    if (!(L >= mu)) errs.emplace_back("model.L must be >= model.mu");
    if (rounds < 0) errs.emplace_back("protocol.rounds must be >= 0");
    if (clients_per_round < 1) errs.emplace_back("protocol.clients_per_round must be >= 1");
    if (population < 1) errs.emplace_back("protocol.population must be >= 1");
    if (clients_per_round > population && scenario != Scenario::Stateless)
        errs.emplace_back("protocol.clients_per_round must not exceed protocol.population");
    if (local_steps < 1) errs.emplace_back("protocol.local_steps must be >= 1");
    if (!(eta_l >= 0.0)) errs.emplace_back("protocol.eta_l must be >= 0");
    if (!(eta_g > 0.0)) errs.emplace_back("protocol.eta_g must be > 0");
    if (!(drift.client_var >= 0.0)) errs.emplace_back("drift.client_var must be >= 0");
    if (!(drift.time_var >= 0.0)) errs.emplace_back("drift.time_var must be >= 0");
    if (!(drift.sgd_var >= 0.0)) errs.emplace_back("drift.sgd_var must be >= 0");
    if (drift.d != d) errs.emplace_back("drift dimension must equal model.d");
    try {
        cflsim::validate(algorithm);
    } catch (const ConfigError& e) {
        errs.insert(errs.end(), e.violations().begin(), e.violations().end());
    }
    if (const auto* c = std::get_if<CflSpec>(&algorithm)) {
        const bool needs_data = !std::holds_alternative<TaylorApprox>(c->approximator);
        if (needs_data && scenario != Scenario::LeastSquares)
            errs.emplace_back("core-set and MCMC approximators need the least_squares scenario");
        if (scenario == Scenario::Stateless && std::holds_alternative<CoreSetApprox>(c->approximator))
            errs.emplace_back("core sets are not applicable to stateless clients");
    }
    if (scenario == Scenario::LeastSquares) {
        const auto& g = data;
        if (g.classes < 1) errs.emplace_back("data.classes must be >= 1");
        if (g.items_per_class < 1) errs.emplace_back("data.items_per_class must be >= 1");
        if (g.subsets_per_client < 1) errs.emplace_back("data.subsets_per_client must be >= 1");
        if (g.items_per_client < g.subsets_per_client)
            errs.emplace_back("data.items_per_client must be >= data.subsets_per_client");
        if (static_cast<long long>(g.items_per_client) * population >
            static_cast<long long>(g.classes) * g.items_per_class)
            errs.emplace_back("data: population x items_per_client exceeds the pool size");
        if (!(g.alpha > 0.0)) errs.emplace_back("data.alpha must be > 0");
        if (!(g.beta > 0.0)) errs.emplace_back("data.beta must be > 0");
        if (g.step < 1) errs.emplace_back("data.step must be >= 1");
        if (g.window < 1) errs.emplace_back("data.window must be >= 1");
        if (g.subsets_per_client >= 1 && g.window > (g.items_per_client / g.subsets_per_client) * g.subsets_per_client)
            errs.emplace_back("data.window exceeds the items a client holds");
        if (!(g.class_spread >= 0.0) || !(g.feature_sd >= 0.0) || !(g.offset_sd >= 0.0) || !(g.target_noise >= 0.0))
            errs.emplace_back("data: spreads and noise levels must be >= 0");
    }
    if (!errs.empty()) throw ConfigError(std::move(errs));
}

ExperimentConfig parse_config(const std::string& text) {
    const json root = parse_strict(text);
    std::vector<std::string> errs;
    Section top(root, "", errs);

    ExperimentConfig cfg;
    std::string preset_name;
    top.read("preset", preset_name);
    if (!preset_name.empty()) cfg = preset(preset_name);

    top.read("name", cfg.name);
    std::string scenario;
    top.read("scenario", scenario);
    if (!scenario.empty()) cfg.scenario = parse_scenario(scenario, errs);
    top.read("seed", cfg.seed);
    if (top.has("objective_seed")) {
        std::uint64_t s = 0;
        top.read("objective_seed", s);
        cfg.objective_seed = s;
    }
    if (auto m = top.child("model")) {
        m->read("d", cfg.d);
        m->read("mu", cfg.mu);
        m->read("L", cfg.L);
        m->finish();
    }
    if (auto p = top.child("protocol")) {
        p->read("rounds", cfg.rounds);
        p->read("clients_per_round", cfg.clients_per_round);
        p->read("population", cfg.population);
        p->read("local_steps", cfg.local_steps);
        p->read("eta_l", cfg.eta_l);
        p->read("eta_g", cfg.eta_g);
        p->finish();
    }
    if (auto dr = top.child("drift")) {
        dr->read("client_var", cfg.drift.client_var);
        dr->read("time_var", cfg.drift.time_var);
        dr->read("sgd_var", cfg.drift.sgd_var);
        dr->finish();
    }
    cfg.drift.d = cfg.d;
    if (auto a = top.child("algorithm")) cfg.algorithm = parse_algorithm(*a, cfg.drift, errs);
    if (auto g = top.child("data")) {
        auto& dc = cfg.data;
        g->read("classes", dc.classes);
        g->read("items_per_class", dc.items_per_class);
        g->read("class_spread", dc.class_spread);
        g->read("feature_sd", dc.feature_sd);
        g->read("offset_sd", dc.offset_sd);
        g->read("target_noise", dc.target_noise);
        g->read("items_per_client", dc.items_per_client);
        g->read("subsets_per_client", dc.subsets_per_client);
        g->read("alpha", dc.alpha);
        g->read("beta", dc.beta);
        g->read("window", dc.window);
        g->read("step", dc.step);
        g->finish();
    }
    std::string exec;
    top.read("execution", exec);
    if (exec == "serial") cfg.execution = Execution::Serial;
    else if (exec == "parallel") cfg.execution = Execution::Parallel;
    else if (!exec.empty()) errs.push_back("execution: expected serial or parallel, got '" + exec + "'");
    std::string kernel;
    top.read("kernel", kernel);
    if (kernel == "fused") cfg.kernel = KernelMode::Fused;
    else if (kernel == "reference") cfg.kernel = KernelMode::Reference;
    else if (!kernel.empty()) errs.push_back("kernel: expected fused or reference, got '" + kernel + "'");
    top.finish();

    if (!errs.empty()) throw ConfigError(std::move(errs));
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    ordered_json j;
    j["name"] = cfg.name;
    j["scenario"] = to_string(cfg.scenario);
    j["seed"] = cfg.seed;
    if (cfg.objective_seed) j["objective_seed"] = *cfg.objective_seed;
    j["model"] = {{"d", cfg.d}, {"mu", cfg.mu}, {"L", cfg.L}};
    j["protocol"] = {{"rounds", cfg.rounds},           {"clients_per_round", cfg.clients_per_round},
                     {"population", cfg.population},   {"local_steps", cfg.local_steps},
                     {"eta_l", cfg.eta_l},             {"eta_g", cfg.eta_g}};
    j["drift"] = {{"client_var", cfg.drift.client_var}, {"time_var", cfg.drift.time_var},
                  {"sgd_var", cfg.drift.sgd_var}};
    j["algorithm"] = algorithm_json(cfg.algorithm);
    const auto& dc = cfg.data;
    j["data"] = {{"classes", dc.classes},
                 {"items_per_class", dc.items_per_class},
                 {"class_spread", dc.class_spread},
                 {"feature_sd", dc.feature_sd},
                 {"offset_sd", dc.offset_sd},
                 {"target_noise", dc.target_noise},
                 {"items_per_client", dc.items_per_client},
                 {"subsets_per_client", dc.subsets_per_client},
                 {"alpha", dc.alpha},
                 {"beta", dc.beta},
                 {"window", dc.window},
                 {"step", dc.step}};
    j["execution"] = cfg.execution == Execution::Serial ? "serial" : "parallel";
    j["kernel"] = cfg.kernel == KernelMode::Fused ? "fused" : "reference";
    return j.dump(2) + "\n";
}

std::vector<std::string> preset_names() {
    std::vector<std::string> names;
    for (const char* l : {"smallL", "largeL"})
        for (const char* c : {"sc", "gc"})
            for (const char* r : {"smalldrift", "bigdrift"})
                names.push_back(std::string(l) + "-" + c + "-" + r);
    return names;
}

ExperimentConfig preset(const std::string& name) {
    const std::string key = canonical_preset(name);
    std::string l, c, r;
    {
        std::istringstream ss(key);
        std::getline(ss, l, '-');
        std::getline(ss, c, '-');
        std::getline(ss, r, '-');
    }
    const bool ok = (l == "smallL" || l == "largeL") && (c == "sc" || c == "gc") &&
                    (r == "smalldrift" || r == "bigdrift");
    if (!ok || key != l + "-" + c + "-" + r) throw ConfigError("unknown preset '" + name + "'");

    ExperimentConfig cfg;
    cfg.name = key;
    cfg.scenario = Scenario::Quadratic;
    cfg.d = 10;
    cfg.L = l == "largeL" ? 20.0 : 5.0;
    cfg.mu = c == "sc" ? 1.0 : 0.0;
    cfg.drift = DriftConfig{0.01, r == "bigdrift" ? 100.0 : 0.01, 1e-5, cfg.d};
    cfg.rounds = 500;
    cfg.clients_per_round = 7;
    cfg.population = 7;
    cfg.local_steps = 5;
    cfg.eta_l = 0.01;
    cfg.eta_g = 1.0;
    cfg.algorithm = CflSpec{TaylorApprox{0.0}, Theorem2Weights{0.0, std::sqrt(cfg.drift.time_var)},
                            HistoryBuffer::kDefaultCapacity};
    return cfg;
}

}  // namespace cflsim
