#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cflsim/config.hpp"
#include "cflsim/csv.hpp"
#include "cflsim/data_partition.hpp"
#include "cflsim/errors.hpp"
#include "cflsim/experiment.hpp"
#include "cflsim/simulation.hpp"

namespace fs = std::filesystem;
using namespace cflsim;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kCheckFailed = 3;

fs::path output_path(const std::string& out, const std::string& fallback_name) {
    if (!out.empty()) return out;
    const char* dir = std::getenv("CFLSIM_OUTPUT_DIR");
    return fs::path(dir && *dir ? dir : ".") / fallback_name;
}

struct Overrides {
    std::string algo;
    double lr = -1.0;
    long long seed = -1;
    int rounds = -1;
    bool serial = false;

    void add_to(CLI::App* app) {
        app->add_option("--algo", algo, "Replace the algorithm: fedavg, fedprox or cfl")
            ->check(CLI::IsMember({"fedavg", "fedprox", "cfl"}));
        app->add_option("--lr", lr, "Local learning rate");
        app->add_option("--seed", seed, "Master seed");
        app->add_option("--rounds", rounds, "Number of rounds");
        app->add_flag("--serial", serial, "Run clients one after another");
    }

    void apply(ExperimentConfig& cfg) const {
        if (algo == "fedavg") cfg.algorithm = FedAvgSpec{};
        else if (algo == "fedprox") cfg.algorithm = FedProxSpec{};
        else if (algo == "cfl" && !is_cfl(cfg.algorithm))
            cfg.algorithm = CflSpec{TaylorApprox{}, Theorem2Weights{0.0, std::sqrt(cfg.drift.time_var)}};
        if (lr >= 0.0) cfg.eta_l = lr;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        if (rounds >= 0) cfg.rounds = rounds;
        if (serial) cfg.execution = Execution::Serial;
        cfg.validate();
    }
};

void run_and_report(const ExperimentConfig& cfg, const std::string& out) {
    const auto records = run_experiment(cfg);
    const fs::path path =
        output_path(out, cfg.name + "-" + algorithm_name(cfg.algorithm) + "-seed" + std::to_string(cfg.seed) + ".csv");
    emit_csv(records, path);
    std::cout << summary_line(cfg, records) << "\n";
}

template <class T>
std::vector<T> parse_list(const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            if constexpr (std::is_floating_point_v<T>) out.push_back(std::stod(item, &pos));
            else out.push_back(static_cast<T>(std::stoull(item, &pos)));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse list entry '" + item + "'");
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual federated learning simulator"};
    app.require_subcommand(1);

    std::string config_path, preset_name, out, lrs_text, seeds_text, check_kind;
    bool preset_run = false;
    std::size_t replicates = 200;
    Overrides run_over, preset_over, check_over;

    auto* run = app.add_subcommand("run", "Run one experiment and write its CSV");
    run->add_option("config", config_path, "Config file")->required();
    run->add_option("--out", out, "CSV path");
    run_over.add_to(run);

    auto* pre = app.add_subcommand("preset", "Print a preset config; --run runs it");
    pre->add_option("name", preset_name, "Preset name")->required();
    pre->add_flag("--run", preset_run, "Run the preset");
    pre->add_option("--out", out, "CSV path");
    preset_over.add_to(pre);

    auto* sweep = app.add_subcommand("sweep", "Learning-rate sweep");
    sweep->add_option("config", config_path, "Config file")->required();
    sweep->add_option("--lrs", lrs_text, "Comma-separated learning rates (default grid if omitted)");
    sweep->add_option("--seeds", seeds_text, "Comma-separated seeds")->required();

    auto* check = app.add_subcommand("check", "Numeric checks");
    check->add_option("kind", check_kind, "Check to run")->required()->check(CLI::IsMember({"theorem1"}));
    check->add_option("config", config_path, "Config file")->required();
    check->add_option("--replicates", replicates, "Seed replicates");
    check_over.add_to(check);

    auto* part = app.add_subcommand("partition", "Write the data partition manifest");
    part->add_option("config", config_path, "Config file")->required();
    part->add_option("--out", out, "Manifest path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) {
            ExperimentConfig cfg = load_config(config_path);
            run_over.apply(cfg);
            run_and_report(cfg, out);
        } else if (*pre) {
            ExperimentConfig cfg = preset(preset_name);
            preset_over.apply(cfg);
            if (preset_run) run_and_report(cfg, out);
            else std::cout << serialize_config(cfg);
        } else if (*sweep) {
            const ExperimentConfig cfg = load_config(config_path);
            const auto lrs = lrs_text.empty() ? default_lr_grid() : parse_list<double>(lrs_text);
            const auto seeds = parse_list<std::uint64_t>(seeds_text);
            const SweepResult res = lr_sweep(cfg, lrs, seeds);
            for (const auto& r : res.rows)
                std::cout << "lr=" << format_double(r.lr) << " mean_final_loss=" << format_double(r.mean_final_loss)
                          << " divergence_fraction=" << format_double(r.divergence_fraction)
                          << " improving=" << (r.improving ? "true" : "false") << "\n";
            std::cout << "best_lr=" << (res.best_lr ? format_double(*res.best_lr) : "none") << "\n";
        } else if (*check) {
            ExperimentConfig cfg = load_config(config_path);
            check_over.apply(cfg);
            const Theorem1Report rep = theorem1_check(cfg, replicates);
            const bool skipped = rep.status == Theorem1Report::Status::Skipped;
            std::cout << "check=theorem1 status=" << (skipped ? "skipped" : rep.passed() ? "pass" : "fail")
                      << " rate=" << format_double(rep.satisfaction_rate)
                      << " phi_constant=" << format_double(rep.phi_constant) << " R=" << format_double(rep.R)
                      << " c1=" << format_double(rep.last_constants.c1())
                      << " c2=" << format_double(rep.last_constants.c2()) << " eta=" << format_double(rep.last_constants.eta())
                      << "\n"
                      << rep.message << "\n";
            if (!skipped && !rep.passed()) return kCheckFailed;
        } else if (*part) {
            const ExperimentConfig cfg = load_config(config_path);
            if (cfg.scenario != Scenario::LeastSquares)
                throw ConfigError("partition: config must use the least_squares scenario");
            const Simulation sim(cfg);
            const fs::path path = output_path(out, cfg.name + "-partition.txt");
            std::ofstream f(path, std::ios::binary | std::ios::trunc);
            if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
            write_manifest(sim.manifest(), f);
            std::cout << "wrote " << sim.manifest().clients() << " clients to " << path.string() << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kOk;
}
