// Per-round cost: serial vs OpenMP client execution, fused vs reference kernel.
// Arguments: {population, dimension}. Every client is sampled each round.

#include <benchmark/benchmark.h>

#include "cflsim/config.hpp"
#include "cflsim/simulation.hpp"

namespace {

using namespace cflsim;

void round_bench(benchmark::State& state, Execution exec, KernelMode kernel) {
    ExperimentConfig cfg = preset("smallL-sc-bigdrift");
    cfg.population = static_cast<int>(state.range(0));
    cfg.clients_per_round = cfg.population;
    cfg.d = static_cast<int>(state.range(1));
    cfg.drift.d = cfg.d;
    cfg.rounds = 1 << 30;
    cfg.execution = exec;
    cfg.kernel = kernel;
    Simulation sim(cfg);
    // Fill the history so every round sees a full buffer.
    for (int i = 0; i < 40; ++i) sim.step();
    for (auto _ : state) benchmark::DoNotOptimize(sim.step().loss);
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void apply_args(benchmark::internal::Benchmark* b) {
    b->ArgNames({"clients", "d"});
    for (int p : {7, 32})
        for (int d : {10, 50}) b->Args({p, d});
    b->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK_CAPTURE(round_bench, serial_fused, Execution::Serial, KernelMode::Fused)->Apply(apply_args);
BENCHMARK_CAPTURE(round_bench, parallel_fused, Execution::Parallel, KernelMode::Fused)->Apply(apply_args);
BENCHMARK_CAPTURE(round_bench, serial_reference, Execution::Serial, KernelMode::Reference)->Apply(apply_args);
BENCHMARK_CAPTURE(round_bench, parallel_reference, Execution::Parallel, KernelMode::Reference)->Apply(apply_args);

BENCHMARK_MAIN();
