#include <benchmark/benchmark.h>

#include "noisyrl/bandit.hpp"

using namespace nrl;

namespace {

void replicas(benchmark::State &state, Execution exec) {
    SimConfig cfg;
    cfg.K = 3;
    cfg.M = 2;
    cfg.G = 8;
    cfg.eta = 1e-2;
    cfg.steps = 2000;
    cfg.record_every = 500;
    cfg.seed = 11;
    const NoiseSchedule noise(NoiseSpec(0.1, 0.2));
    const ProbVector start = recompose(make_block(0.5, cfg.K, cfg.M));
    const auto n = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_replicas(cfg, noise, start, n, exec));
    state.SetItemsProcessed(state.iterations() * state.range(0) * std::int64_t(cfg.steps));
}

}  // namespace

BENCHMARK_CAPTURE(replicas, serial, Execution::serial)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK_CAPTURE(replicas, parallel, Execution::parallel)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
