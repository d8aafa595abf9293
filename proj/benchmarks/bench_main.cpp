#include "synthreg/adversary.hpp"
#include "synthreg/protocol.hpp"
#include "synthreg/simplex.hpp"

#include <benchmark/benchmark.h>

using namespace synthreg;

namespace {

Panel panel_of(Index N, Index T) {
  GeneratorSpec s;
  s.kind = GeneratorKind::factor_model;
  s.units = N;
  s.periods = T;
  s.seed = 7;
  return generate_panel(s);
}

StrategyConfig config_of(StrategyKind kind) {
  StrategyConfig c;
  c.kind = kind;
  return c;
}

void BM_SimplexLs(benchmark::State& state) {
  const auto N = static_cast<Index>(state.range(0));
  const Panel p = panel_of(N, 200);
  LeastSquaresStats stats(N);
  for (Index t = 0; t < p.periods(); ++t) stats.add(p.treated[t], p.controls.col(t));
  for (auto _ : state) benchmark::DoNotOptimize(solve_simplex_ls(stats));
}
BENCHMARK(BM_SimplexLs)->Arg(5)->Arg(20)->Arg(50);

void BM_Protocol(benchmark::State& state, StrategyKind kind) {
  const Panel p = panel_of(static_cast<Index>(state.range(0)), static_cast<Index>(state.range(1)));
  const StrategyConfig c = config_of(kind);
  for (auto _ : state) benchmark::DoNotOptimize(run_protocol(c, p));
  state.SetItemsProcessed(state.iterations() * p.periods());
}
BENCHMARK_CAPTURE(BM_Protocol, ftl, StrategyKind::ftl)->Args({5, 100})->Args({20, 400});
BENCHMARK_CAPTURE(BM_Protocol, differenced, StrategyKind::differenced_sc)->Args({5, 100})->Args({20, 400});
BENCHMARK_CAPTURE(BM_Protocol, ftrl, StrategyKind::ftrl)->Args({5, 100})->Args({20, 400});
BENCHMARK_CAPTURE(BM_Protocol, flh, StrategyKind::flh)->Args({4, 100})->Args({4, 200});

void BM_AdaptiveRegret(benchmark::State& state) {
  const Panel p = panel_of(4, static_cast<Index>(state.range(0)));
  const Trajectory traj = run_protocol(config_of(StrategyKind::ftl), p);
  for (auto _ : state) benchmark::DoNotOptimize(adaptive_regret(traj, p));
}
BENCHMARK(BM_AdaptiveRegret)->Arg(50)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
