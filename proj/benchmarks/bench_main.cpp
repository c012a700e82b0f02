#include <benchmark/benchmark.h>

#include "infoacq/infoacq.hpp"

using namespace infoacq;

namespace {

Model canon() { return make_model(ModelParams{}, CostFunction::quadratic(1e-3), 1.0); }

void BM_ValueIteration(benchmark::State& state) {
  const Model m = canon();
  const Grid g = Grid::uniform(0.0, 1.0, static_cast<std::size_t>(state.range(0)));
  ValueIterationOptions o;
  o.policy_evaluation = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(value_iteration(g, m, o).residual);
}
BENCHMARK(BM_ValueIteration)
    ->Args({1001, 1})
    ->Args({4001, 1})
    ->Args({8001, 1})
    ->Args({401, 0})
    ->Unit(benchmark::kMillisecond);

void BM_Equilibrium(benchmark::State& state) {
  const Model m = canon();
  for (auto _ : state) benchmark::DoNotOptimize(solve_equilibrium(m).gamma_eq);
}
BENCHMARK(BM_Equilibrium);

void BM_Sensitivity(benchmark::State& state) {
  const Model m = canon();
  const EquilibriumPoint eq = solve_equilibrium(m);
  for (auto _ : state) benchmark::DoNotOptimize(sensitivity(eq, SensitivityParameter::Kappa, m).d_h_eq);
}
BENCHMARK(BM_Sensitivity);

void BM_RiccatiRk4(benchmark::State& state) {
  const Model m = canon();
  const auto t = uniform_time_grid(10.0, 1e-3);
  for (auto _ : state)
    benchmark::DoNotOptimize(integrate_variance(0.9, RateSchedule::constant(3.0), t, m).values.back());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(t.size()));
}
BENCHMARK(BM_RiccatiRk4);

// Monte Carlo kernel: one Euler path of the coupled truth and filter system.
void BM_SimulatePath(benchmark::State& state) {
  const ValueTable t = value_iteration(Grid::uniform(0.0, 1.0, 4001), canon());
  SimConfig c;
  c.n_paths = 1;
  std::uint64_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(simulate_path(c, Policy::optimal(), PolicyArtifacts(t), i++).running_cost.back());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.steps()));
}
BENCHMARK(BM_SimulatePath)->Unit(benchmark::kMillisecond);

void BM_McCost(benchmark::State& state) {
  const ValueTable t = value_iteration(Grid::uniform(0.0, 1.0, 4001), canon());
  SimConfig c;
  c.n_paths = static_cast<std::size_t>(state.range(0));
  c.horizon = 5.0;
  for (auto _ : state) benchmark::DoNotOptimize(mc_cost(c, Policy::optimal(), PolicyArtifacts(t)).mean);
  state.SetItemsProcessed(state.iterations() * state.range(0) * static_cast<std::int64_t>(c.steps()));
}
BENCHMARK(BM_McCost)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
