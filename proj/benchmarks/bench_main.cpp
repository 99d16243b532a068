#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "flexspar/compression.hpp"
#include "flexspar/control.hpp"
#include "flexspar/fedcore.hpp"
#include "flexspar/numerics.hpp"
#include "flexspar/taskdata.hpp"

namespace {

using namespace flexspar;

EnergyModel bench_model(std::size_t M) {
  EnergyModel em;
  em.dim = 100000;
  em.s0 = 1000.0;
  em.c_alpha = 3e-4;
  em.c_beta = 100.0;
  em.delta_ub = 2000.0;
  em.h_candidates = {1, 2, 4, 8, 16, 32};
  for (std::size_t m = 0; m < M; ++m) {
    em.devices.push_back({0.2, 1e6 * static_cast<double>(m + 1), 0.05});
  }
  return em;
}

void BM_TopK(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  RandomStream rng(1);
  ParamVector x(d);
  for (auto& v : x) v = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(top_k(x, d / 100));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d));
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(100000)->Arg(1000000);

void BM_LambertW(benchmark::State& state) {
  const auto branch = state.range(0) == 0 ? WBranch::principal : WBranch::lower;
  std::vector<double> xs;
  for (int i = 1; i <= 256; ++i) xs.push_back(-std::exp(-1.0) * i / 257.0);
  for (auto _ : state) {
    for (const double x : xs) benchmark::DoNotOptimize(lambert_w(x, branch));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_LambertW)->Arg(0)->Arg(1);

void BM_ClosedForm(benchmark::State& state) {
  const auto em = bench_model(static_cast<std::size_t>(state.range(0)));
  const std::vector<double> x(em.devices.size(), 50.0);
  for (auto _ : state) benchmark::DoNotOptimize(closed_form_delta(x, 4, em));
}
BENCHMARK(BM_ClosedForm)->Arg(4)->Arg(64);

void BM_SolveFlexible(benchmark::State& state) {
  const auto em = bench_model(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(solve_flexible(em));
}
BENCHMARK(BM_SolveFlexible)->Arg(4)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_EngineIterations(benchmark::State& state) {
  const LossModel model{LossKind::logistic, static_cast<std::size_t>(state.range(0))};
  const auto data = make_synthetic(model, 2400, SeedSpec{1});
  const auto part = partition(data, 4, 0.5, SeedSpec{1});
  EnergyModel em;
  em.dim = model.param_dim();
  for (int m = 0; m < 4; ++m) em.devices.push_back({0.2, 1e6, 0.05});
  TrainConfig cfg;
  cfg.T = 100;
  cfg.H = 4;
  cfg.eta = 0.1;
  cfg.b0 = 16;
  RunOptions opt;
  opt.record_grad_norms = false;
  const std::vector<double> deltas(4, 10.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_ftlsgd_db(model, data, part, deltas, em, cfg, SeedSpec{2}, opt));
  }
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_EngineIterations)->Arg(20)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
