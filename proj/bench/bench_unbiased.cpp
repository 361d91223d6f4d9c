// Chain x block sampler: serial reference against the OpenMP kernel.

#include <benchmark/benchmark.h>

#include "hmcperfect/coupling.hpp"
#include "hmcperfect/dynamics.hpp"

using namespace hmcperfect;

namespace {

UnbiasedConfig config(int d) {
  UnbiasedConfig uc;
  uc.n_sets = 8;
  uc.block_length = d == 1 ? 20 : 28;
  uc.seed = 11;
  uc.sampler.dt = time_step({0.05, 2.0, 2.0, d});
  return uc;
}

void BM_Serial(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const auto target = make_standard_normal(d);
  const auto uc = config(d);
  for (auto _ : state) {
    auto res = unbiased_perfect_serial(uc, *target);
    benchmark::DoNotOptimize(res.samples.data());
  }
  state.SetItemsProcessed(state.iterations() * uc.n_sets);
}

void BM_Parallel(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const int workers = static_cast<int>(state.range(1));
  const auto target = make_standard_normal(d);
  const auto uc = config(d);
  for (auto _ : state) {
    auto res = unbiased_perfect_parallel(uc, *target, workers);
    benchmark::DoNotOptimize(res.samples.data());
  }
  state.SetItemsProcessed(state.iterations() * uc.n_sets);
}

}  // namespace

BENCHMARK(BM_Serial)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Parallel)
    ->ArgsProduct({{1, 10}, {1, 2, 4, 8}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
