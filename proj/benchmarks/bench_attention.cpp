#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "cta/attention.hpp"
#include "cta/mha.hpp"
#include "cta/ring.hpp"

namespace {

template <typename T>
void BM_RegularWindow(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(1);
  const auto pool = bench::random_matrix<T>(rng, bench::kPool, d);
  cta::RowRing<T> window(n, d);
  for (std::size_t r = 0; r < n; ++r) window.push(pool.row(r % bench::kPool));
  std::size_t next = n;
  for (auto _ : state) {
    window.push(pool.row(next++ % bench::kPool));
    const auto x = window.to_matrix();
    benchmark::DoNotOptimize(cta::regular_sda(x, x, x));
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}

template <typename T>
void BM_RegularRowstream(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(2);
  const auto x = bench::random_matrix<T>(rng, n, d);
  for (auto _ : state) benchmark::DoNotOptimize(cta::regular_sda_rowstream(x, x, x));
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}

template <typename T>
void BM_CoreStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(3);
  const auto pool = bench::random_matrix<T>(rng, bench::kPool, d);
  const auto warm = bench::random_matrix<T>(rng, n - 1, d);
  auto s = cta::core_init(n, warm, warm, warm);
  std::size_t next = 0;
  for (auto _ : state) {
    const auto row = pool.row(next++ % bench::kPool);
    benchmark::DoNotOptimize(cta::core_step<T>(s, row, row, row));
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}

template <typename T>
void BM_CosiStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto d = static_cast<std::size_t>(state.range(1));
  std::mt19937_64 rng(4);
  const auto pool = bench::random_matrix<T>(rng, bench::kPool, d);
  const auto warm = bench::random_matrix<T>(rng, n - 1, d);
  auto s = cta::cosi_init(n, warm, warm);
  std::size_t next = 0;
  for (auto _ : state) {
    const auto row = pool.row(next++ % bench::kPool);
    benchmark::DoNotOptimize(cta::cosi_step<T>(s, row, row, row));
  }
  state.SetComplexityN(static_cast<benchmark::IterationCount>(n));
}

template <typename T>
void BM_ComhaStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto kind = state.range(1) == 0 ? cta::AttnKind::retroactive : cta::AttnKind::single_output;
  constexpr std::size_t d = 64, h = 4;
  std::mt19937_64 rng(5);
  cta::MhaWeights<T> w;
  for (std::size_t i = 0; i < h; ++i) {
    w.w_q.push_back(bench::random_matrix<T>(rng, d, d / h));
    w.w_k.push_back(bench::random_matrix<T>(rng, d, d / h));
    w.w_v.push_back(bench::random_matrix<T>(rng, d, d / h));
  }
  w.w_o = bench::random_matrix<T>(rng, d, d);
  const auto warm = bench::random_matrix<T>(rng, n - 1, d);
  auto s = cta::comha_init(w, kind, n, warm, warm, warm);
  const auto pool = bench::random_matrix<T>(rng, bench::kPool, d);
  std::size_t next = 0;
  for (auto _ : state) {
    const auto row = pool.row(next++ % bench::kPool);
    benchmark::DoNotOptimize(cta::comha_step<T>(s, w, row, row, row));
  }
}

void window_args(benchmark::internal::Benchmark* b) {
  for (const int d : {16, 64}) {
    for (int n = 16; n <= 512; n *= 2) b->Args({n, d});
  }
}

}  // namespace

BENCHMARK_TEMPLATE(BM_RegularWindow, float)->Apply(window_args)->Complexity();
BENCHMARK_TEMPLATE(BM_RegularRowstream, float)->Apply(window_args)->Complexity();
BENCHMARK_TEMPLATE(BM_CoreStep, float)->Apply(window_args)->Complexity();
BENCHMARK_TEMPLATE(BM_CoreStep, double)->Args({64, 16})->Args({256, 64});
BENCHMARK_TEMPLATE(BM_CosiStep, float)->Apply(window_args)->Complexity();
BENCHMARK_TEMPLATE(BM_CosiStep, double)->Args({64, 16})->Args({256, 64});
BENCHMARK_TEMPLATE(BM_ComhaStep, float)->ArgsProduct({{16, 64, 256}, {0, 1}});
