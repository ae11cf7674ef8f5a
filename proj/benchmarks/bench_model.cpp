#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "cta/encoder.hpp"
#include "cta/modelio.hpp"

namespace {

void BM_ModelStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const bool two_block = state.range(1) != 0;
  constexpr std::size_t d = 64, h = 4;
  const auto cfg = two_block ? cta::ModelConfig::two_block(n, d, h, 4 * d, true)
                             : cta::ModelConfig::one_block(n, d, h, 4 * d);
  const auto store = cta::init_random_weights(cfg, 7, cta::DType::f32);
  const auto w = cta::load_model_weights<float>(cfg, store);
  std::mt19937_64 rng(8);
  const auto pool = bench::random_matrix<float>(rng, bench::kPool, d);
  cta::ModelState<float> s(cfg, w);
  std::size_t next = 0;
  while (!s.warm()) s.feed(w, pool.row(next++ % bench::kPool));
  for (auto _ : state) {
    benchmark::DoNotOptimize(cta::model_step<float>(s, w, pool.row(next++ % bench::kPool)));
  }
}

void BM_ModelBatch(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t d = 64, h = 4;
  const auto cfg = cta::ModelConfig::two_block(n, d, h, 4 * d, true);
  const auto store = cta::init_random_weights(cfg, 7, cta::DType::f32);
  const auto w = cta::load_model_weights<float>(cfg, store);
  std::mt19937_64 rng(9);
  const auto x = bench::random_matrix<float>(rng, n, d);
  for (auto _ : state) benchmark::DoNotOptimize(cta::model_batch(cfg, w, x, 0));
}

}  // namespace

BENCHMARK(BM_ModelStep)->ArgsProduct({{8, 32, 128}, {0, 1}});
BENCHMARK(BM_ModelBatch)->Arg(8)->Arg(32)->Arg(128);

BENCHMARK_MAIN();
