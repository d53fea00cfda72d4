#include <benchmark/benchmark.h>

#include "pamm/bounds.hpp"
#include "pamm/harness.hpp"
#include "pamm/linalg.hpp"
#include "pamm/pamm.hpp"
#include "pamm/random.hpp"

namespace {

using pamm::DenseMatrix;

// args: b, n, k
void BM_Compress(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const DenseMatrix a = pamm::generate_clustered_data<float>(b, n, 16, 0.1, 1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto comp = pamm::compress(a, pamm::PammConfig::with_k(k, pamm::kNoTolerance, seed++));
    benchmark::DoNotOptimize(comp.alpha.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(b));
}

// args: b, n, m, k
void BM_ApproxMatmul(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const auto k = static_cast<std::size_t>(state.range(3));
  const DenseMatrix a = pamm::generate_clustered_data<float>(b, n, 16, 0.1, 1);
  const DenseMatrix g = pamm::gaussian_matrix<float>(b, m, 2);
  const auto comp = pamm::compress(a, pamm::PammConfig::with_k(k, pamm::kNoTolerance, 3));
  for (auto _ : state) {
    auto o = pamm::approx_matmul(comp, g);
    benchmark::DoNotOptimize(o.data().data());
  }
  state.counters["gamma"] = pamm::speedup_gamma(b, m, k);
}

// args: b, n, m
void BM_ExactMatmul(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const DenseMatrix a = pamm::gaussian_matrix<float>(b, n, 1);
  const DenseMatrix g = pamm::gaussian_matrix<float>(b, m, 2);
  for (auto _ : state) {
    auto o = pamm::matmul_tn(a, g);
    benchmark::DoNotOptimize(o.data().data());
  }
}

}  // namespace

BENCHMARK(BM_Compress)->Args({1024, 64, 16})->Args({4096, 64, 64})->Args({4096, 64, 256});
BENCHMARK(BM_ApproxMatmul)->Args({1024, 64, 256, 16})->Args({4096, 64, 512, 64});
BENCHMARK(BM_ExactMatmul)->Args({1024, 64, 256})->Args({4096, 64, 512});
BENCHMARK_MAIN();
