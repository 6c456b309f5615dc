// Serial reference vs OpenMP variants of the hot kernels.
// Arg(0) is the serial form; Arg(t) runs the parallel form with t threads.
#include <benchmark/benchmark.h>

#include <omp.h>

#include "wmforge/kernels.hpp"
#include "wmforge/rng.hpp"

using namespace wmforge;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

std::vector<SparseCounts> random_sentences(std::size_t n, std::size_t m, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SparseCounts> out(n);
  for (auto& s : out) {
    std::vector<std::int32_t> dense(m, 0);
    for (std::size_t t = 0; t < len; ++t) ++dense[rng.below(m)];
    for (std::size_t j = 0; j < m; ++j)
      if (dense[j]) s.push_back(SparseCount{static_cast<TokenId>(j), dense[j]});
  }
  return out;
}

void threads_args(benchmark::internal::Benchmark* b) {
  b->Arg(0);
  for (int t = 1; t <= std::max(2, omp_get_max_threads()); t *= 2) b->Arg(t);
}

void BM_CosineTopK(benchmark::State& state) {
  const auto emb = random_matrix(500, 16, 1);
  const int t = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto r = t == 0 ? kernels::cosine_topk_serial(emb, 20) : kernels::cosine_topk_parallel(emb, 20, t);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_CosineTopK)->Apply(threads_args)->Unit(benchmark::kMillisecond);

void BM_GreenCounts(benchmark::State& state) {
  const auto sents = random_sentences(4000, 500, 200, 2);
  ColorCode color(500, 0);
  for (std::size_t j = 0; j < 125; ++j) color[j * 4] = 1;
  const int t = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto r = t == 0 ? kernels::green_counts_serial(sents, color) : kernels::green_counts_parallel(sents, color, t);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_GreenCounts)->Apply(threads_args)->Unit(benchmark::kMicrosecond);

void BM_Pivot(benchmark::State& state) {
  auto tab = random_matrix(800, 2000, 3);
  std::vector<double> obj(2000, 1.0);
  const int t = static_cast<int>(state.range(0));
  std::size_t k = 0;
  for (auto _ : state) {
    const std::size_t row = k % tab.rows, col = (k * 7) % tab.cols;
    tab(row, col) = 1.0 + tab(row, col) * tab(row, col);  // keep the pivot away from zero
    if (t == 0)
      kernels::pivot_serial(tab, obj, row, col);
    else
      kernels::pivot_parallel(tab, obj, row, col, t);
    ++k;
  }
}
BENCHMARK(BM_Pivot)->Apply(threads_args)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
