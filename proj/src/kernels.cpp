#include "wmforge/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include <omp.h>

namespace wmforge {

namespace {
std::atomic<int> g_default_threads{1};

std::vector<double> row_norms(const Matrix& e) {
  std::vector<double> norms(e.rows);
  for (std::size_t i = 0; i < e.rows; ++i) {
    double s = 0.0;
    const double* r = e.row(i);
    for (std::size_t c = 0; c < e.cols; ++c) s += r[c] * r[c];
    norms[i] = std::sqrt(s);
  }
  return norms;
}

std::vector<Neighbor> topk_for_row(const Matrix& e, const std::vector<double>& norms, std::size_t i,
                                   std::size_t k) {
  std::vector<Neighbor> all;
  all.reserve(e.rows);
  const double* a = e.row(i);
  for (std::size_t j = 0; j < e.rows; ++j) {
    if (j == i) continue;
    const double* b = e.row(j);
    double dot = 0.0;
    for (std::size_t c = 0; c < e.cols; ++c) dot += a[c] * b[c];
    all.push_back({static_cast<TokenId>(j), dot / (norms[i] * norms[j])});
  }
  const std::size_t keep = std::min(k, all.size());
  auto cmp = [](const Neighbor& x, const Neighbor& y) {
    if (x.cosine != y.cosine) return x.cosine > y.cosine;
    return x.token < y.token;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), cmp);
  all.resize(keep);
  return all;
}

long count_one(const SparseCounts& s, const ColorCode& color) {
  long g = 0;
  for (const auto& [tok, n] : s) g += color[static_cast<std::size_t>(tok)] ? n : 0;
  return g;
}
}  // namespace

void set_default_threads(int threads) { g_default_threads = std::max(1, threads); }
int default_threads() { return g_default_threads; }

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 4) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

namespace kernels {

std::vector<std::vector<Neighbor>> cosine_topk_serial(const Matrix& embeddings, std::size_t k) {
  const auto norms = row_norms(embeddings);
  std::vector<std::vector<Neighbor>> out(embeddings.rows);
  for (std::size_t i = 0; i < embeddings.rows; ++i) out[i] = topk_for_row(embeddings, norms, i, k);
  return out;
}

std::vector<std::vector<Neighbor>> cosine_topk_parallel(const Matrix& embeddings, std::size_t k, int threads) {
  const auto norms = row_norms(embeddings);
  std::vector<std::vector<Neighbor>> out(embeddings.rows);
  const auto rows = static_cast<std::ptrdiff_t>(embeddings.rows);
#pragma omp parallel for schedule(static) num_threads(std::max(1, threads))
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    out[static_cast<std::size_t>(i)] = topk_for_row(embeddings, norms, static_cast<std::size_t>(i), k);
  }
  return out;
}

std::vector<long> green_counts_serial(std::span<const SparseCounts> sentences, const ColorCode& color) {
  std::vector<long> out(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) out[i] = count_one(sentences[i], color);
  return out;
}

std::vector<long> green_counts_parallel(std::span<const SparseCounts> sentences, const ColorCode& color,
                                        int threads) {
  std::vector<long> out(sentences.size());
  const auto n = static_cast<std::ptrdiff_t>(sentences.size());
#pragma omp parallel for schedule(static) num_threads(std::max(1, threads))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = count_one(sentences[static_cast<std::size_t>(i)], color);
  }
  return out;
}

namespace {

constexpr double kDropTol = 1e-13;

// Nonzero columns of the (already scaled) pivot row; the elimination only
// touches these, which matters once tableaus get wide and sparse.
std::vector<std::size_t> nonzero_columns(const double* prow, std::size_t cols) {
  std::vector<std::size_t> nz;
  for (std::size_t c = 0; c < cols; ++c) {
    if (prow[c] != 0.0) nz.push_back(c);
  }
  return nz;
}

inline void eliminate_row(double* target, const double* prow, const std::vector<std::size_t>& nz,
                          double factor) {
  for (const std::size_t c : nz) {
    const double v = target[c] - factor * prow[c];
    target[c] = std::abs(v) < kDropTol ? 0.0 : v;
  }
}

std::vector<std::size_t> scale_pivot_row(Matrix& t, std::size_t pr, std::size_t pc) {
  double* prow = t.row(pr);
  const double inv = 1.0 / prow[pc];
  for (std::size_t c = 0; c < t.cols; ++c) {
    const double v = prow[c] * inv;
    prow[c] = std::abs(v) < kDropTol ? 0.0 : v;
  }
  prow[pc] = 1.0;
  return nonzero_columns(prow, t.cols);
}

}  // namespace

void pivot_serial(Matrix& t, std::vector<double>& obj, std::size_t pr, std::size_t pc) {
  const auto nz = scale_pivot_row(t, pr, pc);
  const double* prow = t.row(pr);
  for (std::size_t r = 0; r < t.rows; ++r) {
    if (r == pr) continue;
    double* row = t.row(r);
    const double f = row[pc];
    if (f == 0.0) continue;
    eliminate_row(row, prow, nz, f);
    row[pc] = 0.0;
  }
  const double f = obj[pc];
  if (f != 0.0) {
    eliminate_row(obj.data(), prow, nz, f);
    obj[pc] = 0.0;
  }
}

void pivot_parallel(Matrix& t, std::vector<double>& obj, std::size_t pr, std::size_t pc, int threads) {
  const auto nz = scale_pivot_row(t, pr, pc);
  const double* prow = t.row(pr);
  const auto rows = static_cast<std::ptrdiff_t>(t.rows);
#pragma omp parallel for schedule(static) num_threads(std::max(1, threads))
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    if (static_cast<std::size_t>(r) == pr) continue;
    double* row = t.row(static_cast<std::size_t>(r));
    const double f = row[pc];
    if (f == 0.0) continue;
    eliminate_row(row, prow, nz, f);
    row[pc] = 0.0;
  }
  const double f = obj[pc];
  if (f != 0.0) {
    eliminate_row(obj.data(), prow, nz, f);
    obj[pc] = 0.0;
  }
}

}  // namespace kernels
}  // namespace wmforge
