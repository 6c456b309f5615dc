#pragma once

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP variant that must produce bit-identical output; the serial form is
// what tests and the benchmark compare against.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "wmforge/types.hpp"

namespace wmforge {

struct SparseCount {
  TokenId token;
  std::int32_t count;
  bool operator==(const SparseCount&) const = default;
};
using SparseCounts = std::vector<SparseCount>;

struct Neighbor {
  TokenId token;
  double cosine;
  bool operator==(const Neighbor&) const = default;
};

/// Default worker count for kernels that are not given one explicitly.
void set_default_threads(int threads);
int default_threads();

/// Runs fn(i) for i in [0, n). threads <= 1 runs the plain loop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

namespace kernels {

/// For each row of `embeddings`, the k most cosine-similar other rows,
/// descending cosine, lowest token id first on ties.
std::vector<std::vector<Neighbor>> cosine_topk_serial(const Matrix& embeddings, std::size_t k);
std::vector<std::vector<Neighbor>> cosine_topk_parallel(const Matrix& embeddings, std::size_t k, int threads);

/// G(S_i) for every sentence under one color code.
std::vector<long> green_counts_serial(std::span<const SparseCounts> sentences, const ColorCode& color);
std::vector<long> green_counts_parallel(std::span<const SparseCounts> sentences, const ColorCode& color,
                                        int threads);

/// Gauss-Jordan elimination step on a dense tableau: row `pivot_row` is
/// scaled so column `pivot_col` becomes 1 and that column is cleared from
/// every other row (including the extra objective row `obj`).
void pivot_serial(Matrix& tableau, std::vector<double>& obj, std::size_t pivot_row, std::size_t pivot_col);
void pivot_parallel(Matrix& tableau, std::vector<double>& obj, std::size_t pivot_row, std::size_t pivot_col,
                    int threads);

}  // namespace kernels
}  // namespace wmforge
