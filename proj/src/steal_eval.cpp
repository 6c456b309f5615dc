#include <algorithm>
#include <numeric>

#include "wmforge/errors.hpp"
#include "wmforge/stealer.hpp"

namespace wmforge {

PrecisionMetrics evaluate_split(const ColorCode& stolen, const ColorCode& truth) {
  if (stolen.size() != truth.size()) throw InputError("color codes differ in vocabulary size");
  PrecisionMetrics pm;
  for (std::size_t j = 0; j < stolen.size(); ++j) {
    if (!stolen[j]) continue;
    ++pm.n_g;
    if (truth[j]) ++pm.n_t;
  }
  if (pm.n_g > 0) pm.precision = static_cast<double>(pm.n_t) / static_cast<double>(pm.n_g);
  return pm;
}

MultiKeyMetrics evaluate_multikey(const std::vector<ColorCode>& stolen, const std::vector<ColorCode>& truth) {
  if (stolen.size() != truth.size()) throw InputError("need as many stolen lists as keys");
  if (stolen.size() > 8) throw InputError("exhaustive matching supports at most 8 keys");
  const std::size_t p = stolen.size();
  std::vector<std::vector<PrecisionMetrics>> table(p, std::vector<PrecisionMetrics>(p));
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b) table[a][b] = evaluate_split(stolen[a], truth[b]);
  }
  std::vector<std::size_t> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::size_t> best = perm;
  long best_score = -1;
  do {
    long score = 0;
    for (std::size_t a = 0; a < p; ++a) score += static_cast<long>(table[a][perm[a]].n_t);
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  MultiKeyMetrics mk;
  mk.assignment = best;
  for (std::size_t a = 0; a < p; ++a) mk.per_key.push_back(table[a][best[a]]);
  return mk;
}

}  // namespace wmforge
