#pragma once

// Reference solvers used only by tests. They share nothing with the
// production solver: plain Gaussian elimination over every choice of active
// constraints, and exhaustive enumeration of binary assignments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "wmforge/mip_model.hpp"
#include "wmforge/rng.hpp"

namespace oracle {

using wmforge::MipModel;

struct Hyperplane {
  std::vector<double> a;
  double b;
};

inline bool solve_square(std::vector<std::vector<double>> m, std::vector<double> rhs, std::vector<double>& x) {
  const std::size_t n = rhs.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(m[r][c]) > std::abs(m[p][c])) p = r;
    }
    if (std::abs(m[p][c]) < 1e-10) return false;
    std::swap(m[p], m[c]);
    std::swap(rhs[p], rhs[c]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = m[r][c] / m[c][c];
      if (f == 0.0) continue;
      for (std::size_t k = c; k < n; ++k) m[r][k] -= f * m[c][k];
      rhs[r] -= f * rhs[c];
    }
  }
  x.resize(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = rhs[i] / m[i][i];
  return true;
}

inline bool satisfies(const MipModel& model, const std::vector<double>& x, double tol) {
  for (std::size_t j = 0; j < model.num_variables(); ++j) {
    const auto& v = model.variables()[j];
    if (x[j] < v.lb - tol || x[j] > v.ub + tol) return false;
  }
  for (const auto& row : model.constraints()) {
    double act = 0.0;
    for (const auto& t : row.terms) act += t.coef * x[t.var];
    if (row.sense != wmforge::RowSense::ge && act > row.rhs + tol) return false;
    if (row.sense != wmforge::RowSense::le && act < row.rhs - tol) return false;
  }
  return true;
}

/// Optimum of the LP relaxation by enumerating every basic solution.
/// Requires finite bounds on every variable (so the optimum is a vertex).
inline std::optional<double> vertex_enumeration(const MipModel& model) {
  const std::size_t n = model.num_variables();
  std::vector<Hyperplane> planes;
  for (const auto& row : model.constraints()) {
    Hyperplane h{std::vector<double>(n, 0.0), row.rhs};
    for (const auto& t : row.terms) h.a[t.var] = t.coef;
    planes.push_back(h);
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (double b : {model.variables()[j].lb, model.variables()[j].ub}) {
      Hyperplane h{std::vector<double>(n, 0.0), b};
      h.a[j] = 1.0;
      planes.push_back(h);
    }
  }
  const bool maximize = model.objective_sense() == wmforge::ObjSense::maximize;
  std::optional<double> best;
  std::vector<std::size_t> pick(n);
  for (std::size_t i = 0; i < n; ++i) pick[i] = i;
  const std::size_t h = planes.size();
  std::vector<double> x;
  while (true) {
    std::vector<std::vector<double>> m(n);
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = planes[pick[i]].a;
      rhs[i] = planes[pick[i]].b;
    }
    if (solve_square(m, rhs, x) && satisfies(model, x, 1e-9)) {
      const double v = model.objective_value(x);
      if (!best || (maximize ? v > *best : v < *best)) best = v;
    }
    // next combination
    std::size_t k = n;
    while (k > 0 && pick[k - 1] == h - n + (k - 1)) --k;
    if (k == 0) break;
    ++pick[k - 1];
    for (std::size_t i = k; i < n; ++i) pick[i] = pick[i - 1] + 1;
  }
  return best;
}

/// Exhaustive optimum over all 0/1 assignments of a pure-binary model.
inline std::optional<double> enumerate_binary(const MipModel& model, std::vector<double>* argbest = nullptr) {
  const std::size_t n = model.num_variables();
  const bool maximize = model.objective_sense() == wmforge::ObjSense::maximize;
  std::optional<double> best;
  std::vector<double> x(n);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    for (std::size_t j = 0; j < n; ++j) x[j] = static_cast<double>((mask >> j) & 1U);
    if (!satisfies(model, x, 1e-9)) continue;
    const double v = model.objective_value(x);
    if (!best || (maximize ? v > *best : v < *best)) {
      best = v;
      if (argbest) *argbest = x;
    }
  }
  return best;
}

/// Random LP with boxed variables and mixed-sense rows; integer data keeps
/// the enumeration oracle numerically clean.
inline MipModel random_lp(std::uint64_t seed, std::size_t max_vars = 8, std::size_t max_rows = 8) {
  wmforge::Rng rng(seed);
  MipModel m;
  const std::size_t n = 2 + rng.below(max_vars - 1);
  const std::size_t rows = 1 + rng.below(max_rows);
  for (std::size_t j = 0; j < n; ++j) {
    const double lb = -static_cast<double>(rng.below(3));
    const double ub = lb + 1.0 + static_cast<double>(rng.below(6));
    m.add_continuous("x_" + std::to_string(j), lb, ub);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<wmforge::Term> terms;
    for (std::size_t j = 0; j < n; ++j) {
      if (rng.uniform() < 0.7) terms.push_back({j, static_cast<double>(static_cast<long>(rng.below(11)) - 5)});
    }
    const auto kind = rng.below(5);
    const auto sense = kind < 2 ? wmforge::RowSense::le : kind < 4 ? wmforge::RowSense::ge : wmforge::RowSense::eq;
    const double rhs = static_cast<double>(static_cast<long>(rng.below(13)) - 4);
    m.add_constraint("", terms, sense, rhs);
  }
  std::vector<wmforge::Term> obj;
  for (std::size_t j = 0; j < n; ++j) obj.push_back({j, static_cast<double>(static_cast<long>(rng.below(21)) - 10)});
  m.set_objective(obj, rng.below(2) ? wmforge::ObjSense::maximize : wmforge::ObjSense::minimize);
  return m;
}

/// Random pure-binary program: covering, packing and equality rows mixed.
inline MipModel random_binary_program(std::uint64_t seed, std::size_t max_vars = 15, std::size_t max_rows = 12) {
  wmforge::Rng rng(seed);
  MipModel m;
  const std::size_t n = 3 + rng.below(max_vars - 2);
  const std::size_t rows = 1 + rng.below(max_rows);
  for (std::size_t j = 0; j < n; ++j) m.add_binary("b_" + std::to_string(j));
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<wmforge::Term> terms;
    double pos = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (rng.uniform() < 0.5) {
        const double c = static_cast<double>(static_cast<long>(rng.below(13)) - 3);
        terms.push_back({j, c});
        if (c > 0) pos += c;
      }
    }
    const auto kind = rng.below(7);
    const auto sense = kind < 3 ? wmforge::RowSense::le : kind < 6 ? wmforge::RowSense::ge : wmforge::RowSense::eq;
    const double rhs = std::floor(pos * (0.2 + 0.5 * rng.uniform()));
    m.add_constraint("", terms, sense, rhs);
  }
  std::vector<wmforge::Term> obj;
  for (std::size_t j = 0; j < n; ++j) obj.push_back({j, static_cast<double>(static_cast<long>(rng.below(31)) - 10)});
  m.set_objective(obj, rng.below(2) ? wmforge::ObjSense::maximize : wmforge::ObjSense::minimize);
  return m;
}

}  // namespace oracle
