#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wmforge/mip_model.hpp"
#include "wmforge/types.hpp"

namespace wmforge {

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit, cutoff };

const char* to_string(LpStatus s);

struct SimplexOptions {
  double primal_tol = 1e-9;
  double dual_tol = 1e-9;
  double pivot_tol = 1e-9;
  long iteration_limit = -1;  // per solve() call; -1 = unlimited
  int degenerate_switch = 200;  // consecutive degenerate steps before Bland's rule
  int recompute_every = 50;
  int threads = 1;
};

/// Bounded simplex over a dense tableau of [A | -I]: every row i gets an
/// activity variable r_i = a_i x carrying the row bounds, so the slack basis
/// is always available. Binaries are relaxed to [0, 1]. Keeps its basis
/// between solve() calls; bound changes are reoptimized with the dual
/// simplex, which is how branch-and-bound uses it.
class SimplexEngine {
 public:
  explicit SimplexEngine(const MipModel& model, SimplexOptions options = {});

  /// Optimizes from the current basis. With a cutoff (internal min sense),
  /// stops early once the dual bound exceeds it.
  LpStatus solve(double cutoff = kInf);

  std::size_t num_structural() const { return n_; }
  std::size_t num_rows() const { return m_; }

  /// Changes bounds of structural variable j; nonbasic values are moved to
  /// the bound matching the sign of their reduced cost.
  void set_bounds(std::size_t j, double lb, double ub);
  double lower(std::size_t j) const { return lb_[j]; }
  double upper(std::size_t j) const { return ub_[j]; }

  /// Structural values of the current basic solution.
  std::vector<double> solution() const;
  double value(std::size_t j) const { return x_[j]; }

  /// Objective in the model's own sense.
  double objective() const;
  /// Objective in minimization form (negated for maximize models).
  double internal_objective() const;

  /// Reduced cost of structural j in minimization form.
  double reduced_cost(std::size_t j) const { return d_[j]; }
  bool is_basic(std::size_t j) const { return pos_[j] >= 0; }

  long iterations() const { return total_iterations_; }
  long refactorizations() const { return refactorizations_; }

  void set_threads(int threads) { opt_.threads = threads; }
  void set_iteration_limit(long limit) { opt_.iteration_limit = limit; }

 private:
  enum class Stat : std::uint8_t { basic, lower, upper, free };
  enum class Step { progress, done, infeasible, unbounded };

  bool is_boxed(std::size_t j) const;
  void place_nonbasic(std::size_t j);
  void move_nonbasic(std::size_t j, double value);
  double infeasibility(std::size_t j) const;
  bool primal_feasible() const;
  bool repair_dual();  // flips boxed vars; false if a dual infeasibility remains

  Step dual_iteration();
  Step primal_iteration(bool phase_one);
  void pivot(std::size_t row, std::size_t col);
  void note_step(double step);

  void recompute_basics();
  void recompute_duals();
  double residual() const;
  void refactor();
  void maintain();
  // Cost perturbation against dual degeneracy; active only inside solve().
  void perturb_costs();
  void restore_costs();
  bool dual_feasible() const;

  SimplexOptions opt_;
  std::size_t n_ = 0;  // structural
  std::size_t m_ = 0;  // rows
  std::size_t cols_ = 0;
  double sense_ = 1.0;

  // Row-wise copy of A for residual checks and refactorization.
  std::vector<std::vector<Term>> rows_;

  std::vector<double> cost_;
  std::vector<double> base_cost_;
  bool perturbed_ = false;
  double perturb_slack_ = 0.0;  // bound on |(cost_ - base_cost_) . x| over the box
  std::vector<double> lb_, ub_;
  std::vector<double> x_;
  std::vector<double> d_;
  std::vector<Stat> stat_;
  std::vector<std::size_t> head_;
  std::vector<long> pos_;
  Matrix t_;

  bool bland_ = false;
  int degenerate_run_ = 0;
  long since_maintain_ = 0;
  long total_iterations_ = 0;
  long refactorizations_ = 0;
};

struct LpResult {
  LpStatus status = LpStatus::infeasible;
  double objective = 0.0;
  std::vector<double> x;
  long iterations = 0;
};

/// LP relaxation of `model` (binaries relaxed to [0, 1]) from scratch.
LpResult solve_lp_relaxation(const MipModel& model, const SimplexOptions& options = {});

}  // namespace wmforge
