#include "wmforge/simplex.hpp"

#include <algorithm>
#include <cmath>

#include "wmforge/kernels.hpp"

namespace wmforge {

const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    case LpStatus::iteration_limit: return "iteration_limit";
    case LpStatus::cutoff: return "cutoff";
  }
  return "unknown";
}

namespace {
constexpr std::size_t kNone = static_cast<std::size_t>(-1);
constexpr double kResidualTol = 1e-7;
constexpr int kPerturbAfter = 30;
constexpr double kShiftTol = 1e-7;
}  // namespace

SimplexEngine::SimplexEngine(const MipModel& model, SimplexOptions options) : opt_(options) {
  model.validate();
  n_ = model.num_variables();
  m_ = model.num_constraints();
  cols_ = n_ + m_;
  sense_ = model.objective_sense() == ObjSense::maximize ? -1.0 : 1.0;

  cost_.assign(cols_, 0.0);
  for (const auto& t : model.objective()) cost_[t.var] = sense_ * t.coef;

  lb_.resize(cols_);
  ub_.resize(cols_);
  for (std::size_t j = 0; j < n_; ++j) {
    lb_[j] = model.variables()[j].lb;
    ub_[j] = model.variables()[j].ub;
  }
  rows_.resize(m_);
  t_ = Matrix(m_, cols_);
  for (std::size_t i = 0; i < m_; ++i) {
    const auto& row = model.constraints()[i];
    rows_[i] = row.terms;
    const double rhs = row.rhs;
    lb_[n_ + i] = row.sense == RowSense::le ? -kInf : rhs;
    ub_[n_ + i] = row.sense == RowSense::ge ? kInf : rhs;
    for (const auto& t : row.terms) t_(i, t.var) = -t.coef;
    t_(i, n_ + i) = 1.0;
  }

  head_.resize(m_);
  pos_.assign(cols_, -1);
  stat_.assign(cols_, Stat::lower);
  x_.assign(cols_, 0.0);
  d_ = cost_;
  for (std::size_t i = 0; i < m_; ++i) {
    head_[i] = n_ + i;
    pos_[n_ + i] = static_cast<long>(i);
    stat_[n_ + i] = Stat::basic;
  }
  for (std::size_t j = 0; j < n_; ++j) place_nonbasic(j);
  recompute_basics();
}

bool SimplexEngine::is_boxed(std::size_t j) const { return std::isfinite(lb_[j]) && std::isfinite(ub_[j]); }

void SimplexEngine::place_nonbasic(std::size_t j) {
  if (is_boxed(j)) {
    stat_[j] = (d_[j] < 0.0 && lb_[j] < ub_[j]) ? Stat::upper : Stat::lower;
  } else if (std::isfinite(lb_[j])) {
    stat_[j] = Stat::lower;
  } else if (std::isfinite(ub_[j])) {
    stat_[j] = Stat::upper;
  } else {
    stat_[j] = Stat::free;
  }
  x_[j] = stat_[j] == Stat::lower ? lb_[j] : stat_[j] == Stat::upper ? ub_[j] : 0.0;
}

void SimplexEngine::move_nonbasic(std::size_t j, double value) {
  const double delta = value - x_[j];
  if (delta != 0.0) {
    for (std::size_t i = 0; i < m_; ++i) {
      const double a = t_(i, j);
      if (a != 0.0) x_[head_[i]] -= a * delta;
    }
  }
  x_[j] = value;
}

void SimplexEngine::set_bounds(std::size_t j, double lb, double ub) {
  lb_[j] = lb;
  ub_[j] = ub;
  if (pos_[j] >= 0) return;
  const double old = x_[j];
  place_nonbasic(j);
  const double target = x_[j];
  x_[j] = old;
  move_nonbasic(j, target);
}

double SimplexEngine::infeasibility(std::size_t j) const {
  if (x_[j] < lb_[j] - opt_.primal_tol) return lb_[j] - x_[j];
  if (x_[j] > ub_[j] + opt_.primal_tol) return x_[j] - ub_[j];
  return 0.0;
}

bool SimplexEngine::primal_feasible() const {
  for (std::size_t i = 0; i < m_; ++i) {
    if (infeasibility(head_[i]) > 0.0) return false;
  }
  return true;
}

bool SimplexEngine::repair_dual() {
  bool ok = true;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (pos_[j] >= 0 || lb_[j] == ub_[j]) continue;
    const double d = d_[j];
    const bool wrong = (stat_[j] == Stat::lower && d < -opt_.dual_tol) ||
                       (stat_[j] == Stat::upper && d > opt_.dual_tol) ||
                       (stat_[j] == Stat::free && std::abs(d) > opt_.dual_tol);
    if (!wrong) continue;
    if (stat_[j] == Stat::lower && std::isfinite(ub_[j])) {
      stat_[j] = Stat::upper;
      move_nonbasic(j, ub_[j]);
    } else if (stat_[j] == Stat::upper && std::isfinite(lb_[j])) {
      stat_[j] = Stat::lower;
      move_nonbasic(j, lb_[j]);
    } else if (std::abs(d) <= kShiftTol * (1.0 + std::abs(cost_[j]))) {
      // Rounding-sized sign error on a column that cannot flip: shift its
      // cost; restore_costs() undoes it before solve() returns.
      if (!perturbed_) {
        base_cost_ = cost_;
        perturbed_ = true;
        perturb_slack_ = 0.0;
      }
      cost_[j] -= d;
      d_[j] = 0.0;
      perturb_slack_ = kInf;
    } else {
      ok = false;
    }
  }
  return ok;
}

void SimplexEngine::pivot(std::size_t row, std::size_t col) {
  if (opt_.threads > 1) {
    kernels::pivot_parallel(t_, d_, row, col, opt_.threads);
  } else {
    kernels::pivot_serial(t_, d_, row, col);
  }
  pos_[head_[row]] = -1;
  head_[row] = col;
  pos_[col] = static_cast<long>(row);
  stat_[col] = Stat::basic;
}

void SimplexEngine::note_step(double step) {
  if (step <= 1e-12) {
    if (++degenerate_run_ > opt_.degenerate_switch) bland_ = true;
  } else {
    degenerate_run_ = 0;
    bland_ = false;
  }
}

SimplexEngine::Step SimplexEngine::dual_iteration() {
  // Dual steepest edge with exact weights: the slack block of tableau row i
  // is row i of the basis inverse.
  std::size_t r = kNone;
  double worst = 0.0;
  for (std::size_t i = 0; i < m_; ++i) {
    const double inf = infeasibility(head_[i]);
    if (inf <= 0.0) continue;
    if (bland_) {
      if (r == kNone || head_[i] < head_[r]) r = i;
      continue;
    }
    const double* brow = t_.row(i) + n_;
    double w = 0.0;
    for (std::size_t k = 0; k < m_; ++k) w += brow[k] * brow[k];
    const double score = inf * inf / std::max(w, 1e-12);
    if (score > worst) {
      worst = score;
      r = i;
    }
  }
  if (r == kNone) return Step::done;

  const std::size_t out = head_[r];
  const bool to_lower = x_[out] < lb_[out];
  const double bound = to_lower ? lb_[out] : ub_[out];
  const double s = to_lower ? 1.0 : -1.0;
  const double* tr = t_.row(r);

  auto direction = [&](std::size_t j, double a) {
    switch (stat_[j]) {
      case Stat::lower: return 1.0;
      case Stat::upper: return -1.0;
      default: return -a * s > 0.0 ? 1.0 : -1.0;
    }
  };

  double tmax = kInf;
  if (!bland_) {
    for (std::size_t j = 0; j < cols_; ++j) {
      if (pos_[j] >= 0 || lb_[j] == ub_[j]) continue;
      const double a = tr[j];
      if (std::abs(a) <= opt_.pivot_tol) continue;
      const double dir = direction(j, a);
      if (-a * dir * s <= 0.0) continue;
      tmax = std::min(tmax, (d_[j] * dir + opt_.dual_tol) / std::abs(a));
    }
  }
  std::size_t q = kNone;
  double best_a = 0.0;
  double best_ratio = kInf;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (pos_[j] >= 0 || lb_[j] == ub_[j]) continue;
    const double a = tr[j];
    if (std::abs(a) <= opt_.pivot_tol) continue;
    const double dir = direction(j, a);
    if (-a * dir * s <= 0.0) continue;
    const double ratio = std::max(0.0, d_[j] * dir) / std::abs(a);
    if (bland_) {
      if (ratio < best_ratio) {
        best_ratio = ratio;
        q = j;
      }
    } else if (ratio <= tmax && std::abs(a) > best_a) {
      best_a = std::abs(a);
      q = j;
    }
  }
  if (q == kNone) return Step::infeasible;

  const double aq = tr[q];
  const double delta = (bound - x_[out]) / (-aq);
  for (std::size_t i = 0; i < m_; ++i) {
    const double a = t_(i, q);
    if (a != 0.0) x_[head_[i]] -= a * delta;
  }
  x_[q] += delta;
  x_[out] = bound;
  note_step(std::abs(d_[q] / aq));
  stat_[out] = to_lower ? Stat::lower : Stat::upper;
  pivot(r, q);
  return Step::progress;
}

SimplexEngine::Step SimplexEngine::primal_iteration(bool phase_one) {
  std::vector<double> price;
  if (phase_one) {
    price.assign(cols_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const std::size_t b = head_[i];
      double c = 0.0;
      if (x_[b] < lb_[b] - opt_.primal_tol) c = -1.0;
      else if (x_[b] > ub_[b] + opt_.primal_tol) c = 1.0;
      if (c == 0.0) continue;
      const double* row = t_.row(i);
      for (std::size_t j = 0; j < cols_; ++j) price[j] -= c * row[j];
    }
  }
  auto reduced = [&](std::size_t j) { return phase_one ? price[j] : d_[j]; };

  std::size_t q = kNone;
  double best = 0.0;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (pos_[j] >= 0 || lb_[j] == ub_[j]) continue;
    const double dj = reduced(j);
    const bool up = dj < -opt_.dual_tol && (stat_[j] == Stat::lower || stat_[j] == Stat::free);
    const bool down = dj > opt_.dual_tol && (stat_[j] == Stat::upper || stat_[j] == Stat::free);
    if (!up && !down) continue;
    if (bland_) {
      q = j;
      break;
    }
    if (std::abs(dj) > best) {
      best = std::abs(dj);
      q = j;
    }
  }
  if (q == kNone) return Step::done;
  const double dir = reduced(q) < 0.0 ? 1.0 : -1.0;

  struct Limit {
    double exact;
    double relaxed;
    bool to_lower;
  };
  auto limit_for = [&](std::size_t i, double alpha) -> std::optional<Limit> {
    const std::size_t b = head_[i];
    const double xi = x_[b];
    const double tol = opt_.primal_tol;
    if (phase_one && xi < lb_[b] - tol) {
      if (alpha > opt_.pivot_tol) return Limit{(lb_[b] - xi) / alpha, (lb_[b] - xi + tol) / alpha, true};
      return std::nullopt;
    }
    if (phase_one && xi > ub_[b] + tol) {
      if (alpha < -opt_.pivot_tol) return Limit{(xi - ub_[b]) / -alpha, (xi - ub_[b] + tol) / -alpha, false};
      return std::nullopt;
    }
    if (alpha < -opt_.pivot_tol && std::isfinite(lb_[b])) {
      return Limit{(xi - lb_[b]) / -alpha, (xi - lb_[b] + tol) / -alpha, true};
    }
    if (alpha > opt_.pivot_tol && std::isfinite(ub_[b])) {
      return Limit{(ub_[b] - xi) / alpha, (ub_[b] - xi + tol) / alpha, false};
    }
    return std::nullopt;
  };

  double tmax = kInf;
  for (std::size_t i = 0; i < m_; ++i) {
    const double alpha = -t_(i, q) * dir;
    if (auto lim = limit_for(i, alpha)) tmax = std::min(tmax, bland_ ? lim->exact : lim->relaxed);
  }
  const double flip = is_boxed(q) ? ub_[q] - lb_[q] : kInf;

  if (!std::isfinite(tmax) && !std::isfinite(flip)) return Step::unbounded;

  if (flip <= tmax) {
    for (std::size_t i = 0; i < m_; ++i) {
      const double a = t_(i, q);
      if (a != 0.0) x_[head_[i]] += -a * dir * flip;
    }
    stat_[q] = stat_[q] == Stat::lower ? Stat::upper : Stat::lower;
    x_[q] = stat_[q] == Stat::lower ? lb_[q] : ub_[q];
    note_step(flip);
    return Step::progress;
  }

  std::size_t r = kNone;
  Limit chosen{};
  double best_alpha = 0.0;
  for (std::size_t i = 0; i < m_; ++i) {
    const double alpha = -t_(i, q) * dir;
    auto lim = limit_for(i, alpha);
    if (!lim || lim->exact > tmax) continue;
    if (bland_) {
      if (r == kNone || head_[i] < head_[r]) {
        r = i;
        chosen = *lim;
      }
    } else if (std::abs(alpha) > best_alpha) {
      best_alpha = std::abs(alpha);
      r = i;
      chosen = *lim;
    }
  }
  if (r == kNone) return Step::unbounded;

  const double step = std::max(0.0, chosen.exact);
  for (std::size_t i = 0; i < m_; ++i) {
    const double a = t_(i, q);
    if (a != 0.0) x_[head_[i]] += -a * dir * step;
  }
  x_[q] += dir * step;
  const std::size_t out = head_[r];
  x_[out] = chosen.to_lower ? lb_[out] : ub_[out];
  stat_[out] = chosen.to_lower ? Stat::lower : Stat::upper;
  note_step(step);
  pivot(r, q);
  return Step::progress;
}

void SimplexEngine::recompute_basics() {
  for (std::size_t i = 0; i < m_; ++i) {
    const double* row = t_.row(i);
    double v = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) {
      if (pos_[j] < 0 && row[j] != 0.0) v -= row[j] * x_[j];
    }
    x_[head_[i]] = v;
  }
}

void SimplexEngine::recompute_duals() {
  d_ = cost_;
  for (std::size_t i = 0; i < m_; ++i) {
    const double c = cost_[head_[i]];
    if (c == 0.0) continue;
    const double* row = t_.row(i);
    for (std::size_t j = 0; j < cols_; ++j) d_[j] -= c * row[j];
  }
  for (std::size_t i = 0; i < m_; ++i) d_[head_[i]] = 0.0;
}

double SimplexEngine::residual() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < m_; ++i) {
    double act = 0.0;
    double scale = 1.0;
    for (const auto& t : rows_[i]) {
      act += t.coef * x_[t.var];
      scale = std::max(scale, std::abs(t.coef * x_[t.var]));
    }
    worst = std::max(worst, std::abs(act - x_[n_ + i]) / scale);
  }
  return worst;
}

void SimplexEngine::refactor() {
  ++refactorizations_;
  std::vector<bool> target(cols_, false);
  for (const std::size_t b : head_) target[b] = true;

  std::fill(t_.data.begin(), t_.data.end(), 0.0);
  for (std::size_t i = 0; i < m_; ++i) {
    for (const auto& t : rows_[i]) t_(i, t.var) = -t.coef;
    t_(i, n_ + i) = 1.0;
    head_[i] = n_ + i;
  }
  std::fill(pos_.begin(), pos_.end(), -1);
  for (std::size_t i = 0; i < m_; ++i) pos_[n_ + i] = static_cast<long>(i);
  d_ = cost_;

  std::vector<bool> open_row(m_, false);
  for (std::size_t i = 0; i < m_; ++i) open_row[i] = !target[n_ + i];
  std::vector<std::size_t> dropped;
  for (std::size_t q = 0; q < n_; ++q) {
    if (!target[q]) continue;
    std::size_t r = kNone;
    double best = 1e-9;
    for (std::size_t i = 0; i < m_; ++i) {
      if (open_row[i] && std::abs(t_(i, q)) > best) {
        best = std::abs(t_(i, q));
        r = i;
      }
    }
    if (r == kNone) {
      dropped.push_back(q);
      continue;
    }
    const std::size_t slack = head_[r];
    const Stat keep = stat_[slack];
    pivot(r, q);
    stat_[slack] = keep;
    open_row[r] = false;
  }
  // Rows that could not take a structural keep their slack basic.
  for (std::size_t i = 0; i < m_; ++i) stat_[head_[i]] = Stat::basic;
  for (const std::size_t q : dropped) {
    stat_[q] = Stat::lower;
    pos_[q] = -1;
  }
  recompute_duals();
  for (const std::size_t q : dropped) place_nonbasic(q);
  for (std::size_t j = 0; j < cols_; ++j) {
    if (pos_[j] >= 0) continue;
    if (stat_[j] == Stat::basic) place_nonbasic(j);
    x_[j] = stat_[j] == Stat::lower ? lb_[j] : stat_[j] == Stat::upper ? ub_[j] : 0.0;
  }
  recompute_basics();
}

void SimplexEngine::maintain() {
  since_maintain_ = 0;
  recompute_basics();
  if (residual() > kResidualTol) refactor();
  recompute_duals();
}

void SimplexEngine::perturb_costs() {
  base_cost_ = cost_;
  perturbed_ = true;
  perturb_slack_ = 0.0;
  for (std::size_t j = 0; j < cols_; ++j) {
    if (pos_[j] >= 0 || lb_[j] == ub_[j] || stat_[j] == Stat::free) continue;
    // Deterministic spread so ties between equal columns break consistently.
    const double u = static_cast<double>((j * 2654435761u) % 1000u) / 1000.0;
    const double eps = 1e-6 * (1.0 + std::abs(cost_[j])) * (1.0 + u);
    const double dir = stat_[j] == Stat::lower ? 1.0 : -1.0;
    cost_[j] += dir * eps;
    d_[j] += dir * eps;
    const double reach = std::max(std::abs(lb_[j]), std::abs(ub_[j]));
    perturb_slack_ += eps * reach;
  }
}

void SimplexEngine::restore_costs() {
  if (!perturbed_) return;
  cost_ = base_cost_;
  perturbed_ = false;
  perturb_slack_ = 0.0;
  recompute_duals();
}

bool SimplexEngine::dual_feasible() const {
  for (std::size_t j = 0; j < cols_; ++j) {
    if (pos_[j] >= 0 || lb_[j] == ub_[j]) continue;
    const double d = d_[j];
    if (stat_[j] == Stat::lower && d < -opt_.dual_tol) return false;
    if (stat_[j] == Stat::upper && d > opt_.dual_tol) return false;
    if (stat_[j] == Stat::free && std::abs(d) > opt_.dual_tol) return false;
  }
  return true;
}

double SimplexEngine::internal_objective() const {
  double v = 0.0;
  for (std::size_t j = 0; j < n_; ++j) v += cost_[j] * x_[j];
  return v;
}

double SimplexEngine::objective() const { return sense_ * internal_objective(); }

std::vector<double> SimplexEngine::solution() const { return {x_.begin(), x_.begin() + static_cast<long>(n_)}; }

LpStatus SimplexEngine::solve(double cutoff) {
  long iters = 0;
  bool primal_mode = false;
  bool tried_perturbation = false;
  int verifications = 0;
  bland_ = false;
  degenerate_run_ = 0;

  // A confirmed result is re-checked once against freshly recomputed
  // values, so accumulated drift cannot produce a false verdict.
  auto confirm = [&]() {
    if (verifications++ >= 3) return true;
    maintain();
    return false;
  };
  auto finish = [&](LpStatus s) {
    restore_costs();
    return s;
  };

  while (true) {
    if (opt_.iteration_limit >= 0 && iters >= opt_.iteration_limit) return finish(LpStatus::iteration_limit);
    if (!primal_mode && !repair_dual()) primal_mode = true;

    Step step;
    if (!primal_mode) {
      if (!tried_perturbation && degenerate_run_ >= kPerturbAfter) {
        tried_perturbation = true;
        perturb_costs();
        degenerate_run_ = 0;
        bland_ = false;
      }
      if (std::isfinite(cutoff) && internal_objective() - perturb_slack_ > cutoff) {
        if (confirm()) return finish(LpStatus::cutoff);
        continue;
      }
      step = dual_iteration();
      if (step == Step::done && perturbed_) {
        // Optimal for the perturbed costs; clean up with primal simplex.
        restore_costs();
        if (!dual_feasible()) primal_mode = true;
        continue;
      }
      if (step == Step::done) {
        if (confirm()) return finish(LpStatus::optimal);
        if (primal_feasible() && repair_dual()) return finish(LpStatus::optimal);
        continue;
      }
      if (step == Step::infeasible) {
        if (confirm()) return finish(LpStatus::infeasible);
        continue;
      }
    } else {
      const bool phase_one = !primal_feasible();
      step = primal_iteration(phase_one);
      if (step == Step::done) {
        if (confirm()) return finish(phase_one ? LpStatus::infeasible : LpStatus::optimal);
        continue;
      }
      if (step == Step::unbounded) {
        if (confirm()) return finish(phase_one ? LpStatus::infeasible : LpStatus::unbounded);
        continue;
      }
    }
    ++iters;
    ++total_iterations_;
    if (++since_maintain_ >= opt_.recompute_every) maintain();
  }
}

LpResult solve_lp_relaxation(const MipModel& model, const SimplexOptions& options) {
  SimplexEngine engine(model, options);
  LpResult res;
  res.status = engine.solve();
  res.iterations = engine.iterations();
  res.x = engine.solution();
  res.objective = engine.objective();
  return res;
}

}  // namespace wmforge
