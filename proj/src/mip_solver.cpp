#include "wmforge/mip_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <memory>
#include <queue>

#include "wmforge/errors.hpp"
#include "wmforge/simplex.hpp"

namespace wmforge {

const char* to_string(MipStatus s) {
  switch (s) {
    case MipStatus::optimal: return "optimal";
    case MipStatus::feasible_gap: return "feasible_gap";
    case MipStatus::infeasible: return "infeasible";
    case MipStatus::time_limit: return "time_limit";
    case MipStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (!(mip_gap >= 0.0)) throw ConfigError("mip_gap must be non-negative");
  if (!(time_limit_seconds > 0.0)) throw ConfigError("time_limit_seconds must be positive");
  if (!(feasibility_tol > 0.0) || !(integrality_tol > 0.0)) throw ConfigError("tolerances must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (heuristic_every < 1) throw ConfigError("heuristic_every must be >= 1");
}

double effective_time_limit(const SolverConfig& config) {
  if (config.honor_env) {
    if (const char* env = std::getenv("WMFORGE_SOLVER_TIME_LIMIT")) {
      char* end = nullptr;
      const double v = std::strtod(env, &end);
      if (end != env && v > 0.0) return v;
    }
  }
  return config.time_limit_seconds;
}

namespace {

constexpr double kAbsGap = 1e-9;

struct ColumnEntry {
  std::size_t row;
  double coef;
};

class BranchAndBound {
 public:
  BranchAndBound(const MipModel& model, const SolverConfig& cfg)
      : model_(model), cfg_(cfg), sense_(model.objective_sense() == ObjSense::maximize ? -1.0 : 1.0) {
    SimplexOptions opt;
    opt.threads = cfg.threads;
    lp_ = std::make_unique<SimplexEngine>(model, opt);
    const std::size_t n = model.num_variables();
    cost_.assign(n, 0.0);
    for (const auto& t : model.objective()) cost_[t.var] = sense_ * t.coef;
    columns_.resize(n);
    for (std::size_t i = 0; i < model.num_constraints(); ++i) {
      for (const auto& t : model.constraints()[i].terms) columns_[t.var].push_back({i, t.coef});
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (model.variables()[j].kind == VarKind::binary) binaries_.push_back(j);
      else if (model.variables()[j].lb != model.variables()[j].ub) has_continuous_ = true;
      root_lb_.push_back(model.variables()[j].lb);
      root_ub_.push_back(model.variables()[j].ub);
    }
    cur_lb_ = root_lb_;
    cur_ub_ = root_ub_;
  }

  MipSolution run(const std::vector<double>* warm_start);

 private:
  struct Node {
    long parent;
    std::size_t var;
    double lb, ub;
    double bound;
  };
  struct HeapItem {
    double bound;
    long id;
    bool operator<(const HeapItem& o) const {  // inverted: priority_queue is a max-heap
      if (bound != o.bound) return bound > o.bound;
      return id > o.id;
    }
  };

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  double internal(const std::vector<double>& x) const {
    double v = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) v += cost_[j] * x[j];
    return v;
  }
  double prune_threshold() const {
    if (!has_inc_) return kInf;
    return inc_obj_ - std::max(kAbsGap, cfg_.mip_gap * std::abs(inc_obj_));
  }
  bool violates(const std::vector<double>& x, double tol) const;
  bool apply_node(long id);
  void set_var_bounds(std::size_t j, double lb, double ub);
  void offer(std::vector<double> x);
  void rounding_heuristic(const std::vector<double>& lp_x);
  bool repair_binary(std::vector<double>& x) const;
  void fix_and_solve(const std::vector<double>& x);
  void reduced_cost_fixing();

  const MipModel& model_;
  SolverConfig cfg_;
  double sense_;
  std::unique_ptr<SimplexEngine> lp_;
  std::unique_ptr<SimplexEngine> fixer_;
  std::vector<double> cost_;
  std::vector<std::vector<ColumnEntry>> columns_;
  std::vector<std::size_t> binaries_;
  bool has_continuous_ = false;
  std::vector<double> root_lb_, root_ub_, cur_lb_, cur_ub_;
  std::vector<std::size_t> touched_;
  std::vector<Node> nodes_;

  bool has_inc_ = false;
  double inc_obj_ = kInf;
  std::vector<double> inc_x_;
  std::vector<double> trace_;

  bool have_root_ = false;
  double root_obj_ = 0.0;
  std::vector<double> root_d_;
  std::vector<double> root_x_;

  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

bool BranchAndBound::violates(const std::vector<double>& x, double tol) const {
  for (std::size_t j = 0; j < x.size(); ++j) {
    const auto& v = model_.variables()[j];
    if (x[j] < v.lb - tol || x[j] > v.ub + tol) return true;
  }
  for (const auto& row : model_.constraints()) {
    double act = 0.0;
    for (const auto& t : row.terms) act += t.coef * x[t.var];
    if (row.sense != RowSense::ge && act > row.rhs + tol) return true;
    if (row.sense != RowSense::le && act < row.rhs - tol) return true;
  }
  return false;
}

void BranchAndBound::offer(std::vector<double> x) {
  for (const std::size_t j : binaries_) {
    if (std::abs(x[j] - std::round(x[j])) > cfg_.integrality_tol) return;
  }
  std::vector<double> snapped = x;
  for (const std::size_t j : binaries_) snapped[j] = std::round(x[j]);
  if (!violates(snapped, cfg_.feasibility_tol)) {
    x = std::move(snapped);
  } else if (violates(x, cfg_.feasibility_tol)) {
    return;
  }
  const double v = internal(x);
  if (has_inc_ && v >= inc_obj_ - 1e-12) return;
  has_inc_ = true;
  inc_obj_ = v;
  inc_x_ = std::move(x);
  trace_.push_back(sense_ * v);
  reduced_cost_fixing();
}

void BranchAndBound::set_var_bounds(std::size_t j, double lb, double ub) {
  if (cur_lb_[j] == lb && cur_ub_[j] == ub) return;
  cur_lb_[j] = lb;
  cur_ub_[j] = ub;
  lp_->set_bounds(j, lb, ub);
}

// Brings the engine bounds to those of node `id`; false if they conflict.
bool BranchAndBound::apply_node(long id) {
  std::map<std::size_t, std::pair<double, double>> want;
  for (long k = id; k >= 0; k = nodes_[static_cast<std::size_t>(k)].parent) {
    const auto& nd = nodes_[static_cast<std::size_t>(k)];
    if (nd.parent < 0) break;
    auto [it, fresh] = want.try_emplace(nd.var, root_lb_[nd.var], root_ub_[nd.var]);
    // Deeper changes are visited first and are at least as tight.
    if (fresh) it->second = {nd.lb, nd.ub};
  }
  bool ok = true;
  for (auto& [j, b] : want) {
    b.first = std::max(b.first, root_lb_[j]);
    b.second = std::min(b.second, root_ub_[j]);
    if (b.first > b.second) ok = false;
  }
  if (!ok) return false;
  for (const std::size_t j : touched_) {
    if (!want.contains(j)) set_var_bounds(j, root_lb_[j], root_ub_[j]);
  }
  touched_.clear();
  for (const auto& [j, b] : want) {
    set_var_bounds(j, b.first, b.second);
    touched_.push_back(j);
  }
  return true;
}

bool BranchAndBound::repair_binary(std::vector<double>& x) const {
  const auto& rows = model_.constraints();
  std::vector<double> act(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& t : rows[i].terms) act[i] += t.coef * x[t.var];
  }
  auto row_viol = [&](std::size_t i, double a) {
    const auto& r = rows[i];
    double v = 0.0;
    if (r.sense != RowSense::ge) v = std::max(v, a - r.rhs);
    if (r.sense != RowSense::le) v = std::max(v, r.rhs - a);
    return v;
  };
  auto flip_delta = [&](std::size_t j) {
    const double step = x[j] > 0.5 ? -1.0 : 1.0;
    double dv = 0.0;
    for (const auto& e : columns_[j]) dv += row_viol(e.row, act[e.row] + e.coef * step) - row_viol(e.row, act[e.row]);
    return dv;
  };
  auto flip = [&](std::size_t j) {
    const double step = x[j] > 0.5 ? -1.0 : 1.0;
    x[j] += step;
    for (const auto& e : columns_[j]) act[e.row] += e.coef * step;
  };
  auto movable = [&](std::size_t j) { return root_lb_[j] != root_ub_[j] && cur_lb_[j] != cur_ub_[j]; };

  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) total += row_viol(i, act[i]);
  const std::size_t max_steps = 2 * binaries_.size() + 10;
  for (std::size_t step = 0; step < max_steps && total > 1e-9; ++step) {
    std::size_t best = binaries_.size();
    double best_dv = -1e-12;
    double best_dc = kInf;
    for (std::size_t k = 0; k < binaries_.size(); ++k) {
      const std::size_t j = binaries_[k];
      if (!movable(j)) continue;
      const double dv = flip_delta(j);
      const double dc = cost_[j] * (x[j] > 0.5 ? -1.0 : 1.0);
      if (dv < best_dv - 1e-12 || (std::abs(dv - best_dv) <= 1e-12 && dc < best_dc)) {
        best = k;
        best_dv = dv;
        best_dc = dc;
      }
    }
    if (best == binaries_.size()) return false;
    flip(binaries_[best]);
    total += best_dv;
  }
  if (total > 1e-9) return false;

  // 1-opt: drop cost where it keeps every row satisfied.
  std::vector<std::size_t> order = binaries_;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(cost_[a]) > std::abs(cost_[b]); });
  for (int pass = 0; pass < 2; ++pass) {
    bool changed = false;
    for (const std::size_t j : order) {
      if (!movable(j)) continue;
      const double gain = x[j] > 0.5 ? cost_[j] : -cost_[j];
      if (gain <= 0.0) continue;
      if (flip_delta(j) <= 1e-12) {
        bool all_ok = true;
        const double s = x[j] > 0.5 ? -1.0 : 1.0;
        for (const auto& e : columns_[j]) {
          if (row_viol(e.row, act[e.row] + e.coef * s) > 1e-9) all_ok = false;
        }
        if (all_ok) {
          flip(j);
          changed = true;
        }
      }
    }
    if (!changed) break;
  }
  return true;
}

void BranchAndBound::fix_and_solve(const std::vector<double>& x) {
  if (!fixer_) {
    SimplexOptions opt;
    opt.threads = cfg_.threads;
    fixer_ = std::make_unique<SimplexEngine>(model_, opt);
  }
  for (const std::size_t j : binaries_) fixer_->set_bounds(j, x[j], x[j]);
  if (fixer_->solve(prune_threshold()) == LpStatus::optimal) offer(fixer_->solution());
}

void BranchAndBound::rounding_heuristic(const std::vector<double>& lp_x) {
  std::vector<double> x = lp_x;
  for (const std::size_t j : binaries_) x[j] = std::clamp(std::round(lp_x[j]), cur_lb_[j], cur_ub_[j]);
  if (!has_continuous_) {
    if (repair_binary(x)) offer(x);
  } else {
    fix_and_solve(x);
  }
}

// Binaries whose reduced cost alone would push the root bound past the
// incumbent are fixed at their root value for the rest of the search.
void BranchAndBound::reduced_cost_fixing() {
  if (!have_root_ || !has_inc_) return;
  const double slack = prune_threshold() - root_obj_;
  for (const std::size_t j : binaries_) {
    if (root_lb_[j] == root_ub_[j]) continue;
    const double d = root_d_[j];
    if (root_x_[j] <= 0.0 && d > slack + 1e-9) {
      root_ub_[j] = 0.0;
      touched_.push_back(j);
    } else if (root_x_[j] >= 1.0 && -d > slack + 1e-9) {
      root_lb_[j] = 1.0;
      touched_.push_back(j);
    }
  }
}

MipSolution BranchAndBound::run(const std::vector<double>* warm_start) {
  const double time_limit = effective_time_limit(cfg_);
  MipSolution sol;
  bool work_limit = false;
  bool time_out = false;

  if (warm_start && warm_start->size() == model_.num_variables()) {
    offer(*warm_start);
    if (!has_inc_ && has_continuous_) {
      std::vector<double> x = *warm_start;
      for (const std::size_t j : binaries_) x[j] = std::clamp(std::round(x[j]), 0.0, 1.0);
      fix_and_solve(x);
    }
  }

  nodes_.push_back({-1, 0, 0.0, 0.0, -kInf});
  std::vector<long> dive{0};
  std::priority_queue<HeapItem> heap;
  double pruned_bound = kInf;
  long processed = 0;
  bool unbounded = false;

  auto open_bound = [&]() {
    double b = kInf;
    if (!heap.empty()) b = heap.top().bound;
    for (const long id : dive) b = std::min(b, nodes_[static_cast<std::size_t>(id)].bound);
    return b;
  };
  auto gap_closed = [&]() {
    if (!has_inc_) return false;
    const double bound = std::min(open_bound(), pruned_bound);
    return (inc_obj_ - bound) <= std::max(kAbsGap, cfg_.mip_gap * std::max(std::abs(inc_obj_), 1e-10));
  };

  while (!dive.empty() || !heap.empty()) {
    if (has_inc_ && !dive.empty()) {
      for (const long id : dive) heap.push({nodes_[static_cast<std::size_t>(id)].bound, id});
      dive.clear();
    }
    if (gap_closed()) break;
    if (elapsed() > time_limit) {
      time_out = true;
      break;
    }
    if (cfg_.node_limit >= 0 && processed >= cfg_.node_limit) {
      work_limit = true;
      break;
    }
    long id;
    if (!dive.empty()) {
      id = dive.back();
      dive.pop_back();
    } else {
      id = heap.top().id;
      heap.pop();
    }
    const double parent_bound = nodes_[static_cast<std::size_t>(id)].bound;
    if (parent_bound >= prune_threshold()) {
      pruned_bound = std::min(pruned_bound, parent_bound);
      continue;
    }
    if (!apply_node(id)) continue;

    if (cfg_.lp_iteration_limit >= 0) {
      const long left = cfg_.lp_iteration_limit - lp_->iterations();
      if (left <= 0) {
        work_limit = true;
        heap.push({parent_bound, id});
        break;
      }
      lp_->set_iteration_limit(left);
    }
    const LpStatus st = lp_->solve(prune_threshold());
    ++processed;
    if (st == LpStatus::iteration_limit) {
      work_limit = true;
      heap.push({parent_bound, id});
      break;
    }
    if (st == LpStatus::infeasible) continue;
    if (st == LpStatus::unbounded) {
      if (id == 0) {
        unbounded = true;
        break;
      }
      continue;
    }
    const double z = lp_->internal_objective();
    if (st == LpStatus::cutoff || z >= prune_threshold()) {
      pruned_bound = std::min(pruned_bound, std::max(z, parent_bound));
      continue;
    }
    const std::vector<double> x = lp_->solution();
    if (id == 0) {
      have_root_ = true;
      root_obj_ = z;
      root_x_ = x;
      root_d_.resize(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) root_d_[j] = lp_->is_basic(j) ? 0.0 : lp_->reduced_cost(j);
      reduced_cost_fixing();
    }

    std::size_t branch = x.size();
    double best_score = cfg_.integrality_tol;
    for (const std::size_t j : binaries_) {
      const double f = x[j] - std::floor(x[j]);
      const double score = std::min(f, 1.0 - f);
      if (score > best_score) {
        best_score = score;
        branch = j;
      }
    }
    if (branch == x.size()) {
      offer(x);
      continue;
    }
    if (id == 0 || processed % cfg_.heuristic_every == 0) rounding_heuristic(x);
    if (z >= prune_threshold()) {
      pruned_bound = std::min(pruned_bound, z);
      continue;
    }

    const long down = static_cast<long>(nodes_.size());
    nodes_.push_back({id, branch, 0.0, 0.0, z});
    const long up = down + 1;
    nodes_.push_back({id, branch, 1.0, 1.0, z});
    if (!has_inc_) {
      dive.push_back(down);
      dive.push_back(up);
    } else {
      heap.push({z, down});
      heap.push({z, up});
    }
  }

  sol.nodes = processed;
  sol.lp_iterations = lp_->iterations() + (fixer_ ? fixer_->iterations() : 0);
  sol.wall_seconds = elapsed();
  sol.incumbent_trace = trace_;
  sol.has_solution = has_inc_;
  if (unbounded) {
    sol.status = MipStatus::unbounded;
    sol.has_solution = false;
    return sol;
  }
  const double bound = std::min({open_bound(), pruned_bound, has_inc_ ? inc_obj_ : kInf});
  if (has_inc_) {
    sol.x = inc_x_;
    sol.objective = model_.objective_value(inc_x_);
    sol.best_bound = sense_ * bound;
    sol.gap = std::max(0.0, inc_obj_ - bound) / std::max(std::abs(inc_obj_), 1e-10);
    if (time_out) sol.status = MipStatus::time_limit;
    else if (work_limit) sol.status = gap_closed() ? MipStatus::optimal : MipStatus::feasible_gap;
    else sol.status = MipStatus::optimal;
  } else {
    sol.best_bound = sense_ * bound;
    sol.gap = kInf;
    sol.status = (time_out || work_limit) ? MipStatus::time_limit : MipStatus::infeasible;
  }
  return sol;
}

}  // namespace

MipSolution solve_mip(const MipModel& model, const SolverConfig& config, const std::vector<double>* warm_start) {
  config.validate();
  model.validate();
  if (model.num_variables() == 0) throw InputError("model has no variables");
  BranchAndBound bb(model, config);
  return bb.run(warm_start);
}

}  // namespace wmforge
