#pragma once

#include <cstdint>
#include <vector>

#include "wmforge/mip_model.hpp"

namespace wmforge {

enum class MipStatus { optimal, feasible_gap, infeasible, time_limit, unbounded };

const char* to_string(MipStatus s);

struct SolverConfig {
  double mip_gap = 1e-4;
  double time_limit_seconds = 600.0;
  double feasibility_tol = 1e-6;
  double integrality_tol = 1e-6;
  std::uint64_t seed = 0x6d6970;  // randomized rounding is not used; kept for config stability
  long node_limit = -1;           // deterministic work limits; -1 = none
  long lp_iteration_limit = -1;
  int threads = 1;  // OpenMP workers inside the pivot kernel
  int heuristic_every = 25;  // nodes between rounding attempts
  bool honor_env = true;  // WMFORGE_SOLVER_TIME_LIMIT overrides time_limit_seconds

  /// Throws ConfigError on non-positive tolerances or limits.
  void validate() const;
};

struct MipSolution {
  MipStatus status = MipStatus::infeasible;
  bool has_solution = false;
  double objective = 0.0;
  std::vector<double> x;
  double best_bound = 0.0;
  double gap = 0.0;
  long nodes = 0;
  long lp_iterations = 0;
  double wall_seconds = 0.0;
  /// Incumbent objective each time it improved, in order.
  std::vector<double> incumbent_trace;
};

/// Branch-and-bound over the simplex relaxation: depth-first dive until the
/// first incumbent, then best-bound order (ties by node id), most-fractional
/// branching with lowest-index ties. `warm_start` is tried as an initial
/// incumbent; for mixed models only its binary part has to be right.
/// Status is feasible_gap when a node or LP-iteration limit stops the
/// search with an incumbent, time_limit when the clock runs out or a work
/// limit is hit before any incumbent exists.
MipSolution solve_mip(const MipModel& model, const SolverConfig& config = {},
                      const std::vector<double>* warm_start = nullptr);

/// Effective time limit after the environment override.
double effective_time_limit(const SolverConfig& config);

}  // namespace wmforge
