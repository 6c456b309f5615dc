#pragma once

#include <string>
#include <vector>

#include "wmforge/mip_model.hpp"

namespace wmforge {

struct AuditReport {
  bool ok = true;
  double max_row_violation = 0.0;
  double max_bound_violation = 0.0;
  double max_integrality_violation = 0.0;
  std::vector<std::string> messages;  // first few violations, human readable
};

/// Checks an assignment against the model's rows, bounds and integrality
/// directly from the model data. Deliberately independent of the solver.
AuditReport audit_assignment(const MipModel& model, const std::vector<double>& x, double tol = 1e-6);

}  // namespace wmforge
