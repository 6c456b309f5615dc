#include "wmforge/feasibility.hpp"

#include <cmath>
#include <sstream>

namespace wmforge {

namespace {
constexpr std::size_t kMaxMessages = 8;

void note(AuditReport& r, const std::string& what) {
  r.ok = false;
  if (r.messages.size() < kMaxMessages) r.messages.push_back(what);
}
}  // namespace

AuditReport audit_assignment(const MipModel& model, const std::vector<double>& x, double tol) {
  AuditReport rep;
  if (x.size() != model.num_variables()) {
    note(rep, "assignment has " + std::to_string(x.size()) + " values for " +
                  std::to_string(model.num_variables()) + " variables");
    return rep;
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    const auto& v = model.variables()[j];
    if (!std::isfinite(x[j])) {
      note(rep, v.name + " is not finite");
      continue;
    }
    const double bv = std::max(v.lb - x[j], x[j] - v.ub);
    if (bv > 0.0) rep.max_bound_violation = std::max(rep.max_bound_violation, bv);
    if (bv > tol) note(rep, v.name + " outside its bounds");
    if (v.kind == VarKind::binary) {
      const double iv = std::min(std::abs(x[j]), std::abs(x[j] - 1.0));
      rep.max_integrality_violation = std::max(rep.max_integrality_violation, iv);
      if (iv > tol) note(rep, v.name + " is not 0/1");
    }
  }
  for (const auto& row : model.constraints()) {
    long double act = 0.0L;
    for (const auto& t : row.terms) act += static_cast<long double>(t.coef) * x[t.var];
    double viol = 0.0;
    if (row.sense != RowSense::ge) viol = std::max(viol, static_cast<double>(act - row.rhs));
    if (row.sense != RowSense::le) viol = std::max(viol, static_cast<double>(row.rhs - act));
    rep.max_row_violation = std::max(rep.max_row_violation, viol);
    if (viol > tol) {
      std::ostringstream s;
      s << row.name << " violated by " << viol;
      note(rep, s.str());
    }
  }
  return rep;
}

}  // namespace wmforge
