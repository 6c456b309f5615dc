#include "wmforge/mip_model.hpp"

#include <algorithm>
#include <cmath>

#include "wmforge/errors.hpp"

namespace wmforge {

std::vector<Term> normalize_terms(std::vector<Term> terms) {
  std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
  std::vector<Term> out;
  out.reserve(terms.size());
  for (const auto& t : terms) {
    if (!out.empty() && out.back().var == t.var) {
      out.back().coef += t.coef;
    } else {
      out.push_back(t);
    }
  }
  std::erase_if(out, [](const Term& t) { return t.coef == 0.0; });
  return out;
}

std::size_t MipModel::add_variable(std::string name, VarKind kind, double lb, double ub) {
  if (name.empty()) name = "x" + std::to_string(vars_.size());
  if (index_.contains(name)) throw InputError("duplicate variable name '" + name + "'");
  if (std::isnan(lb) || std::isnan(ub) || lb > ub) throw InputError("invalid bounds for '" + name + "'");
  if (kind == VarKind::binary && (lb < 0.0 || ub > 1.0)) throw InputError("binary '" + name + "' outside [0,1]");
  index_.emplace(name, vars_.size());
  vars_.push_back(Variable{std::move(name), kind, lb, ub});
  return vars_.size() - 1;
}

std::size_t MipModel::add_constraint(std::string name, std::vector<Term> terms, RowSense sense, double rhs) {
  if (!std::isfinite(rhs)) throw InputError("constraint rhs must be finite");
  for (const auto& t : terms) {
    if (t.var >= vars_.size()) throw InputError("constraint references an undeclared variable");
    if (!std::isfinite(t.coef)) throw InputError("constraint coefficient must be finite");
  }
  if (name.empty()) name = "r" + std::to_string(rows_.size());
  rows_.push_back(Constraint{std::move(name), normalize_terms(std::move(terms)), sense, rhs});
  return rows_.size() - 1;
}

void MipModel::set_objective(std::vector<Term> terms, ObjSense sense) {
  for (const auto& t : terms) {
    if (t.var >= vars_.size()) throw InputError("objective references an undeclared variable");
  }
  obj_ = normalize_terms(std::move(terms));
  sense_ = sense;
}

void MipModel::set_bounds(std::size_t var, double lb, double ub) {
  auto& v = vars_.at(var);
  if (lb > ub) throw InputError("invalid bounds for '" + v.name + "'");
  if (v.kind == VarKind::binary && (lb < 0.0 || ub > 1.0)) throw InputError("binary bounds outside [0,1]");
  v.lb = lb;
  v.ub = ub;
}

std::size_t MipModel::num_binaries() const {
  return static_cast<std::size_t>(
      std::count_if(vars_.begin(), vars_.end(), [](const Variable& v) { return v.kind == VarKind::binary; }));
}

std::optional<std::size_t> MipModel::find_variable(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

double MipModel::objective_value(const std::vector<double>& x) const {
  double s = 0.0;
  for (const auto& t : obj_) s += t.coef * x.at(t.var);
  return s;
}

void MipModel::validate() const {
  for (const auto& v : vars_) {
    if (v.kind == VarKind::binary && (v.lb < 0.0 || v.ub > 1.0)) {
      throw InputError("binary '" + v.name + "' has bounds outside [0,1]");
    }
    if (v.lb > v.ub) throw InputError("variable '" + v.name + "' has empty bounds");
  }
  for (const auto& r : rows_) {
    for (const auto& t : r.terms) {
      if (t.var >= vars_.size()) throw InputError("row '" + r.name + "' references an undeclared variable");
    }
  }
  for (const auto& t : obj_) {
    if (t.var >= vars_.size()) throw InputError("objective references an undeclared variable");
  }
}

}  // namespace wmforge
