#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace wmforge {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { binary, continuous };
enum class RowSense { le, ge, eq };
enum class ObjSense { minimize, maximize };

struct Variable {
  std::string name;
  VarKind kind = VarKind::continuous;
  double lb = 0.0;
  double ub = kInf;
  bool operator==(const Variable&) const = default;
};

struct Term {
  std::size_t var = 0;
  double coef = 0.0;
  bool operator==(const Term&) const = default;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;  // sorted by var, no duplicates, no zeros
  RowSense sense = RowSense::le;
  double rhs = 0.0;
  bool operator==(const Constraint&) const = default;
};

/// Linear model over binary and continuous variables. Terms are
/// normalized on insertion so structurally equal models compare equal.
class MipModel {
 public:
  std::size_t add_variable(std::string name, VarKind kind, double lb, double ub);
  std::size_t add_binary(std::string name) { return add_variable(std::move(name), VarKind::binary, 0.0, 1.0); }
  std::size_t add_continuous(std::string name, double lb, double ub) {
    return add_variable(std::move(name), VarKind::continuous, lb, ub);
  }

  std::size_t add_constraint(std::string name, std::vector<Term> terms, RowSense sense, double rhs);
  void set_objective(std::vector<Term> terms, ObjSense sense);

  /// Narrows bounds of an existing variable (binaries stay within [0, 1]).
  void set_bounds(std::size_t var, double lb, double ub);

  const std::vector<Variable>& variables() const { return vars_; }
  const std::vector<Constraint>& constraints() const { return rows_; }
  const std::vector<Term>& objective() const { return obj_; }
  ObjSense objective_sense() const { return sense_; }
  std::size_t num_variables() const { return vars_.size(); }
  std::size_t num_constraints() const { return rows_.size(); }
  std::size_t num_binaries() const;

  std::optional<std::size_t> find_variable(const std::string& name) const;
  double objective_value(const std::vector<double>& x) const;

  /// Throws InputError if any row references an undeclared variable or a
  /// binary has bounds outside [0, 1].
  void validate() const;

  bool operator==(const MipModel& o) const {
    return vars_ == o.vars_ && rows_ == o.rows_ && obj_ == o.obj_ && sense_ == o.sense_;
  }

 private:
  std::vector<Variable> vars_;
  std::vector<Constraint> rows_;
  std::vector<Term> obj_;
  ObjSense sense_ = ObjSense::minimize;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Sorts by variable, merges duplicates, drops exact zeros.
std::vector<Term> normalize_terms(std::vector<Term> terms);

}  // namespace wmforge
