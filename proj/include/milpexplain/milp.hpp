#pragma once

// MILP model container: variables, linear rows, indicator constraints and an
// optional linear objective, plus LP-format export.

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "milpexplain/error.hpp"

namespace milpexplain {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

using VarId = std::size_t;
using ConstraintId = std::size_t;

enum class VarKind { continuous, integer, binary };
enum class Relation { less_equal, greater_equal, equal };

struct Variable {
  VarKind kind = VarKind::continuous;
  double lower = 0.0;
  double upper = kInfinity;
  std::string name;

  bool is_integral() const { return kind != VarKind::continuous; }
};

struct Term {
  double coefficient;
  VarId var;
};

struct LinearConstraint {
  std::vector<Term> terms;
  Relation relation = Relation::less_equal;
  double rhs = 0.0;

  double activity(const std::vector<double>& values) const {
    double sum = 0.0;
    for (const auto& t : terms) sum += t.coefficient * values[t.var];
    return sum;
  }

  /// Amount by which `values` violates the row (0 when satisfied).
  double violation(const std::vector<double>& values) const {
    const double a = activity(values);
    switch (relation) {
      case Relation::less_equal: return std::max(0.0, a - rhs);
      case Relation::greater_equal: return std::max(0.0, rhs - a);
      case Relation::equal: return std::abs(a - rhs);
    }
    return 0.0;
  }
};

struct IndicatorConstraint {
  VarId binary;
  int active_value;
  LinearConstraint implied;
};

enum class ObjectiveSense { minimize, maximize };

struct Objective {
  ObjectiveSense sense = ObjectiveSense::minimize;
  std::vector<Term> terms;
  double constant = 0.0;

  double value(const std::vector<double>& values) const {
    double sum = constant;
    for (const auto& t : terms) sum += t.coefficient * values[t.var];
    return sum;
  }
};

class MilpModel {
 public:
  VarId add_variable(VarKind kind, double lower, double upper, std::string name) {
    check_bounds(lower, upper, name);
    if (kind == VarKind::binary && (lower < 0.0 || upper > 1.0)) {
      throw Error(ErrorCode::bounds, "binary variable " + name + " must have bounds within [0, 1]");
    }
    if (name.empty()) name = "v" + std::to_string(variables_.size());
    if (!names_.insert(name).second) {
      throw Error(ErrorCode::duplicate_variable, "variable name '" + name + "' already used");
    }
    variables_.push_back({kind, lower, upper, std::move(name)});
    return variables_.size() - 1;
  }

  ConstraintId add_constraint(LinearConstraint constraint, std::string name = {}) {
    check_row(constraint);
    linear_.push_back(std::move(constraint));
    linear_names_.push_back(name.empty() ? "c" + std::to_string(linear_.size() - 1) : std::move(name));
    return linear_.size() - 1;
  }

  ConstraintId add_indicator(VarId binary, int active_value, LinearConstraint implied,
                             std::string name = {}) {
    check_var(binary);
    if (variables_[binary].kind != VarKind::binary) {
      throw Error(ErrorCode::not_binary, "indicator variable " + variables_[binary].name +
                                             " is not binary");
    }
    if (active_value != 0 && active_value != 1) {
      throw Error(ErrorCode::schema, "indicator active value must be 0 or 1");
    }
    check_row(implied);
    indicators_.push_back({binary, active_value, std::move(implied)});
    indicator_names_.push_back(name.empty() ? "ind" + std::to_string(indicators_.size() - 1)
                                            : std::move(name));
    return indicators_.size() - 1;
  }

  /// Replaces the bounds of `var` and returns the previous ones.
  std::pair<double, double> set_bounds(VarId var, double lower, double upper) {
    check_var(var);
    check_bounds(lower, upper, variables_[var].name);
    auto& v = variables_[var];
    if (v.kind == VarKind::binary && (lower < 0.0 || upper > 1.0)) {
      throw Error(ErrorCode::bounds, "binary variable " + v.name + " must have bounds within [0, 1]");
    }
    auto previous = std::make_pair(v.lower, v.upper);
    v.lower = lower;
    v.upper = upper;
    return previous;
  }

  void set_objective(Objective objective) {
    for (const auto& t : objective.terms) check_var(t.var);
    objective_ = std::move(objective);
  }
  void clear_objective() { objective_.reset(); }

  const std::vector<Variable>& variables() const { return variables_; }
  const Variable& variable(VarId id) const { return variables_.at(id); }
  const std::vector<LinearConstraint>& constraints() const { return linear_; }
  const std::vector<IndicatorConstraint>& indicators() const { return indicators_; }
  const std::vector<std::string>& constraint_names() const { return linear_names_; }
  const std::vector<std::string>& indicator_names() const { return indicator_names_; }
  const std::optional<Objective>& objective() const { return objective_; }

  std::size_t num_variables() const { return variables_.size(); }
  std::size_t num_constraints() const { return linear_.size(); }
  std::size_t num_indicators() const { return indicators_.size(); }

  /// Largest violation of bounds, rows, integrality and active indicators.
  double max_violation(const std::vector<double>& values) const {
    double worst = 0.0;
    for (std::size_t j = 0; j < variables_.size(); ++j) {
      const auto& v = variables_[j];
      worst = std::max(worst, std::max(v.lower - values[j], values[j] - v.upper));
      if (v.is_integral()) worst = std::max(worst, std::abs(values[j] - std::round(values[j])));
    }
    for (const auto& row : linear_) worst = std::max(worst, row.violation(values));
    for (const auto& ind : indicators_) {
      if (std::round(values[ind.binary]) == ind.active_value) {
        worst = std::max(worst, ind.implied.violation(values));
      }
    }
    return worst;
  }

 private:
  void check_var(VarId id) const {
    if (id >= variables_.size()) {
      throw Error(ErrorCode::unknown_variable, "variable id " + std::to_string(id) + " not declared");
    }
  }

  static void check_bounds(double lower, double upper, const std::string& name) {
    if (std::isnan(lower) || std::isnan(upper) || lower > upper || lower == kInfinity ||
        upper == -kInfinity) {
      throw Error(ErrorCode::bounds, "invalid bounds for variable " + name);
    }
  }

  void check_row(const LinearConstraint& row) const {
    std::unordered_set<VarId> seen;
    for (const auto& t : row.terms) {
      check_var(t.var);
      if (!std::isfinite(t.coefficient)) {
        throw Error(ErrorCode::non_finite, "non-finite coefficient on " + variables_[t.var].name);
      }
      if (!seen.insert(t.var).second) {
        throw Error(ErrorCode::duplicate_variable,
                    "variable " + variables_[t.var].name + " appears twice in one constraint");
      }
    }
    if (!std::isfinite(row.rhs)) throw Error(ErrorCode::non_finite, "non-finite right-hand side");
  }

  std::vector<Variable> variables_;
  std::unordered_set<std::string> names_;
  std::vector<LinearConstraint> linear_;
  std::vector<std::string> linear_names_;
  std::vector<IndicatorConstraint> indicators_;
  std::vector<std::string> indicator_names_;
  std::optional<Objective> objective_;
};

// ---------------------------------------------------------------------------
// LP-format export

/// 17 significant digits: round-trips any double.
inline std::string format_number(double value) {
  if (value == 0.0) return "0";
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

namespace detail {

inline void append_terms(std::string& out, const MilpModel& model, const std::vector<Term>& terms) {
  bool first = true;
  for (const auto& t : terms) {
    const double c = t.coefficient;
    if (first) {
      out += c < 0 ? "- " : "";
    } else {
      out += c < 0 ? " - " : " + ";
    }
    out += format_number(std::abs(c));
    out += ' ';
    out += model.variable(t.var).name;
    first = false;
  }
  if (first) out += "0";
}

inline const char* relation_text(Relation r) {
  switch (r) {
    case Relation::less_equal: return " <= ";
    case Relation::greater_equal: return " >= ";
    case Relation::equal: return " = ";
  }
  return " <= ";
}

}  // namespace detail

inline std::string export_lp(const MilpModel& model) {
  std::string out;
  const auto& objective = model.objective();
  out += (objective && objective->sense == ObjectiveSense::maximize) ? "Maximize\n" : "Minimize\n";
  out += " obj:";
  if (objective && !objective->terms.empty()) {
    out += ' ';
    detail::append_terms(out, model, objective->terms);
  }
  out += "\nSubject To\n";
  for (std::size_t i = 0; i < model.num_constraints(); ++i) {
    const auto& row = model.constraints()[i];
    out += ' ' + model.constraint_names()[i] + ": ";
    detail::append_terms(out, model, row.terms);
    out += detail::relation_text(row.relation);
    out += format_number(row.rhs);
    out += '\n';
  }
  for (std::size_t i = 0; i < model.num_indicators(); ++i) {
    const auto& ind = model.indicators()[i];
    out += ' ' + model.indicator_names()[i] + ": " + model.variable(ind.binary).name + " = " +
           std::to_string(ind.active_value) + " -> ";
    detail::append_terms(out, model, ind.implied.terms);
    out += detail::relation_text(ind.implied.relation);
    out += format_number(ind.implied.rhs);
    out += '\n';
  }
  out += "Bounds\n";
  for (const auto& v : model.variables()) {
    const bool binary_default = v.kind == VarKind::binary && v.lower == 0.0 && v.upper == 1.0;
    if (binary_default) continue;
    if (v.lower == v.upper) {
      out += ' ' + v.name + " = " + format_number(v.lower) + '\n';
    } else if (v.lower == -kInfinity && v.upper == kInfinity) {
      out += ' ' + v.name + " free\n";
    } else {
      out += ' ' + (v.lower == -kInfinity ? std::string("-inf") : format_number(v.lower)) +
             " <= " + v.name + " <= " +
             (v.upper == kInfinity ? std::string("+inf") : format_number(v.upper)) + '\n';
    }
  }
  out += "Binary\n";
  for (const auto& v : model.variables()) {
    if (v.kind == VarKind::binary) out += ' ' + v.name + '\n';
  }
  out += "General\n";
  for (const auto& v : model.variables()) {
    if (v.kind == VarKind::integer) out += ' ' + v.name + '\n';
  }
  out += "End\n";
  return out;
}

}  // namespace milpexplain
