#pragma once

// Dense bounded-variable primal simplex.
//
// Every row a·x {<=,>=,=} b gets a logical r = a·x whose bounds encode the
// relation, so the working system is [A | -I] (x, r) = 0 with all variables
// boxed (possibly by infinite bounds). Phase 1 minimizes the sum of bound
// violations of basic variables; phase 2 minimizes the caller's cost.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "milpexplain/error.hpp"
#include "milpexplain/milp.hpp"

namespace milpexplain {

struct SolverOptions {
  double feasibility_tol = 1e-6;
  double integrality_tol = 1e-6;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
  std::size_t max_nodes = 1'000'000;
  std::optional<double> time_limit_seconds;
  /// Consecutive degenerate pivots before switching to Bland's rule.
  std::size_t stall_threshold = 50;
  std::size_t refactor_interval = 100;
  std::size_t max_lp_iterations = 200'000;
};

/// LP over structural variables with explicit boxes; cost is minimized.
struct LpProblem {
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<const LinearConstraint*> rows;
  std::vector<double> cost;  // empty: pure feasibility
};

enum class LpStatus { optimal, infeasible, unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
  }
  return "?";
}

struct LpOutcome {
  LpStatus status = LpStatus::infeasible;
  double objective = 0.0;
  std::vector<double> values;
  std::size_t iterations = 0;
};

namespace detail {

class DenseSimplex {
 public:
  DenseSimplex(const LpProblem& problem, const SolverOptions& options)
      : opt_(options), n_(problem.lower.size()), m_(problem.rows.size()), total_(n_ + m_) {
    lower_ = problem.lower;
    upper_ = problem.upper;
    lower_.resize(total_);
    upper_.resize(total_);
    cost_.assign(total_, 0.0);
    for (std::size_t j = 0; j < problem.cost.size(); ++j) cost_[j] = problem.cost[j];

    constraint_.assign(m_ * total_, 0.0);
    for (std::size_t i = 0; i < m_; ++i) {
      const auto& row = *problem.rows[i];
      for (const auto& t : row.terms) at(constraint_, i, t.var) += t.coefficient;
      at(constraint_, i, n_ + i) = -1.0;
      switch (row.relation) {
        case Relation::less_equal:
          lower_[n_ + i] = -kInfinity;
          upper_[n_ + i] = row.rhs;
          break;
        case Relation::greater_equal:
          lower_[n_ + i] = row.rhs;
          upper_[n_ + i] = kInfinity;
          break;
        case Relation::equal:
          lower_[n_ + i] = row.rhs;
          upper_[n_ + i] = row.rhs;
          break;
      }
    }

    state_.assign(total_, State::at_lower);
    value_.assign(total_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      if (lower_[j] > -kInfinity) {
        state_[j] = State::at_lower;
        value_[j] = lower_[j];
      } else if (upper_[j] < kInfinity) {
        state_[j] = State::at_upper;
        value_[j] = upper_[j];
      } else {
        state_[j] = State::free_zero;
        value_[j] = 0.0;
      }
    }
    basis_.resize(m_);
    for (std::size_t i = 0; i < m_; ++i) {
      basis_[i] = n_ + i;
      state_[n_ + i] = State::basic;
    }
    // B = -I for the all-logical basis, so B^-1 [A | -I] = [-A | I].
    tableau_.resize(m_ * total_);
    for (std::size_t k = 0; k < tableau_.size(); ++k) tableau_[k] = -constraint_[k];
    recompute_basic_values();
  }

  LpOutcome run() {
    LpOutcome out;
    bool rechecked = false;
    for (int round = 0; round < 8; ++round) {
      if (!phase(true)) {
        if (pivots_since_refactor_ > 0 && !rechecked) {
          // Confirm infeasibility on a freshly inverted basis.
          refactor();
          rechecked = true;
          continue;
        }
        out.status = LpStatus::infeasible;
        out.iterations = iterations_;
        return out;
      }
      const bool bounded = phase(false);
      if (max_row_residual() > kResidualTol) {
        refactor();
        if (max_basic_infeasibility() > opt_.feasibility_tol) continue;  // drifted; redo phase 1
      }
      out.iterations = iterations_;
      if (!bounded) {
        out.status = LpStatus::unbounded;
        return out;
      }
      out.status = LpStatus::optimal;
      out.values.assign(value_.begin(), value_.begin() + static_cast<std::ptrdiff_t>(n_));
      for (std::size_t j = 0; j < n_; ++j) out.objective += cost_[j] * value_[j];
      return out;
    }
    throw Error(ErrorCode::numerical, "simplex failed to stabilize a feasible basis");
  }

 private:
  enum class State { basic, at_lower, at_upper, free_zero };

  double& at(std::vector<double>& mat, std::size_t r, std::size_t c) { return mat[r * total_ + c]; }
  double tab(std::size_t r, std::size_t c) const { return tableau_[r * total_ + c]; }

  void recompute_basic_values() {
    for (std::size_t i = 0; i < m_; ++i) {
      double sum = 0.0;
      const double* row = &tableau_[i * total_];
      for (std::size_t j = 0; j < total_; ++j) {
        if (state_[j] != State::basic && value_[j] != 0.0) sum -= row[j] * value_[j];
      }
      value_[basis_[i]] = sum;
    }
  }

  double infeasibility(std::size_t var) const {
    const double v = value_[var];
    if (v < lower_[var]) return lower_[var] - v;
    if (v > upper_[var]) return v - upper_[var];
    return 0.0;
  }

  /// max_i |A_i x - r_i| against the original rows.
  double max_row_residual() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      const double* row = &constraint_[i * total_];
      double sum = 0.0;
      double scale = 1.0;
      for (std::size_t j = 0; j < total_; ++j) {
        if (row[j] != 0.0) {
          sum += row[j] * value_[j];
          scale = std::max(scale, std::abs(row[j] * value_[j]));
        }
      }
      worst = std::max(worst, std::abs(sum) / scale);
    }
    return worst;
  }

  double max_basic_infeasibility() const {
    double worst = 0.0;
    for (auto var : basis_) worst = std::max(worst, infeasibility(var));
    return worst;
  }

  /// Rebuilds B^-1 [A | -I] from the original rows by Gauss-Jordan with
  /// partial pivoting over the basic columns.
  void refactor() {
    std::vector<double> work = constraint_;
    std::vector<std::size_t> new_basis(m_, total_);
    std::vector<bool> assigned(m_, false);
    for (std::size_t k = 0; k < m_; ++k) {
      const std::size_t col = basis_[k];
      std::size_t pivot_row = m_;
      double best = 0.0;
      for (std::size_t r = 0; r < m_; ++r) {
        if (assigned[r]) continue;
        const double mag = std::abs(work[r * total_ + col]);
        if (mag > best) {
          best = mag;
          pivot_row = r;
        }
      }
      if (pivot_row == m_ || best < 1e-11) {
        throw Error(ErrorCode::numerical, "singular basis during reinversion");
      }
      assigned[pivot_row] = true;
      new_basis[pivot_row] = col;
      eliminate(work, pivot_row, col);
    }
    basis_ = std::move(new_basis);
    tableau_ = std::move(work);
    recompute_basic_values();
    pivots_since_refactor_ = 0;
  }

  void eliminate(std::vector<double>& mat, std::size_t pivot_row, std::size_t col) {
    double* prow = &mat[pivot_row * total_];
    const double inv = 1.0 / prow[col];
    nonzero_.clear();
    for (std::size_t c = 0; c < total_; ++c) {
      if (prow[c] != 0.0) {
        prow[c] *= inv;
        nonzero_.push_back(c);
      }
    }
    prow[col] = 1.0;
    for (std::size_t r = 0; r < m_; ++r) {
      if (r == pivot_row) continue;
      double* row = &mat[r * total_];
      const double factor = row[col];
      if (factor == 0.0) continue;
      for (std::size_t c : nonzero_) row[c] -= factor * prow[c];
      row[col] = 0.0;
    }
  }

  /// Runs one phase to completion. Phase 1 returns false when infeasible;
  /// phase 2 returns false when unbounded.
  bool phase(bool feasibility_phase) {
    std::vector<double> basic_cost(m_, 0.0);
    std::vector<double> reduced(total_, 0.0);
    std::size_t degenerate_run = 0;
    bool bland = false;
    bool reduced_valid = false;

    while (true) {
      if (++iterations_ > opt_.max_lp_iterations) {
        throw Error(ErrorCode::numerical, "simplex iteration limit exceeded");
      }
      if (pivots_since_refactor_ >= opt_.refactor_interval) {
        refactor();
        reduced_valid = false;
      }

      bool any_infeasible = false;
      for (std::size_t i = 0; i < m_; ++i) {
        const std::size_t var = basis_[i];
        if (feasibility_phase) {
          const double v = value_[var];
          if (v < lower_[var] - kPrimalTol) {
            basic_cost[i] = -1.0;
            any_infeasible = true;
          } else if (v > upper_[var] + kPrimalTol) {
            basic_cost[i] = 1.0;
            any_infeasible = true;
          } else {
            basic_cost[i] = 0.0;
          }
        } else {
          basic_cost[i] = cost_[var];
        }
      }
      if (feasibility_phase && !any_infeasible) return true;

      // Reduced costs d_j = c_j - sum_i c_B(i) T(i, j) over nonbasic j. Phase 2
      // updates them per pivot and recomputes only after a reinversion.
      if (feasibility_phase || !reduced_valid) {
        // Basic columns come out as exactly c_j - c_j = 0 in phase 2, which the
        // incremental update relies on.
        for (std::size_t j = 0; j < total_; ++j) reduced[j] = feasibility_phase ? 0.0 : cost_[j];
        for (std::size_t i = 0; i < m_; ++i) {
          if (basic_cost[i] == 0.0) continue;
          const double* row = &tableau_[i * total_];
          for (std::size_t j = 0; j < total_; ++j) reduced[j] -= basic_cost[i] * row[j];
        }
        reduced_valid = !feasibility_phase;
      }

      std::size_t entering = total_;
      int direction = 0;
      double best = 0.0;
      for (std::size_t j = 0; j < total_; ++j) {
        if (state_[j] == State::basic || lower_[j] == upper_[j]) continue;
        const double d = reduced[j];
        int dir = 0;
        if (d < -opt_.optimality_tol && state_[j] != State::at_upper) dir = 1;
        if (d > opt_.optimality_tol && state_[j] != State::at_lower) dir = -1;
        if (dir == 0) continue;
        if (bland) {
          entering = j;
          direction = dir;
          break;
        }
        if (std::abs(d) > best) {
          best = std::abs(d);
          entering = j;
          direction = dir;
        }
      }

      if (entering == total_) {
        if (!feasibility_phase) return true;
        // No improving column left: feasible only if the residual is tolerable.
        return max_basic_infeasibility() <= opt_.feasibility_tol;
      }

      // Ratio test.
      double step = kInfinity;
      std::size_t leave_row = m_;
      double leave_alpha = 0.0;
      bool leave_to_upper = false;
      for (std::size_t i = 0; i < m_; ++i) {
        const double alpha = -tab(i, entering) * direction;
        if (std::abs(alpha) <= opt_.pivot_tol) continue;
        const std::size_t var = basis_[i];
        const double v = value_[var];
        double limit = kInfinity;
        bool to_upper = false;
        const bool below = feasibility_phase && v < lower_[var] - kPrimalTol;
        const bool above = feasibility_phase && v > upper_[var] + kPrimalTol;
        if (below) {
          if (alpha > 0) limit = (lower_[var] - v) / alpha;  // becomes feasible at its lower bound
        } else if (above) {
          if (alpha < 0) {
            limit = (upper_[var] - v) / alpha;
            to_upper = true;
          }
        } else if (alpha > 0) {
          if (upper_[var] < kInfinity) {
            limit = (upper_[var] - v) / alpha;
            to_upper = true;
          }
        } else if (lower_[var] > -kInfinity) {
          limit = (lower_[var] - v) / alpha;
        }
        if (limit == kInfinity) continue;
        limit = std::max(0.0, limit);
        const bool better =
            limit < step - kRatioTieTol ||
            (limit <= step + kRatioTieTol &&
             (bland ? (leave_row == m_ || var < basis_[leave_row])
                    : std::abs(alpha) > std::abs(leave_alpha)));
        if (better) {
          step = std::min(step, limit);
          leave_row = i;
          leave_alpha = alpha;
          leave_to_upper = to_upper;
        }
      }

      const double span = upper_[entering] - lower_[entering];
      const bool flip = span < kInfinity && span <= step;
      if (flip) step = span;

      if (step == kInfinity) {
        if (!feasibility_phase) return false;
        throw Error(ErrorCode::numerical, "unbounded ray in phase 1");
      }

      if (step <= 1e-12) {
        if (++degenerate_run > opt_.stall_threshold) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }

      // Move along the edge.
      for (std::size_t i = 0; i < m_; ++i) {
        const double alpha = -tab(i, entering) * direction;
        if (alpha != 0.0) value_[basis_[i]] += alpha * step;
      }
      value_[entering] += direction * step;

      if (flip) {
        if (direction > 0) {
          state_[entering] = State::at_upper;
          value_[entering] = upper_[entering];
        } else {
          state_[entering] = State::at_lower;
          value_[entering] = lower_[entering];
        }
        continue;
      }

      const std::size_t leaving = basis_[leave_row];
      if (leave_to_upper) {
        state_[leaving] = State::at_upper;
        value_[leaving] = upper_[leaving];
      } else {
        state_[leaving] = State::at_lower;
        value_[leaving] = lower_[leaving];
      }
      state_[entering] = State::basic;
      basis_[leave_row] = entering;
      const double entering_reduced = reduced[entering];
      eliminate(tableau_, leave_row, entering);
      ++pivots_since_refactor_;
      if (reduced_valid) {
        for (std::size_t c : nonzero_) reduced[c] -= entering_reduced * tab(leave_row, c);
        reduced[entering] = 0.0;
      }
    }
  }

  static constexpr double kPrimalTol = 1e-9;
  static constexpr double kResidualTol = 1e-11;
  static constexpr double kRatioTieTol = 1e-12;

  SolverOptions opt_;
  std::size_t n_;
  std::size_t m_;
  std::size_t total_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<double> cost_;
  std::vector<double> constraint_;
  std::vector<double> tableau_;
  std::vector<std::size_t> basis_;
  std::vector<State> state_;
  std::vector<double> value_;
  std::vector<std::size_t> nonzero_;
  std::size_t iterations_ = 0;
  std::size_t pivots_since_refactor_ = 0;
};

}  // namespace detail

inline LpOutcome solve_lp(const LpProblem& problem, const SolverOptions& options = {}) {
  for (std::size_t j = 0; j < problem.lower.size(); ++j) {
    if (problem.lower[j] > problem.upper[j]) return {LpStatus::infeasible, 0.0, {}, 0};
  }
  return detail::DenseSimplex(problem, options).run();
}

/// LP relaxation of `model`: integrality dropped, indicators included only
/// where their binary is fixed by bounds at the active value. Optimizes the
/// model's objective when present.
inline LpOutcome solve_lp(const MilpModel& model, const SolverOptions& options = {}) {
  LpProblem lp;
  for (const auto& v : model.variables()) {
    lp.lower.push_back(v.lower);
    lp.upper.push_back(v.upper);
  }
  for (const auto& row : model.constraints()) lp.rows.push_back(&row);
  for (const auto& ind : model.indicators()) {
    const auto& z = model.variable(ind.binary);
    if (z.lower == z.upper && z.lower == ind.active_value) lp.rows.push_back(&ind.implied);
  }
  const auto& objective = model.objective();
  double sign = 1.0;
  if (objective) {
    sign = objective->sense == ObjectiveSense::maximize ? -1.0 : 1.0;
    lp.cost.assign(model.num_variables(), 0.0);
    for (const auto& t : objective->terms) lp.cost[t.var] += sign * t.coefficient;
  }
  LpOutcome out = solve_lp(lp, options);
  if (out.status == LpStatus::optimal) {
    out.objective = objective ? objective->value(out.values) : 0.0;
  }
  return out;
}

}  // namespace milpexplain
