#pragma once

// Branch-and-bound over integer and binary variables. Indicator constraints
// are enforced by branching: a node is accepted only when every integer
// variable is integral and every indicator whose binary sits at its active
// value has its implied row satisfied. The implied row enters the LP only once
// its binary is fixed at the active value.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <queue>
#include <string>
#include <vector>

#include "milpexplain/error.hpp"
#include "milpexplain/milp.hpp"
#include "milpexplain/simplex.hpp"

namespace milpexplain {

enum class SolveMode { feasibility, minimize, maximize };

enum class MilpStatus { optimal, infeasible, inconclusive };

struct MilpStats {
  std::size_t nodes = 0;
  std::size_t simplex_iterations = 0;
  double wall_seconds = 0.0;
};

struct MilpOutcome {
  /// In feasibility mode `optimal` means SAT and `infeasible` means UNSAT.
  MilpStatus status = MilpStatus::inconclusive;
  std::vector<double> witness;
  double objective = 0.0;
  /// LP relaxation value at the root (optimization modes only).
  double root_bound = 0.0;
  MilpStats stats;
  std::string reason;

  bool sat() const { return status == MilpStatus::optimal; }
};

namespace detail {

struct BoundChange {
  VarId var;
  double lower;
  double upper;
};

struct Node {
  std::vector<BoundChange> changes;
  double bound;
  std::size_t sequence;
};

struct WorseBound {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.sequence > b.sequence;
  }
};

class BranchAndBound {
 public:
  BranchAndBound(const MilpModel& model, SolveMode mode, const SolverOptions& options)
      : model_(model), mode_(mode), opt_(options) {
    const std::size_t n = model.num_variables();
    root_lower_.resize(n);
    root_upper_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      root_lower_[j] = model.variable(j).lower;
      root_upper_[j] = model.variable(j).upper;
    }
    if (mode != SolveMode::feasibility) {
      // Internally always minimize.
      const double sign = mode == SolveMode::maximize ? -1.0 : 1.0;
      cost_.assign(n, 0.0);
      if (model.objective()) {
        for (const auto& t : model.objective()->terms) cost_[t.var] += sign * t.coefficient;
        cost_constant_ = sign * model.objective()->constant;
      }
    }
  }

  MilpOutcome run() {
    const auto start = std::chrono::steady_clock::now();
    MilpOutcome out;
    try {
      if (mode_ == SolveMode::feasibility) {
        depth_first(out, start);
      } else {
        best_first(out, start);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::numerical) throw;
      out.status = MilpStatus::inconclusive;
      out.reason = e.what();
    }
    out.stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.stats.simplex_iterations = iterations_;
    return out;
  }

 private:
  enum class Verdict { pruned, accepted, branched };

  struct Evaluation {
    Verdict verdict = Verdict::pruned;
    double bound = 0.0;
    std::vector<double> values;
    VarId branch_var = 0;
    double branch_value = 0.0;
  };

  bool limits_hit(MilpOutcome& out, std::chrono::steady_clock::time_point start) const {
    if (out.stats.nodes >= opt_.max_nodes) {
      out.status = MilpStatus::inconclusive;
      out.reason = "node limit reached";
      return true;
    }
    if (opt_.time_limit_seconds) {
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (elapsed > *opt_.time_limit_seconds) {
        out.status = MilpStatus::inconclusive;
        out.reason = "time limit reached";
        return true;
      }
    }
    return false;
  }

  Evaluation evaluate(const std::vector<BoundChange>& changes) {
    LpProblem lp;
    lp.lower = root_lower_;
    lp.upper = root_upper_;
    for (const auto& c : changes) {
      lp.lower[c.var] = c.lower;
      lp.upper[c.var] = c.upper;
    }
    for (const auto& row : model_.constraints()) lp.rows.push_back(&row);
    for (const auto& ind : model_.indicators()) {
      if (lp.lower[ind.binary] == lp.upper[ind.binary] && lp.lower[ind.binary] == ind.active_value) {
        lp.rows.push_back(&ind.implied);
      }
    }
    lp.cost = cost_;

    Evaluation eval;
    const LpOutcome lp_out = solve_lp(lp, opt_);
    iterations_ += lp_out.iterations;
    if (lp_out.status == LpStatus::infeasible) return eval;
    if (lp_out.status == LpStatus::unbounded) {
      throw Error(ErrorCode::numerical, "LP relaxation unbounded");
    }
    eval.bound = lp_out.objective + cost_constant_;
    eval.values = lp_out.values;
    const auto& x = eval.values;

    // Indicator violations first: binary at its active value, implied row broken.
    double worst = 0.0;
    bool found = false;
    for (const auto& ind : model_.indicators()) {
      if (lp.lower[ind.binary] == lp.upper[ind.binary]) continue;
      if (std::abs(x[ind.binary] - ind.active_value) > opt_.integrality_tol) continue;
      const double violation = ind.implied.violation(x);
      if (violation > opt_.feasibility_tol && violation > worst) {
        worst = violation;
        eval.branch_var = ind.binary;
        eval.branch_value = x[ind.binary];
        found = true;
      }
    }
    if (!found) {
      double best_fraction = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (!model_.variable(j).is_integral()) continue;
        const double fraction = std::abs(x[j] - std::round(x[j]));
        if (fraction > opt_.integrality_tol && fraction > best_fraction) {
          best_fraction = fraction;
          eval.branch_var = j;
          eval.branch_value = x[j];
          found = true;
        }
      }
    }
    eval.verdict = found ? Verdict::branched : Verdict::accepted;
    if (!found) polish(lp, eval);
    return eval;
  }

  /// An accepted node may still carry integers that are off by up to the
  /// integrality tolerance, which big-M rows amplify. Fix them at their
  /// rounded values (adding any indicator rows that become active) and re-solve;
  /// the result is an exactly integral point. Keeps the original on failure.
  void polish(LpProblem lp, Evaluation& eval) {
    bool changed = false;
    for (std::size_t j = 0; j < eval.values.size(); ++j) {
      if (!model_.variable(j).is_integral()) continue;
      const double r = std::round(eval.values[j]);
      if (lp.lower[j] == r && lp.upper[j] == r) continue;
      lp.lower[j] = lp.upper[j] = r;
      changed = true;
    }
    if (!changed) return;
    lp.rows.resize(model_.constraints().size());
    for (const auto& ind : model_.indicators()) {
      if (lp.lower[ind.binary] == ind.active_value) lp.rows.push_back(&ind.implied);
    }
    const LpOutcome fixed = solve_lp(lp, opt_);
    iterations_ += fixed.iterations;
    if (fixed.status != LpStatus::optimal) return;
    eval.bound = fixed.objective + cost_constant_;
    eval.values = fixed.values;
  }

  /// Children ordered so that the one nearer the LP value comes first.
  std::pair<std::vector<BoundChange>, std::vector<BoundChange>> children(
      const std::vector<BoundChange>& parent, const Evaluation& eval) const {
    const VarId var = eval.branch_var;
    double lo = root_lower_[var];
    double hi = root_upper_[var];
    for (const auto& c : parent) {
      if (c.var == var) {
        lo = c.lower;
        hi = c.upper;
      }
    }
    double v = eval.branch_value;
    // Indicator branches sit within tolerance of an integer; snapping keeps
    // floor/ceil from producing a child equal to its parent (v = -1e-17).
    if (std::abs(v - std::round(v)) <= opt_.integrality_tol) v = std::round(v) + 0.0;
    double down_hi = std::floor(v);
    double up_lo = std::ceil(v);
    if (down_hi == up_lo) {
      // Integral value (indicator branch): split {.., v} / {v+1, ..} or {.., v-1} / {v, ..}.
      if (v - lo >= hi - v) {
        down_hi = v - 1;
      } else {
        up_lo = v + 1;
      }
    }
    auto down = parent;
    down.push_back({var, lo, std::max(lo, down_hi)});
    auto up = parent;
    up.push_back({var, std::min(hi, up_lo), hi});
    const bool down_first = (v - down_hi) <= (up_lo - v);
    if (down_first) return {std::move(down), std::move(up)};
    return {std::move(up), std::move(down)};
  }

  void depth_first(MilpOutcome& out, std::chrono::steady_clock::time_point start) {
    std::vector<std::vector<BoundChange>> stack;
    stack.emplace_back();
    while (!stack.empty()) {
      if (limits_hit(out, start)) return;
      auto changes = std::move(stack.back());
      stack.pop_back();
      ++out.stats.nodes;
      Evaluation eval = evaluate(changes);
      if (eval.verdict == Verdict::pruned) continue;
      if (eval.verdict == Verdict::accepted) {
        out.status = MilpStatus::optimal;
        out.witness = std::move(eval.values);
        return;
      }
      auto [first, second] = children(changes, eval);
      stack.push_back(std::move(second));
      stack.push_back(std::move(first));
    }
    out.status = MilpStatus::infeasible;
  }

  void best_first(MilpOutcome& out, std::chrono::steady_clock::time_point start) {
    const double sign = mode_ == SolveMode::maximize ? -1.0 : 1.0;
    std::priority_queue<Node, std::vector<Node>, WorseBound> open;
    std::size_t sequence = 0;
    open.push({{}, -kInfinity, sequence++});
    double incumbent = kInfinity;
    bool root = true;
    while (!open.empty()) {
      if (limits_hit(out, start)) return;
      Node node = open.top();
      open.pop();
      if (node.bound >= incumbent - gap(incumbent)) continue;
      ++out.stats.nodes;
      Evaluation eval = evaluate(node.changes);
      if (root) {
        out.root_bound = sign * eval.bound;
        root = false;
      }
      if (eval.verdict == Verdict::pruned) continue;
      if (eval.bound >= incumbent - gap(incumbent)) continue;
      if (eval.verdict == Verdict::accepted) {
        incumbent = eval.bound;
        out.witness = std::move(eval.values);
        continue;
      }
      auto [first, second] = children(node.changes, eval);
      open.push({std::move(first), eval.bound, sequence++});
      open.push({std::move(second), eval.bound, sequence++});
    }
    if (incumbent == kInfinity) {
      out.status = MilpStatus::infeasible;
      return;
    }
    out.status = MilpStatus::optimal;
    out.objective = sign * incumbent;
  }

  double gap(double incumbent) const {
    if (incumbent == kInfinity) return 0.0;
    return opt_.optimality_tol * std::max(1.0, std::abs(incumbent));
  }

  const MilpModel& model_;
  SolveMode mode_;
  SolverOptions opt_;
  std::vector<double> root_lower_;
  std::vector<double> root_upper_;
  std::vector<double> cost_;
  double cost_constant_ = 0.0;
  std::size_t iterations_ = 0;
};

}  // namespace detail

inline MilpOutcome solve_milp(const MilpModel& model, SolveMode mode,
                              const SolverOptions& options = {}) {
  return detail::BranchAndBound(model, mode, options).run();
}

struct Feasibility {
  bool sat = false;
  std::vector<double> witness;
  MilpStats stats;
};

/// SAT with a witness, or UNSAT on a fully fathomed tree. Limits surface as
/// ErrorCode::inconclusive, never as UNSAT.
inline Feasibility check_feasible(const MilpModel& model, const SolverOptions& options = {}) {
  MilpOutcome out = solve_milp(model, SolveMode::feasibility, options);
  if (out.status == MilpStatus::inconclusive) {
    throw Error(ErrorCode::inconclusive, "feasibility check: " + out.reason);
  }
  return {out.sat(), std::move(out.witness), out.stats};
}

}  // namespace milpexplain
