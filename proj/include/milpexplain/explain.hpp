#pragma once

// Deletion-based minimal explanations. A feature set C entails the
// prediction iff C ∧ F ∧ ¬E is infeasible; features are freed one at a time
// and stay free whenever entailment survives.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "milpexplain/encoding.hpp"
#include "milpexplain/error.hpp"
#include "milpexplain/model.hpp"
#include "milpexplain/simplex.hpp"
#include "milpexplain/solver.hpp"

namespace milpexplain {

/// Counterexamples whose prediction margin is at most this are accepted as
/// ties: ¬E is the non-strict o_i <= o_j.
inline constexpr double kTieTolerance = 1e-6;

struct EntailmentVerdict {
  bool holds = false;
  std::optional<Instance> counterexample;
  double solve_seconds = 0.0;
  MilpStats stats;
};

/// `is_free[i]` selects the features left at their domain; the rest are
/// fixed to the instance's values. Variable bounds are restored on return.
inline EntailmentVerdict entails(EncodedNetwork& enc, const Instance& instance,
                                 const std::vector<bool>& is_free, std::size_t target,
                                 const SolverOptions& options = {}) {
  if (!enc.negated_class || *enc.negated_class != target) {
    throw Error(ErrorCode::schema, "encoding has no negated prediction for class " +
                                       std::to_string(target));
  }
  if (instance.size() != enc.inputs.size() || is_free.size() != enc.inputs.size()) {
    throw Error(ErrorCode::dimension, "instance/free-set size does not match the encoding");
  }
  std::vector<std::pair<double, double>> saved;
  saved.reserve(enc.inputs.size());
  for (std::size_t i = 0; i < enc.inputs.size(); ++i) {
    const auto [lo, hi] = is_free[i] ? enc.input_domains[i]
                                     : std::make_pair(instance[i], instance[i]);
    saved.push_back(enc.model.set_bounds(enc.inputs[i], lo, hi));
  }
  auto restore = [&] {
    for (std::size_t i = 0; i < enc.inputs.size(); ++i) {
      enc.model.set_bounds(enc.inputs[i], saved[i].first, saved[i].second);
    }
  };

  const auto start = std::chrono::steady_clock::now();
  Feasibility result;
  try {
    result = check_feasible(enc.model, options);
  } catch (...) {
    restore();
    throw;
  }
  restore();

  EntailmentVerdict verdict;
  verdict.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  verdict.stats = result.stats;
  verdict.holds = !result.sat;
  if (result.sat) {
    Instance cex;
    for (std::size_t i = 0; i < enc.inputs.size(); ++i) {
      double v = result.witness[enc.inputs[i]];
      const auto [lo, hi] = enc.input_domains[i];
      if (enc.model.variable(enc.inputs[i]).is_integral()) v = std::round(v);
      cex.values.push_back(std::clamp(v, lo, hi));
    }
    verdict.counterexample = std::move(cex);
  }
  return verdict;
}

// ---------------------------------------------------------------------------
// Feature orders

enum class OrderKind { natural, reverse, seeded };

struct FeatureOrder {
  OrderKind kind = OrderKind::natural;
  std::uint64_t seed = 0;

  std::vector<std::size_t> permutation(std::size_t n) const {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (kind == OrderKind::reverse) std::reverse(order.begin(), order.end());
    if (kind == OrderKind::seeded) {
      std::mt19937_64 rng(seed);
      std::shuffle(order.begin(), order.end(), rng);
    }
    return order;
  }

  std::string describe() const {
    switch (kind) {
      case OrderKind::natural: return "natural";
      case OrderKind::reverse: return "reverse";
      case OrderKind::seeded: return "seed:" + std::to_string(seed);
    }
    return "natural";
  }
};

/// "natural", "reverse", "seed:N", or "seed" (uses `default_seed`).
inline FeatureOrder parse_feature_order(const std::string& text, std::uint64_t default_seed = 0) {
  if (text == "natural") return {OrderKind::natural, 0};
  if (text == "reverse") return {OrderKind::reverse, 0};
  if (text == "seed") return {OrderKind::seeded, default_seed};
  if (text.rfind("seed:", 0) == 0) {
    try {
      std::size_t used = 0;
      const auto seed = std::stoull(text.substr(5), &used);
      if (used == text.size() - 5) return {OrderKind::seeded, seed};
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::schema, "unknown order '" + text + "' (natural, reverse, seed:N)");
}

// ---------------------------------------------------------------------------
// Minimal explanations

struct FeatureCheck {
  std::size_t feature = 0;
  bool dropped = false;
  double solve_seconds = 0.0;
};

struct Explanation {
  /// (feature index, instance value), ascending by feature index.
  std::vector<std::pair<std::size_t, double>> kept;
  /// Ascending by feature index.
  std::vector<std::size_t> dropped;
  std::size_t predicted_class = 0;
  /// In processing order.
  std::vector<FeatureCheck> checks;
  double total_seconds = 0.0;

  std::vector<std::size_t> kept_features() const {
    std::vector<std::size_t> out;
    for (const auto& [i, v] : kept) out.push_back(i);
    return out;
  }
};

/// Rejects instances whose own prediction margin is below kTieTolerance.
inline void require_margin(const Ann& ann, const Instance& instance) {
  const auto logits = forward(ann, instance).logits;
  const std::size_t cls = argmax_lowest(logits);
  const double margin = prediction_margin(logits, cls);
  if (margin < kTieTolerance) {
    throw Error(ErrorCode::tie_margin, "prediction margin " + std::to_string(margin) +
                                           " below tolerance; entailment unprovable");
  }
}

/// One pass over `order`: each feature is freed and stays free when the
/// remaining fixings still entail the prediction. `enc` must carry ¬E for the
/// instance's predicted class.
inline Explanation minimal_explanation(const Ann& ann, EncodedNetwork& enc,
                                       const Instance& instance,
                                       const std::vector<std::size_t>& order,
                                       const SolverOptions& options = {}) {
  validate_instance(ann, instance);
  require_margin(ann, instance);
  const std::size_t predicted = predict(ann, instance);
  if (!enc.negated_class || *enc.negated_class != predicted) {
    throw Error(ErrorCode::schema, "encoding is not negated for the predicted class " +
                                       std::to_string(predicted));
  }
  const std::size_t n = ann.num_inputs();
  std::vector<bool> seen(n, false);
  for (std::size_t feature : order) {
    if (feature >= n || seen[feature]) {
      throw Error(ErrorCode::dimension, "order must be a permutation of the features");
    }
    seen[feature] = true;
  }
  if (order.size() != n) throw Error(ErrorCode::dimension, "order must be a permutation of the features");

  const auto start = std::chrono::steady_clock::now();
  Explanation out;
  out.predicted_class = predicted;
  std::vector<bool> is_free(n, false);
  for (std::size_t feature : order) {
    is_free[feature] = true;
    const EntailmentVerdict verdict = entails(enc, instance, is_free, predicted, options);
    if (!verdict.holds) is_free[feature] = false;
    out.checks.push_back({feature, verdict.holds, verdict.solve_seconds});
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (is_free[i]) {
      out.dropped.push_back(i);
    } else {
      out.kept.emplace_back(i, instance[i]);
    }
  }
  out.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

// ---------------------------------------------------------------------------
// Independent verification

enum class CheckKind { prediction, sufficiency, minimality, counterexample };

inline const char* to_string(CheckKind kind) {
  switch (kind) {
    case CheckKind::prediction: return "prediction";
    case CheckKind::sufficiency: return "sufficiency";
    case CheckKind::minimality: return "minimality";
    case CheckKind::counterexample: return "counterexample";
  }
  return "?";
}

struct VerificationFailure {
  CheckKind check;
  std::optional<std::size_t> feature;
  std::string message;
};

struct VerificationReport {
  std::vector<VerificationFailure> failures;

  bool passed() const { return failures.empty(); }
};

/// Rebuilds the encoding from scratch and checks that the kept fixings
/// entail the prediction, that freeing any single kept feature breaks
/// entailment, and that each such counterexample really ties or flips the
/// prediction under the plain forward pass.
inline VerificationReport verify_explanation(const Ann& ann, EncodingKind kind,
                                             const Instance& instance,
                                             const Explanation& explanation,
                                             const SolverOptions& options = {}) {
  VerificationReport report;
  const std::size_t n = ann.num_inputs();
  const std::size_t predicted = predict(ann, instance);
  if (predicted != explanation.predicted_class) {
    report.failures.push_back({CheckKind::prediction, std::nullopt,
                               "explanation records class " +
                                   std::to_string(explanation.predicted_class) +
                                   ", network predicts " + std::to_string(predicted)});
    return report;
  }
  std::vector<bool> is_free(n, true);
  for (const auto& [i, v] : explanation.kept) {
    if (i >= n) {
      report.failures.push_back({CheckKind::sufficiency, i, "feature index out of range"});
      return report;
    }
    if (v != instance[i]) {
      report.failures.push_back({CheckKind::sufficiency, i, "kept value differs from the instance"});
    }
    is_free[i] = false;
  }

  EncodedNetwork enc = build_encoding(ann, kind, options);
  attach_negation(enc, predicted);

  const EntailmentVerdict sufficiency = entails(enc, instance, is_free, predicted, options);
  if (!sufficiency.holds) {
    const auto& cex = *sufficiency.counterexample;
    bool named = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (is_free[i] && cex[i] != instance[i]) {
        report.failures.push_back({CheckKind::sufficiency, i,
                                   "dropped feature needed: counterexample moves it to " +
                                       format_number(cex[i])});
        named = true;
      }
    }
    if (!named) {
      report.failures.push_back({CheckKind::sufficiency, std::nullopt,
                                 "kept features do not entail the prediction"});
    }
  }

  for (const auto& [i, v] : explanation.kept) {
    is_free[i] = true;
    const EntailmentVerdict verdict = entails(enc, instance, is_free, predicted, options);
    is_free[i] = false;
    if (verdict.holds) {
      report.failures.push_back({CheckKind::minimality, i, "feature can be dropped"});
      continue;
    }
    const auto logits = forward(ann, *verdict.counterexample).logits;
    const double margin = prediction_margin(logits, predicted);
    if (margin > kTieTolerance) {
      report.failures.push_back({CheckKind::counterexample, i,
                                 "counterexample keeps the prediction with margin " +
                                     format_number(margin)});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Brute-force oracle

inline constexpr std::size_t kBruteForceMaxHidden = 10;
inline constexpr std::size_t kBruteForceMaxDiscrete = 4096;

namespace detail {

/// An affine function of the inputs: Σ coeff_k x_k + constant.
struct AffineForm {
  std::vector<double> coeff;
  double constant = 0.0;
};

class PatternEnumerator {
 public:
  PatternEnumerator(const Ann& ann, std::vector<double> lower, std::vector<double> upper,
                    std::size_t target, const SolverOptions& options)
      : ann_(ann), lower_(std::move(lower)), upper_(std::move(upper)), target_(target),
        options_(options) {}

  /// Returns a point where some rival ties or beats the target, if any.
  std::optional<std::vector<double>> search() {
    std::vector<AffineForm> inputs(ann_.num_inputs());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      inputs[k].coeff.assign(inputs.size(), 0.0);
      inputs[k].coeff[k] = 1.0;
    }
    previous_ = std::move(inputs);
    layer_ = 0;
    neuron_ = 0;
    return descend();
  }

 private:
  LinearConstraint row_from(const AffineForm& f, Relation rel) const {
    LinearConstraint row;
    for (std::size_t k = 0; k < f.coeff.size(); ++k) {
      if (f.coeff[k] != 0.0) row.terms.push_back({f.coeff[k], k});
    }
    row.relation = rel;
    row.rhs = -f.constant;
    return row;
  }

  std::optional<std::vector<double>> feasible_point(const LinearConstraint* extra) const {
    LpProblem lp;
    lp.lower = lower_;
    lp.upper = upper_;
    for (const auto& row : rows_) lp.rows.push_back(&row);
    if (extra) lp.rows.push_back(extra);
    const LpOutcome out = solve_lp(lp, options_);
    if (out.status != LpStatus::optimal) return std::nullopt;
    return out.values;
  }

  AffineForm pre_activation(std::size_t l, std::size_t i) const {
    const Layer& layer = ann_.layers[l];
    AffineForm f;
    f.coeff.assign(ann_.num_inputs(), 0.0);
    f.constant = layer.bias[i];
    for (std::size_t j = 0; j < previous_.size(); ++j) {
      const double w = layer.weights[i][j];
      if (w == 0.0) continue;
      for (std::size_t k = 0; k < f.coeff.size(); ++k) f.coeff[k] += w * previous_[j].coeff[k];
      f.constant += w * previous_[j].constant;
    }
    return f;
  }

  std::optional<std::vector<double>> descend() {
    if (layer_ == ann_.num_hidden_layers()) return check_outputs();
    const AffineForm pre = pre_activation(layer_, neuron_);
    for (int phase = 1; phase >= 0; --phase) {
      rows_.push_back(row_from(pre, phase ? Relation::greater_equal : Relation::less_equal));
      if (feasible_point(nullptr)) {
        AffineForm post = pre;
        if (!phase) {
          std::fill(post.coeff.begin(), post.coeff.end(), 0.0);
          post.constant = 0.0;
        }
        current_.push_back(std::move(post));
        auto saved_previous = previous_;
        auto saved_current = current_;
        const std::size_t saved_layer = layer_;
        const std::size_t saved_neuron = neuron_;
        if (++neuron_ == ann_.layers[layer_].rows()) {
          previous_ = std::move(current_);
          current_.clear();
          ++layer_;
          neuron_ = 0;
        }
        auto found = descend();
        previous_ = std::move(saved_previous);
        current_ = std::move(saved_current);
        current_.pop_back();
        layer_ = saved_layer;
        neuron_ = saved_neuron;
        if (found) {
          rows_.pop_back();
          return found;
        }
      }
      rows_.pop_back();
    }
    return std::nullopt;
  }

  std::optional<std::vector<double>> check_outputs() const {
    const Layer& out = ann_.output_layer();
    std::vector<AffineForm> logits;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      AffineForm f;
      f.coeff.assign(ann_.num_inputs(), 0.0);
      f.constant = out.bias[i];
      for (std::size_t j = 0; j < previous_.size(); ++j) {
        for (std::size_t k = 0; k < f.coeff.size(); ++k) {
          f.coeff[k] += out.weights[i][j] * previous_[j].coeff[k];
        }
        f.constant += out.weights[i][j] * previous_[j].constant;
      }
      logits.push_back(std::move(f));
    }
    for (std::size_t j = 0; j < logits.size(); ++j) {
      if (j == target_) continue;
      // o_target - o_j <= 0
      AffineForm diff = logits[target_];
      for (std::size_t k = 0; k < diff.coeff.size(); ++k) diff.coeff[k] -= logits[j].coeff[k];
      diff.constant -= logits[j].constant;
      const LinearConstraint row = row_from(diff, Relation::less_equal);
      if (auto point = feasible_point(&row)) return point;
    }
    return std::nullopt;
  }

  const Ann& ann_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::size_t target_;
  SolverOptions options_;
  std::vector<LinearConstraint> rows_;
  std::vector<AffineForm> previous_;
  std::vector<AffineForm> current_;
  std::size_t layer_ = 0;
  std::size_t neuron_ = 0;
};

}  // namespace detail

/// Exhaustive oracle: enumerates every ReLU activation pattern (pruning
/// patterns whose sign constraints are already infeasible) and, per pattern,
/// every rival j with an LP over the inputs. Free discrete features are
/// enumerated value by value. Independent of the MILP encodings.
inline EntailmentVerdict brute_force_entails(const Ann& ann, const Instance& instance,
                                             const std::vector<bool>& is_free, std::size_t target,
                                             const SolverOptions& options = {}) {
  if (ann.hidden_neuron_count() > kBruteForceMaxHidden) {
    throw Error(ErrorCode::size_guard, "brute force supports at most " +
                                           std::to_string(kBruteForceMaxHidden) +
                                           " hidden neurons");
  }
  const std::size_t n = ann.num_inputs();
  if (instance.size() != n || is_free.size() != n) {
    throw Error(ErrorCode::dimension, "instance/free-set size does not match the model");
  }
  if (target >= ann.num_classes()) throw Error(ErrorCode::dimension, "class index out of range");

  std::vector<std::size_t> discrete_free;
  std::size_t combinations = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_free[i] && ann.features[i].is_discrete()) {
      discrete_free.push_back(i);
      combinations *= static_cast<std::size_t>(ann.features[i].upper - ann.features[i].lower + 1);
      if (combinations > kBruteForceMaxDiscrete) {
        throw Error(ErrorCode::size_guard, "too many discrete combinations for brute force");
      }
    }
  }

  const auto start = std::chrono::steady_clock::now();
  EntailmentVerdict verdict;
  verdict.holds = true;
  std::vector<double> lower(n);
  std::vector<double> upper(n);
  for (std::size_t i = 0; i < n; ++i) {
    lower[i] = is_free[i] ? ann.features[i].lower : instance[i];
    upper[i] = is_free[i] ? ann.features[i].upper : instance[i];
  }
  for (std::size_t combo = 0; combo < combinations; ++combo) {
    std::size_t rest = combo;
    for (std::size_t i : discrete_free) {
      const auto span = static_cast<std::size_t>(ann.features[i].upper - ann.features[i].lower + 1);
      lower[i] = upper[i] = ann.features[i].lower + static_cast<double>(rest % span);
      rest /= span;
    }
    detail::PatternEnumerator search(ann, lower, upper, target, options);
    if (auto point = search.search()) {
      verdict.holds = false;
      Instance cex;
      for (std::size_t i = 0; i < n; ++i) cex.values.push_back(std::clamp((*point)[i], lower[i], upper[i]));
      verdict.counterexample = std::move(cex);
      break;
    }
  }
  verdict.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return verdict;
}

// ---------------------------------------------------------------------------
// Explanation reports

struct InstanceReport {
  std::size_t index = 0;
  /// "ok" or "rejected" (tie margin, with `message`).
  std::string status = "ok";
  std::string message;
  Explanation explanation;
};

struct ExplanationReport {
  std::string model_name;
  std::string model_hash;
  EncodingKind encoding = EncodingKind::indicator;
  std::string order;
  std::vector<InstanceReport> instances;
};

inline nlohmann::json report_to_json(const ExplanationReport& report, const Ann& ann,
                                     bool zero_timings = false) {
  auto t = [&](double seconds) { return zero_timings ? 0.0 : seconds; };
  nlohmann::json doc;
  doc["model"] = report.model_name;
  doc["model_hash"] = report.model_hash;
  doc["encoding"] = to_string(report.encoding);
  doc["order"] = report.order;
  doc["instances"] = nlohmann::json::array();
  for (const auto& entry : report.instances) {
    nlohmann::json item;
    item["index"] = entry.index;
    item["status"] = entry.status;
    if (!entry.message.empty()) item["message"] = entry.message;
    if (entry.status == "ok") {
      const auto& e = entry.explanation;
      item["predicted_class"] = e.predicted_class;
      item["predicted_label"] = ann.classes.at(e.predicted_class);
      item["kept"] = nlohmann::json::array();
      for (const auto& [i, v] : e.kept) {
        item["kept"].push_back({{"feature", i}, {"name", ann.features[i].name}, {"value", v}});
      }
      item["dropped"] = nlohmann::json::array();
      for (auto i : e.dropped) {
        item["dropped"].push_back({{"feature", i}, {"name", ann.features[i].name}});
      }
      item["checks"] = nlohmann::json::array();
      for (const auto& c : e.checks) {
        item["checks"].push_back({{"feature", c.feature},
                                  {"name", ann.features[c.feature].name},
                                  {"verdict", c.dropped ? "dropped" : "kept"},
                                  {"solve_seconds", t(c.solve_seconds)}});
      }
      item["total_seconds"] = t(e.total_seconds);
    }
    doc["instances"].push_back(std::move(item));
  }
  return doc;
}

inline ExplanationReport report_from_json(const nlohmann::json& doc) {
  try {
    ExplanationReport report;
    report.model_name = doc.at("model").get<std::string>();
    report.model_hash = doc.at("model_hash").get<std::string>();
    report.encoding = parse_encoding_kind(doc.at("encoding").get<std::string>());
    report.order = doc.value("order", "natural");
    for (const auto& item : doc.at("instances")) {
      InstanceReport entry;
      entry.index = item.at("index").get<std::size_t>();
      entry.status = item.at("status").get<std::string>();
      entry.message = item.value("message", "");
      if (entry.status == "ok") {
        auto& e = entry.explanation;
        e.predicted_class = item.at("predicted_class").get<std::size_t>();
        for (const auto& k : item.at("kept")) {
          e.kept.emplace_back(k.at("feature").get<std::size_t>(), k.at("value").get<double>());
        }
        for (const auto& d : item.at("dropped")) e.dropped.push_back(d.at("feature").get<std::size_t>());
        if (item.contains("checks")) {
          for (const auto& c : item.at("checks")) {
            e.checks.push_back({c.at("feature").get<std::size_t>(),
                                c.at("verdict").get<std::string>() == "dropped",
                                c.value("solve_seconds", 0.0)});
          }
        }
        e.total_seconds = item.value("total_seconds", 0.0);
      }
      report.instances.push_back(std::move(entry));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, std::string("report: ") + e.what());
  }
}

}  // namespace milpexplain
