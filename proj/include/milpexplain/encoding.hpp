#pragma once

// MILP encodings of a ReLU network: the indicator-constraint encoding
// (x - s = pre, z=1 -> x<=0, z=0 -> s<=0) and the big-M encoding
// (x <= pre - lb(1-z), x >= pre, x <= ub z, x >= 0), the bound tightening both
// rely on, and the negated-prediction block attached for an explanation.

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "milpexplain/error.hpp"
#include "milpexplain/milp.hpp"
#include "milpexplain/model.hpp"
#include "milpexplain/solver.hpp"

namespace milpexplain {

enum class EncodingKind { indicator, big_m };

inline const char* to_string(EncodingKind kind) {
  return kind == EncodingKind::indicator ? "indicator" : "bigm";
}

inline EncodingKind parse_encoding_kind(const std::string& text) {
  if (text == "indicator") return EncodingKind::indicator;
  if (text == "bigm" || text == "bigM" || text == "big-m") return EncodingKind::big_m;
  throw Error(ErrorCode::schema, "unknown encoding '" + text + "' (expected indicator or bigm)");
}

/// Every computed bound is widened by this much before it enters a model.
inline constexpr double kBoundPadding = 1e-6;

struct NeuronBounds {
  double pre_lb = 0.0;
  double pre_ub = 0.0;

  double relu_ub() const { return std::max(0.0, pre_ub); }
  double slack_ub() const { return std::max(0.0, -pre_lb); }
  double padded_lb() const { return pre_lb - kBoundPadding; }
  double padded_ub() const { return pre_ub + kBoundPadding; }
  /// Always active over the feature space, padding included.
  bool stable_active() const { return padded_lb() >= 0.0; }
  /// Always inactive over the feature space, padding included.
  bool stable_inactive() const { return !stable_active() && padded_ub() <= 0.0; }
};

struct NetworkBounds {
  EncodingKind kind = EncodingKind::indicator;
  std::vector<std::vector<NeuronBounds>> hidden;
  std::vector<double> out_lb;
  std::vector<double> out_ub;
  double tighten_seconds = 0.0;

  bool has_outputs() const { return !out_lb.empty(); }
};

struct NeuronVars {
  VarId x;
  std::optional<VarId> s;  // indicator encoding only
  VarId z;
};

struct EncodingCounts {
  std::size_t real_vars = 0;
  std::size_t binary_vars = 0;
  std::size_t constraints = 0;

  bool operator==(const EncodingCounts&) const = default;
};

struct EncodedNetwork {
  EncodingKind kind = EncodingKind::indicator;
  MilpModel model;
  std::vector<VarId> inputs;
  /// Feature domains [l_i, u_i]; input variable bounds are restored to these.
  std::vector<std::pair<double, double>> input_domains;
  std::vector<std::vector<NeuronVars>> hidden;
  std::vector<VarId> outputs;
  NetworkBounds bounds;
  std::optional<std::size_t> negated_class;
  /// (class j, q_j) for every j other than the negated class.
  std::vector<std::pair<std::size_t, VarId>> negation;
  /// Model construction alone; bound tightening is in bounds.tighten_seconds.
  double encode_seconds = 0.0;

  double build_seconds() const { return bounds.tighten_seconds + encode_seconds; }
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

inline VarId add_input_variable(MilpModel& model, const FeatureSpec& f, std::size_t i) {
  VarKind kind = VarKind::continuous;
  if (f.kind == FeatureKind::integer) kind = VarKind::integer;
  if (f.kind == FeatureKind::binary) kind = VarKind::binary;
  return model.add_variable(kind, f.lower, f.upper, "x0_" + std::to_string(i));
}

/// Terms of Σ_j w_j·prev_j; the bias stays with the caller.
inline std::vector<Term> affine_terms(const Layer& layer, std::size_t row,
                                      const std::vector<VarId>& previous) {
  std::vector<Term> terms;
  terms.reserve(previous.size() + 2);
  for (std::size_t j = 0; j < previous.size(); ++j) {
    if (layer.weights[row][j] != 0.0) terms.push_back({layer.weights[row][j], previous[j]});
  }
  return terms;
}

inline void encode_indicator_neuron(EncodedNetwork& enc, const Layer& layer, std::size_t l,
                                    std::size_t i, const std::vector<VarId>& previous,
                                    const NeuronBounds& nb) {
  auto& model = enc.model;
  const std::string suffix = std::to_string(l + 1) + "_" + std::to_string(i);
  const double ub_x = std::max(0.0, nb.padded_ub());
  const double ub_s = std::max(0.0, -nb.padded_lb());
  const VarId x = model.add_variable(VarKind::continuous, 0.0, ub_x, "x" + suffix);
  const VarId s = model.add_variable(VarKind::continuous, 0.0, ub_s, "s" + suffix);
  const VarId z = model.add_variable(VarKind::binary, 0.0, 1.0, "z" + suffix);
  // Σ w x_prev + b = x - s
  auto terms = affine_terms(layer, i, previous);
  terms.push_back({-1.0, x});
  terms.push_back({1.0, s});
  model.add_constraint({std::move(terms), Relation::equal, -layer.bias[i]}, "relu" + suffix);
  model.add_indicator(z, 1, {{{1.0, x}}, Relation::less_equal, 0.0}, "off" + suffix);
  model.add_indicator(z, 0, {{{1.0, s}}, Relation::less_equal, 0.0}, "on" + suffix);
  enc.hidden[l].push_back({x, s, z});
}

inline void encode_big_m_neuron(EncodedNetwork& enc, const Layer& layer, std::size_t l,
                                std::size_t i, const std::vector<VarId>& previous,
                                const NeuronBounds& nb) {
  auto& model = enc.model;
  const std::string suffix = std::to_string(l + 1) + "_" + std::to_string(i);
  const double b = layer.bias[i];
  const double lb = nb.padded_lb();
  const double ub = std::max(0.0, nb.padded_ub());

  // Stable neurons keep the four-row shape but never carry a zero-width
  // big-M term: z is fixed and the rows collapse to x = pre or x = 0.
  const bool active = nb.stable_active();
  const bool inactive = nb.stable_inactive();
  const double z_lo = active ? 1.0 : 0.0;
  const double z_hi = inactive ? 0.0 : 1.0;
  const VarId x = model.add_variable(VarKind::continuous, 0.0, inactive ? 0.0 : ub, "x" + suffix);
  const VarId z = model.add_variable(VarKind::binary, z_lo, z_hi, "z" + suffix);

  auto negated = affine_terms(layer, i, previous);
  for (auto& t : negated) t.coefficient = -t.coefficient;

  // x <= pre - lb (1 - z)
  auto upper_terms = negated;
  upper_terms.push_back({1.0, x});
  if (active) {
    model.add_constraint({std::move(upper_terms), Relation::less_equal, b}, "ubpre" + suffix);
  } else {
    upper_terms.push_back({-lb, z});
    model.add_constraint({std::move(upper_terms), Relation::less_equal, b - lb}, "ubpre" + suffix);
  }
  // x >= pre
  auto lower_terms = std::move(negated);
  lower_terms.push_back({1.0, x});
  model.add_constraint({std::move(lower_terms), Relation::greater_equal, b}, "lbpre" + suffix);
  // x <= ub z
  if (inactive) {
    model.add_constraint({{{1.0, x}}, Relation::less_equal, 0.0}, "ubz" + suffix);
  } else {
    model.add_constraint({{{1.0, x}, {-ub, z}}, Relation::less_equal, 0.0}, "ubz" + suffix);
  }
  // x >= 0 lives in the variable's lower bound.
  enc.hidden[l].push_back({x, std::nullopt, z});
}

/// Inputs plus the first `hidden_layers` hidden layers, plus outputs when
/// `with_outputs` (requires every hidden layer).
inline EncodedNetwork encode_prefix(const Ann& ann, const NetworkBounds& bounds,
                                    std::size_t hidden_layers, bool with_outputs) {
  EncodedNetwork enc;
  enc.kind = bounds.kind;
  enc.bounds = bounds;
  for (std::size_t i = 0; i < ann.num_inputs(); ++i) {
    enc.inputs.push_back(add_input_variable(enc.model, ann.features[i], i));
    enc.input_domains.emplace_back(ann.features[i].lower, ann.features[i].upper);
  }
  std::vector<VarId> previous = enc.inputs;
  enc.hidden.resize(hidden_layers);
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    const Layer& layer = ann.layers[l];
    for (std::size_t i = 0; i < layer.rows(); ++i) {
      if (bounds.kind == EncodingKind::indicator) {
        encode_indicator_neuron(enc, layer, l, i, previous, bounds.hidden[l][i]);
      } else {
        encode_big_m_neuron(enc, layer, l, i, previous, bounds.hidden[l][i]);
      }
    }
    previous.clear();
    for (const auto& nv : enc.hidden[l]) previous.push_back(nv.x);
  }
  if (with_outputs) {
    const Layer& layer = ann.output_layer();
    for (std::size_t i = 0; i < layer.rows(); ++i) {
      double lo = -kInfinity;
      double hi = kInfinity;
      if (bounds.has_outputs()) {
        lo = bounds.out_lb[i] - kBoundPadding;
        hi = bounds.out_ub[i] + kBoundPadding;
      }
      const VarId o = enc.model.add_variable(VarKind::continuous, lo, hi, "o_" + std::to_string(i));
      auto terms = affine_terms(layer, i, previous);
      terms.push_back({-1.0, o});
      enc.model.add_constraint({std::move(terms), Relation::equal, -layer.bias[i]},
                               "out_" + std::to_string(i));
      enc.outputs.push_back(o);
    }
  }
  return enc;
}

inline std::pair<double, double> optimize_affine(const MilpModel& base, const Layer& layer,
                                                 std::size_t row, const std::vector<VarId>& previous,
                                                 const SolverOptions& options,
                                                 const std::string& what) {
  MilpModel model = base;
  Objective objective{ObjectiveSense::minimize, affine_terms(layer, row, previous), layer.bias[row]};
  model.set_objective(objective);
  const MilpOutcome low = solve_milp(model, SolveMode::minimize, options);
  const MilpOutcome high = solve_milp(model, SolveMode::maximize, options);
  for (const auto* out : {&low, &high}) {
    if (out->status != MilpStatus::optimal) {
      throw Error(ErrorCode::inconclusive, "bound tightening for " + what + ": " +
                                               (out->status == MilpStatus::infeasible
                                                    ? std::string("model infeasible")
                                                    : out->reason));
    }
  }
  return {low.objective, high.objective};
}

}  // namespace detail

/// Layer by layer: min/max of each pre-activation over the encoding of the
/// layers before it, then min/max of each output over all hidden layers.
inline NetworkBounds tighten_bounds(const Ann& ann, EncodingKind kind,
                                    const SolverOptions& options = {}) {
  const auto start = std::chrono::steady_clock::now();
  NetworkBounds bounds;
  bounds.kind = kind;
  const std::size_t hidden_layers = ann.num_hidden_layers();
  bounds.hidden.resize(hidden_layers);

  auto previous_vars = [](const EncodedNetwork& enc, std::size_t l) {
    if (l == 0) return enc.inputs;
    std::vector<VarId> vars;
    for (const auto& nv : enc.hidden[l - 1]) vars.push_back(nv.x);
    return vars;
  };

  for (std::size_t l = 0; l < hidden_layers; ++l) {
    const EncodedNetwork prefix = detail::encode_prefix(ann, bounds, l, false);
    const auto previous = previous_vars(prefix, l);
    for (std::size_t i = 0; i < ann.layers[l].rows(); ++i) {
      auto [lo, hi] = detail::optimize_affine(prefix.model, ann.layers[l], i, previous, options,
                                              "neuron " + std::to_string(l + 1) + "_" +
                                                  std::to_string(i));
      bounds.hidden[l].push_back({lo, std::max(lo, hi)});
    }
  }

  const EncodedNetwork full = detail::encode_prefix(ann, bounds, hidden_layers, false);
  const auto previous = previous_vars(full, hidden_layers);
  for (std::size_t i = 0; i < ann.output_layer().rows(); ++i) {
    auto [lo, hi] = detail::optimize_affine(full.model, ann.output_layer(), i, previous, options,
                                            "output " + std::to_string(i));
    bounds.out_lb.push_back(lo);
    bounds.out_ub.push_back(std::max(lo, hi));
  }
  bounds.tighten_seconds = detail::seconds_since(start);
  return bounds;
}

inline EncodedNetwork encode_indicator(const Ann& ann, const NetworkBounds& bounds) {
  if (bounds.kind != EncodingKind::indicator) {
    throw Error(ErrorCode::schema, "encode_indicator needs bounds computed for the indicator encoding");
  }
  const auto start = std::chrono::steady_clock::now();
  EncodedNetwork enc = detail::encode_prefix(ann, bounds, ann.num_hidden_layers(), true);
  enc.encode_seconds = detail::seconds_since(start);
  return enc;
}

inline EncodedNetwork encode_big_m(const Ann& ann, const NetworkBounds& bounds) {
  if (bounds.kind != EncodingKind::big_m) {
    throw Error(ErrorCode::schema, "encode_big_m needs bounds computed for the big-M encoding");
  }
  const auto start = std::chrono::steady_clock::now();
  EncodedNetwork enc = detail::encode_prefix(ann, bounds, ann.num_hidden_layers(), true);
  enc.encode_seconds = detail::seconds_since(start);
  return enc;
}

inline EncodedNetwork encode(const Ann& ann, const NetworkBounds& bounds) {
  return bounds.kind == EncodingKind::indicator ? encode_indicator(ann, bounds)
                                                : encode_big_m(ann, bounds);
}

/// Bound tightening followed by encoding; build_seconds() covers both.
inline EncodedNetwork build_encoding(const Ann& ann, EncodingKind kind,
                                     const SolverOptions& options = {}) {
  return encode(ann, tighten_bounds(ann, kind, options));
}

/// q_j = 1 -> o_i <= o_j for j != i, and Σ q_j >= 1.
inline void attach_negation_indicator(EncodedNetwork& enc, std::size_t predicted) {
  if (enc.kind != EncodingKind::indicator) {
    throw Error(ErrorCode::schema, "indicator negation on a big-M encoding");
  }
  if (enc.negated_class) throw Error(ErrorCode::already_attached, "negated prediction already attached");
  if (predicted >= enc.outputs.size()) throw Error(ErrorCode::dimension, "class index out of range");
  std::vector<Term> sum;
  for (std::size_t j = 0; j < enc.outputs.size(); ++j) {
    if (j == predicted) continue;
    const VarId q = enc.model.add_variable(VarKind::binary, 0.0, 1.0, "q_" + std::to_string(j));
    enc.model.add_indicator(q, 1,
                            {{{1.0, enc.outputs[predicted]}, {-1.0, enc.outputs[j]}},
                             Relation::less_equal, 0.0},
                            "beats_" + std::to_string(j));
    enc.negation.emplace_back(j, q);
    sum.push_back({1.0, q});
  }
  enc.model.add_constraint({std::move(sum), Relation::greater_equal, 1.0}, "some_rival");
  enc.negated_class = predicted;
}

/// o_i - o_j <= (ub_i - lb_j)(1 - q_j) for j != i, and Σ q_j >= 1.
inline void attach_negation_big_m(EncodedNetwork& enc, std::size_t predicted) {
  if (enc.kind != EncodingKind::big_m) {
    throw Error(ErrorCode::schema, "big-M negation on an indicator encoding");
  }
  if (enc.negated_class) throw Error(ErrorCode::already_attached, "negated prediction already attached");
  if (!enc.bounds.has_outputs()) throw Error(ErrorCode::schema, "big-M negation needs output bounds");
  if (predicted >= enc.outputs.size()) throw Error(ErrorCode::dimension, "class index out of range");
  const double ub_i = enc.bounds.out_ub[predicted] + kBoundPadding;
  std::vector<Term> sum;
  for (std::size_t j = 0; j < enc.outputs.size(); ++j) {
    if (j == predicted) continue;
    const double lb_j = enc.bounds.out_lb[j] - kBoundPadding;
    const double big_m = ub_i - lb_j;
    const VarId q = enc.model.add_variable(VarKind::binary, 0.0, 1.0, "q_" + std::to_string(j));
    enc.model.add_constraint(
        {{{1.0, enc.outputs[predicted]}, {-1.0, enc.outputs[j]}, {big_m, q}}, Relation::less_equal,
         big_m},
        "beats_" + std::to_string(j));
    enc.negation.emplace_back(j, q);
    sum.push_back({1.0, q});
  }
  enc.model.add_constraint({std::move(sum), Relation::greater_equal, 1.0}, "some_rival");
  enc.negated_class = predicted;
}

inline void attach_negation(EncodedNetwork& enc, std::size_t predicted) {
  if (enc.kind == EncodingKind::indicator) {
    attach_negation_indicator(enc, predicted);
  } else {
    attach_negation_big_m(enc, predicted);
  }
}

/// Counts by role. Real variables: inputs, outputs, hidden x (and s).
/// Binaries: hidden z and negation q. Constraints: linear rows, indicator
/// constraints, plus one domain row per input, per hidden x and per hidden s
/// (those domains are stored as variable bounds). Integrality declarations
/// are not constraints.
inline EncodingCounts count_stats(const EncodedNetwork& enc) {
  EncodingCounts counts;
  std::size_t hidden = 0;
  std::size_t slacks = 0;
  for (const auto& layer : enc.hidden) {
    hidden += layer.size();
    for (const auto& nv : layer) slacks += nv.s ? 1 : 0;
  }
  counts.real_vars = enc.inputs.size() + enc.outputs.size() + hidden + slacks;
  counts.binary_vars = hidden + enc.negation.size();
  const std::size_t domain_rows = enc.inputs.size() + hidden + slacks;
  counts.constraints = enc.model.num_constraints() + enc.model.num_indicators() + domain_rows;
  return counts;
}

/// Closed forms for C ∧ F ∧ ¬E, given layer sizes n_0, hidden..., n_L.
inline EncodingCounts expected_counts(EncodingKind kind, const std::vector<std::size_t>& sizes) {
  const std::size_t n0 = sizes.front();
  const std::size_t nl = sizes.back();
  std::size_t hidden = 0;
  for (std::size_t k = 1; k + 1 < sizes.size(); ++k) hidden += sizes[k];
  if (kind == EncodingKind::indicator) {
    return {n0 + nl + 2 * hidden, nl - 1 + hidden, n0 + 2 * nl + 5 * hidden};
  }
  return {n0 + nl + hidden, nl - 1 + hidden, n0 + 2 * nl + 4 * hidden};
}

/// Assignment to every model variable induced by a forward pass: x = max(0, pre),
/// s = max(0, -pre), z as the encoding's canonical phase, and q_j = 1 for the
/// first rival j with o_i <= o_j (all zero when none exists).
inline std::vector<double> assignment_from_forward(const EncodedNetwork& enc, const Ann& ann,
                                                   const std::vector<double>& point) {
  const ForwardResult fwd = forward(ann, point);
  std::vector<double> values(enc.model.num_variables(), 0.0);
  for (std::size_t i = 0; i < enc.inputs.size(); ++i) values[enc.inputs[i]] = point[i];
  for (std::size_t l = 0; l < enc.hidden.size(); ++l) {
    for (std::size_t i = 0; i < enc.hidden[l].size(); ++i) {
      const auto& nv = enc.hidden[l][i];
      const double pre = fwd.pre_activations[l][i];
      values[nv.x] = std::max(0.0, pre);
      if (nv.s) values[*nv.s] = std::max(0.0, -pre);
      const auto& zvar = enc.model.variable(nv.z);
      if (zvar.lower == zvar.upper) {
        values[nv.z] = zvar.lower;
      } else if (enc.kind == EncodingKind::indicator) {
        values[nv.z] = pre <= 0.0 ? 1.0 : 0.0;
      } else {
        values[nv.z] = pre > 0.0 ? 1.0 : 0.0;
      }
    }
  }
  for (std::size_t i = 0; i < enc.outputs.size(); ++i) values[enc.outputs[i]] = fwd.logits[i];
  if (enc.negated_class) {
    const std::size_t target = *enc.negated_class;
    for (const auto& [j, q] : enc.negation) {
      if (fwd.logits[target] <= fwd.logits[j]) {
        values[q] = 1.0;
        break;
      }
    }
  }
  return values;
}

// ---------------------------------------------------------------------------
// Bounds cache file

inline nlohmann::json bounds_to_json(const NetworkBounds& bounds, const std::string& model_name,
                                     const std::string& model_hash) {
  nlohmann::json doc;
  doc["model"] = model_name;
  doc["model_hash"] = model_hash;
  doc["encoding"] = to_string(bounds.kind);
  doc["hidden"] = nlohmann::json::array();
  for (const auto& layer : bounds.hidden) {
    auto arr = nlohmann::json::array();
    for (const auto& nb : layer) arr.push_back({{"pre_lb", nb.pre_lb}, {"pre_ub", nb.pre_ub}});
    doc["hidden"].push_back(std::move(arr));
  }
  doc["outputs"] = nlohmann::json::array();
  for (std::size_t j = 0; j < bounds.out_lb.size(); ++j) {
    doc["outputs"].push_back({{"lb", bounds.out_lb[j]}, {"ub", bounds.out_ub[j]}});
  }
  doc["tighten_seconds"] = bounds.tighten_seconds;
  return doc;
}

inline NetworkBounds bounds_from_json(const nlohmann::json& doc, const Ann& ann) {
  try {
    NetworkBounds bounds;
    bounds.kind = parse_encoding_kind(doc.at("encoding").get<std::string>());
    for (const auto& layer : doc.at("hidden")) {
      std::vector<NeuronBounds> row;
      for (const auto& nb : layer) {
        row.push_back({nb.at("pre_lb").get<double>(), nb.at("pre_ub").get<double>()});
      }
      bounds.hidden.push_back(std::move(row));
    }
    for (const auto& out : doc.at("outputs")) {
      bounds.out_lb.push_back(out.at("lb").get<double>());
      bounds.out_ub.push_back(out.at("ub").get<double>());
    }
    bounds.tighten_seconds = doc.at("tighten_seconds").get<double>();
    if (bounds.hidden.size() != ann.num_hidden_layers() ||
        bounds.out_lb.size() != ann.num_classes()) {
      throw Error(ErrorCode::dimension, "bounds file does not match the model's architecture");
    }
    for (std::size_t l = 0; l < bounds.hidden.size(); ++l) {
      if (bounds.hidden[l].size() != ann.layers[l].rows()) {
        throw Error(ErrorCode::dimension, "bounds file hidden[" + std::to_string(l) +
                                              "] does not match the model");
      }
    }
    return bounds;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, std::string("bounds file: ") + e.what());
  }
}

}  // namespace milpexplain
