#pragma once

// Feedforward ReLU networks, feature domains and prediction semantics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "milpexplain/error.hpp"

namespace milpexplain {

enum class FeatureKind { continuous, integer, binary };

inline const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::continuous: return "continuous";
    case FeatureKind::integer: return "integer";
    case FeatureKind::binary: return "binary";
  }
  return "continuous";
}

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  double lower = 0.0;
  double upper = 1.0;

  bool is_discrete() const { return kind != FeatureKind::continuous; }

  /// Throws ErrorCode::bounds when the domain is malformed for the kind.
  void validate(const std::string& where) const {
    if (!std::isfinite(lower) || !std::isfinite(upper)) {
      throw Error(ErrorCode::non_finite, where + ": feature bounds must be finite");
    }
    if (lower > upper) {
      throw Error(ErrorCode::bounds, where + ": lower " + std::to_string(lower) + " > upper " +
                                         std::to_string(upper));
    }
    if (kind == FeatureKind::binary && (lower != 0.0 || upper != 1.0)) {
      throw Error(ErrorCode::bounds, where + ": binary feature must have bounds [0, 1]");
    }
    if (kind == FeatureKind::integer &&
        (std::floor(lower) != lower || std::floor(upper) != upper)) {
      throw Error(ErrorCode::bounds, where + ": integer feature must have integral bounds");
    }
  }
};

/// One affine layer. weights is row-major, rows() x cols().
struct Layer {
  std::vector<std::vector<double>> weights;
  std::vector<double> bias;

  std::size_t rows() const { return weights.size(); }
  std::size_t cols() const { return weights.empty() ? 0 : weights.front().size(); }

  double affine(std::size_t row, const std::vector<double>& input) const {
    double sum = bias[row];
    const auto& w = weights[row];
    for (std::size_t j = 0; j < w.size(); ++j) sum += w[j] * input[j];
    return sum;
  }
};

/// Layered network: every layer but the last applies ReLU; the last is linear.
struct Ann {
  std::string name;
  std::vector<FeatureSpec> features;
  std::vector<Layer> layers;
  std::vector<std::string> classes;

  std::size_t num_inputs() const { return features.size(); }
  std::size_t num_classes() const { return classes.size(); }
  std::size_t num_hidden_layers() const { return layers.empty() ? 0 : layers.size() - 1; }
  const Layer& output_layer() const { return layers.back(); }

  std::size_t hidden_neuron_count() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) total += layers[l].rows();
    return total;
  }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> sizes{features.size()};
    for (const auto& layer : layers) sizes.push_back(layer.rows());
    return sizes;
  }

  /// "2 → 1 → 2" style architecture descriptor.
  std::string architecture() const {
    std::string out;
    for (auto size : layer_sizes()) {
      if (!out.empty()) out += " → ";
      out += std::to_string(size);
    }
    return out;
  }

  void validate() const {
    if (features.empty()) throw Error(ErrorCode::schema, "features: at least one feature required");
    if (layers.empty()) throw Error(ErrorCode::schema, "layers: at least one layer required");
    for (std::size_t i = 0; i < features.size(); ++i) {
      features[i].validate("features[" + std::to_string(i) + "]");
    }
    std::size_t previous = features.size();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      const std::string where = "layers[" + std::to_string(l) + "]";
      if (layer.weights.empty()) throw Error(ErrorCode::dimension, where + ".weights: empty layer");
      for (std::size_t i = 0; i < layer.weights.size(); ++i) {
        const auto& row = layer.weights[i];
        if (row.size() != previous) {
          throw Error(ErrorCode::dimension, where + ".weights[" + std::to_string(i) +
                                                "]: expected " + std::to_string(previous) +
                                                " entries, got " + std::to_string(row.size()));
        }
        for (std::size_t j = 0; j < row.size(); ++j) {
          if (!std::isfinite(row[j])) {
            throw Error(ErrorCode::non_finite, where + ".weights[" + std::to_string(i) + "][" +
                                                   std::to_string(j) + "]: non-finite weight");
          }
        }
      }
      if (layer.bias.size() != layer.weights.size()) {
        throw Error(ErrorCode::dimension, where + ".bias: expected " +
                                              std::to_string(layer.weights.size()) +
                                              " entries, got " + std::to_string(layer.bias.size()));
      }
      for (std::size_t i = 0; i < layer.bias.size(); ++i) {
        if (!std::isfinite(layer.bias[i])) {
          throw Error(ErrorCode::non_finite,
                      where + ".bias[" + std::to_string(i) + "]: non-finite bias");
        }
      }
      previous = layer.rows();
    }
    if (classes.size() != previous) {
      throw Error(ErrorCode::dimension, "classes: expected " + std::to_string(previous) +
                                            " entries, got " + std::to_string(classes.size()));
    }
    if (classes.size() < 2) throw Error(ErrorCode::schema, "classes: at least two classes required");
  }
};

/// A point of the feature space, aligned with Ann::features.
struct Instance {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

inline void validate_instance(const Ann& ann, const Instance& point) {
  if (point.size() != ann.num_inputs()) {
    throw Error(ErrorCode::dimension, "instance has " + std::to_string(point.size()) +
                                          " values, model expects " +
                                          std::to_string(ann.num_inputs()));
  }
  for (std::size_t i = 0; i < point.size(); ++i) {
    const auto& f = ann.features[i];
    const double v = point[i];
    if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, "instance value for " + f.name);
    if (v < f.lower || v > f.upper) {
      throw Error(ErrorCode::bounds, "instance value " + std::to_string(v) + " for " + f.name +
                                         " outside [" + std::to_string(f.lower) + ", " +
                                         std::to_string(f.upper) + "]");
    }
    if (f.is_discrete() && std::floor(v) != v) {
      throw Error(ErrorCode::bounds, "instance value for discrete feature " + f.name +
                                         " is not integral");
    }
  }
}

struct ForwardResult {
  /// pre_activations[l][i]: affine value of neuron i in hidden layer l (0-based).
  std::vector<std::vector<double>> pre_activations;
  /// activations[l][i] = max(0, pre_activations[l][i]).
  std::vector<std::vector<double>> activations;
  std::vector<double> logits;
};

inline ForwardResult forward(const Ann& ann, const std::vector<double>& input) {
  ForwardResult result;
  std::vector<double> current = input;
  for (std::size_t l = 0; l < ann.layers.size(); ++l) {
    const auto& layer = ann.layers[l];
    std::vector<double> next(layer.rows());
    for (std::size_t i = 0; i < layer.rows(); ++i) next[i] = layer.affine(i, current);
    if (l + 1 == ann.layers.size()) {
      result.logits = std::move(next);
      break;
    }
    result.pre_activations.push_back(next);
    for (auto& v : next) v = std::max(0.0, v);
    result.activations.push_back(next);
    current = std::move(next);
  }
  return result;
}

inline ForwardResult forward(const Ann& ann, const Instance& point) {
  return forward(ann, point.values);
}

/// Argmax; exact ties go to the lowest index.
inline std::size_t argmax_lowest(const std::vector<double>& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

inline std::size_t predict(const Ann& ann, const Instance& point) {
  return argmax_lowest(forward(ann, point).logits);
}

/// min over j != target of (logit[target] - logit[j]).
inline double prediction_margin(const std::vector<double>& logits, std::size_t target) {
  double margin = INFINITY;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (j != target) margin = std::min(margin, logits[target] - logits[j]);
  }
  return margin;
}

// ---------------------------------------------------------------------------
// Model file (JSON)

namespace detail {

inline double finite_number(const nlohmann::json& node, const std::string& where) {
  if (!node.is_number()) throw Error(ErrorCode::schema, where + ": expected a number");
  const double v = node.get<double>();
  if (!std::isfinite(v)) throw Error(ErrorCode::non_finite, where + ": non-finite number");
  return v;
}

inline const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                                     const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::schema, where + (where.empty() ? "" : ".") + key + ": missing field");
  }
  return obj.at(key);
}

inline FeatureKind parse_feature_kind(const std::string& text, const std::string& where) {
  if (text == "continuous") return FeatureKind::continuous;
  if (text == "integer") return FeatureKind::integer;
  if (text == "binary") return FeatureKind::binary;
  throw Error(ErrorCode::schema, where + ": unknown feature kind '" + text + "'");
}

}  // namespace detail

inline Ann ann_from_json(const nlohmann::json& doc) {
  using detail::finite_number;
  using detail::require;
  if (!doc.is_object()) throw Error(ErrorCode::schema, "document: expected an object");
  Ann ann;
  const auto& name = require(doc, "name", "");
  if (!name.is_string()) throw Error(ErrorCode::schema, "name: expected a string");
  ann.name = name.get<std::string>();

  const auto& features = require(doc, "features", "");
  if (!features.is_array()) throw Error(ErrorCode::schema, "features: expected an array");
  for (std::size_t i = 0; i < features.size(); ++i) {
    const std::string where = "features[" + std::to_string(i) + "]";
    const auto& f = features[i];
    FeatureSpec spec;
    const auto& fname = require(f, "name", where);
    const auto& kind = require(f, "kind", where);
    if (!fname.is_string()) throw Error(ErrorCode::schema, where + ".name: expected a string");
    if (!kind.is_string()) throw Error(ErrorCode::schema, where + ".kind: expected a string");
    spec.name = fname.get<std::string>();
    spec.kind = detail::parse_feature_kind(kind.get<std::string>(), where + ".kind");
    spec.lower = finite_number(require(f, "lower", where), where + ".lower");
    spec.upper = finite_number(require(f, "upper", where), where + ".upper");
    ann.features.push_back(std::move(spec));
  }

  const auto& layers = require(doc, "layers", "");
  if (!layers.is_array()) throw Error(ErrorCode::schema, "layers: expected an array");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string where = "layers[" + std::to_string(l) + "]";
    Layer layer;
    const auto& weights = require(layers[l], "weights", where);
    if (!weights.is_array()) throw Error(ErrorCode::schema, where + ".weights: expected an array");
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const std::string row_where = where + ".weights[" + std::to_string(i) + "]";
      if (!weights[i].is_array()) throw Error(ErrorCode::schema, row_where + ": expected an array");
      std::vector<double> row;
      for (std::size_t j = 0; j < weights[i].size(); ++j) {
        row.push_back(finite_number(weights[i][j], row_where + "[" + std::to_string(j) + "]"));
      }
      layer.weights.push_back(std::move(row));
    }
    const auto& bias = require(layers[l], "bias", where);
    if (!bias.is_array()) throw Error(ErrorCode::schema, where + ".bias: expected an array");
    for (std::size_t i = 0; i < bias.size(); ++i) {
      layer.bias.push_back(finite_number(bias[i], where + ".bias[" + std::to_string(i) + "]"));
    }
    ann.layers.push_back(std::move(layer));
  }

  const auto& classes = require(doc, "classes", "");
  if (!classes.is_array()) throw Error(ErrorCode::schema, "classes: expected an array");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!classes[i].is_string()) {
      throw Error(ErrorCode::schema, "classes[" + std::to_string(i) + "]: expected a string");
    }
    ann.classes.push_back(classes[i].get<std::string>());
  }

  ann.validate();
  return ann;
}

/// Parses and validates a model document.
inline Ann load_model(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::syntax, std::string("malformed document: ") + e.what());
  }
  return ann_from_json(doc);
}

inline nlohmann::json ann_to_json(const Ann& ann) {
  nlohmann::json doc;
  doc["name"] = ann.name;
  doc["features"] = nlohmann::json::array();
  for (const auto& f : ann.features) {
    doc["features"].push_back(
        {{"name", f.name}, {"kind", to_string(f.kind)}, {"lower", f.lower}, {"upper", f.upper}});
  }
  doc["layers"] = nlohmann::json::array();
  for (const auto& layer : ann.layers) {
    doc["layers"].push_back({{"weights", layer.weights}, {"bias", layer.bias}});
  }
  doc["classes"] = ann.classes;
  return doc;
}

/// FNV-1a over the raw bytes; binds reports and caches to a model file.
inline std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Delimited tables and preprocessing

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

inline std::vector<std::string> split(std::string_view line, char delimiter) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delimiter, start);
    cells.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  in >> out;
  return !in.fail() && in.eof() && std::isfinite(out);
}

}  // namespace detail

/// Comma-separated text with a header row. Blank lines are skipped.
inline Table parse_table(std::string_view text, char delimiter = ',') {
  Table table;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    auto line = text.substr(start, end == std::string_view::npos ? end : end - start);
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split(line, delimiter);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw Error(ErrorCode::schema, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(table.header.size()) + " cells, got " +
                                         std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (table.header.empty()) throw Error(ErrorCode::schema, "table: missing header row");
  return table;
}

/// Reads instances in the model's feature space: header must list the model's
/// feature names in order, optionally followed by a `label` column.
inline std::vector<Instance> load_instances(const Ann& ann, std::string_view text) {
  const Table table = parse_table(text);
  const std::size_t n = ann.num_inputs();
  const bool has_label = table.header.size() == n + 1 && table.header.back() == "label";
  if (table.header.size() != n && !has_label) {
    throw Error(ErrorCode::schema, "dataset header has " + std::to_string(table.header.size()) +
                                       " columns, model has " + std::to_string(n) + " features");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (table.header[i] != ann.features[i].name) {
      throw Error(ErrorCode::schema, "dataset column " + std::to_string(i) + " is '" +
                                         table.header[i] + "', model feature is '" +
                                         ann.features[i].name + "'");
    }
  }
  std::vector<Instance> instances;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    Instance point;
    for (std::size_t i = 0; i < n; ++i) {
      double v = 0;
      if (!detail::parse_double(table.rows[r][i], v)) {
        throw Error(ErrorCode::schema, "row " + std::to_string(r) + ", column " +
                                           table.header[i] + ": not a number");
      }
      point.values.push_back(v);
    }
    validate_instance(ann, point);
    instances.push_back(std::move(point));
  }
  return instances;
}

enum class ColumnKind { continuous, integer, categorical, label };

/// Min-max parameters of a scaled continuous column; constant columns have range 0.
struct ScalingParams {
  std::string column;
  double min = 0.0;
  double range = 0.0;
};

struct PreprocessedDataset {
  std::vector<FeatureSpec> features;
  std::vector<Instance> instances;
  std::vector<ScalingParams> scaling;
  std::vector<std::string> labels;  // empty unless a label column is declared
};

/// One-hot expands categorical columns, min-max scales continuous columns to
/// [0, 1] and keeps integer columns unscaled. Categories are ordered by first
/// appearance.
inline PreprocessedDataset preprocess_dataset(const Table& raw,
                                              const std::vector<ColumnKind>& schema) {
  if (schema.size() != raw.header.size()) {
    throw Error(ErrorCode::schema, "schema declares " + std::to_string(schema.size()) +
                                       " columns, table has " + std::to_string(raw.header.size()));
  }
  if (raw.rows.empty()) throw Error(ErrorCode::schema, "table: no data rows");
  const std::size_t rows = raw.rows.size();

  PreprocessedDataset out;
  // Column-major buffer of output feature values.
  std::vector<std::vector<double>> columns;

  for (std::size_t c = 0; c < schema.size(); ++c) {
    const std::string& name = raw.header[c];
    switch (schema[c]) {
      case ColumnKind::label:
        for (const auto& row : raw.rows) out.labels.push_back(row[c]);
        break;
      case ColumnKind::categorical: {
        std::vector<std::string> categories;
        for (const auto& row : raw.rows) {
          if (std::find(categories.begin(), categories.end(), row[c]) == categories.end()) {
            categories.push_back(row[c]);
          }
        }
        for (const auto& category : categories) {
          out.features.push_back({name + "=" + category, FeatureKind::binary, 0.0, 1.0});
          std::vector<double> col(rows);
          for (std::size_t r = 0; r < rows; ++r) col[r] = raw.rows[r][c] == category ? 1.0 : 0.0;
          columns.push_back(std::move(col));
        }
        break;
      }
      case ColumnKind::continuous:
      case ColumnKind::integer: {
        std::vector<double> col(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          if (!detail::parse_double(raw.rows[r][c], col[r])) {
            throw Error(ErrorCode::schema, "row " + std::to_string(r) + ", column " + name +
                                               ": non-numeric value '" + raw.rows[r][c] + "'");
          }
        }
        const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
        const double min = *lo;
        const double max = *hi;
        if (schema[c] == ColumnKind::integer) {
          for (double v : col) {
            if (std::floor(v) != v) {
              throw Error(ErrorCode::schema, "column " + name + ": non-integral value in integer column");
            }
          }
          out.features.push_back({name, FeatureKind::integer, min, max});
        } else {
          const double range = max - min;
          for (auto& v : col) v = range > 0.0 ? (v - min) / range : 0.0;
          out.features.push_back({name, FeatureKind::continuous, 0.0, 1.0});
          out.scaling.push_back({name, min, range});
        }
        columns.push_back(std::move(col));
        break;
      }
    }
  }

  out.instances.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    out.instances[r].values.reserve(columns.size());
    for (const auto& col : columns) out.instances[r].values.push_back(col[r]);
  }
  return out;
}

}  // namespace milpexplain
