#pragma once

// Shared by the unit suites and the acceptance binary.

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "milpexplain/explain.hpp"

namespace support {

using namespace milpexplain;

inline std::string fixture_path(const std::string& relative) {
  return std::string(MILPEXPLAIN_FIXTURES) + "/" + relative;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline Ann fixture_model(const std::string& name) {
  return load_model(slurp(fixture_path("models/" + name + ".json")));
}

inline std::vector<Instance> fixture_data(const Ann& ann, const std::string& name) {
  return load_instances(ann, slurp(fixture_path("data/" + name + ".csv")));
}

/// min y1 s.t. 1 <= x1 <= 3, 3x1 + s1 - 2 = y1, 0 <= y1 <= 3x1 - 2,
/// 0 <= s1 <= 3x1 - 2, z1 = 1 -> y1 <= 0, z1 = 0 -> s1 <= 0, z1 binary.
inline MilpModel worked_example() {
  MilpModel m;
  const auto x1 = m.add_variable(VarKind::continuous, 1, 3, "x1");
  const auto y1 = m.add_variable(VarKind::continuous, 0, kInfinity, "y1");
  const auto s1 = m.add_variable(VarKind::continuous, 0, kInfinity, "s1");
  const auto z1 = m.add_variable(VarKind::binary, 0, 1, "z1");
  m.add_constraint({{{3, x1}, {1, s1}, {-1, y1}}, Relation::equal, 2}, "link");
  m.add_constraint({{{1, y1}, {-3, x1}}, Relation::less_equal, -2}, "y_cap");
  m.add_constraint({{{1, s1}, {-3, x1}}, Relation::less_equal, -2}, "s_cap");
  m.add_indicator(z1, 1, {{{1, y1}}, Relation::less_equal, 0}, "y_off");
  m.add_indicator(z1, 0, {{{1, s1}}, Relation::less_equal, 0}, "s_off");
  m.set_objective({ObjectiveSense::minimize, {{1, y1}}, 0});
  return m;
}

struct NetShape {
  std::size_t inputs = 2;
  std::vector<std::size_t> hidden;
  std::size_t classes = 2;
  /// Fraction of inputs that are binary / integer in [0, 3].
  double binary_share = 0.0;
  double integer_share = 0.0;
};

/// Weights uniform in [-1, 1], biases in [-0.5, 0.5], inputs over [0, 1]
/// unless discrete.
inline Ann random_net(std::mt19937_64& rng, const NetShape& shape) {
  std::uniform_real_distribution<double> w(-1.0, 1.0);
  std::uniform_real_distribution<double> b(-0.5, 0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Ann ann;
  ann.name = "random";
  for (std::size_t i = 0; i < shape.inputs; ++i) {
    FeatureSpec f;
    f.name = "f" + std::to_string(i);
    const double r = u(rng);
    if (r < shape.binary_share) {
      f.kind = FeatureKind::binary;
    } else if (r < shape.binary_share + shape.integer_share) {
      f.kind = FeatureKind::integer;
      f.upper = 3;
    } else {
      f.kind = FeatureKind::continuous;
    }
    ann.features.push_back(f);
  }
  std::vector<std::size_t> sizes = {shape.inputs};
  sizes.insert(sizes.end(), shape.hidden.begin(), shape.hidden.end());
  sizes.push_back(shape.classes);
  for (std::size_t l = 1; l < sizes.size(); ++l) {
    Layer layer;
    for (std::size_t r = 0; r < sizes[l]; ++r) {
      std::vector<double> row;
      for (std::size_t c = 0; c < sizes[l - 1]; ++c) row.push_back(w(rng));
      layer.weights.push_back(std::move(row));
      layer.bias.push_back(b(rng));
    }
    ann.layers.push_back(std::move(layer));
  }
  for (std::size_t c = 0; c < shape.classes; ++c) ann.classes.push_back("c" + std::to_string(c));
  ann.validate();
  return ann;
}

inline Instance random_point(std::mt19937_64& rng, const Ann& ann) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Instance p;
  for (const auto& f : ann.features) {
    double v = f.lower + u(rng) * (f.upper - f.lower);
    if (f.kind != FeatureKind::continuous) {
      v = std::min(f.upper, std::floor(f.lower + u(rng) * (f.upper - f.lower + 1)));
    }
    p.values.push_back(v);
  }
  return p;
}

/// Draws points until one has a prediction margin of at least `margin`.
inline Instance random_clear_point(std::mt19937_64& rng, const Ann& ann, double margin = 1e-3) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Instance p = random_point(rng, ann);
    const auto logits = forward(ann, p).logits;
    if (prediction_margin(logits, argmax_lowest(logits)) >= margin) return p;
  }
  throw std::runtime_error("no clear point found");
}

/// Every subset of {0..n-1} as a free mask, in binary counting order.
inline std::vector<std::vector<bool>> all_free_sets(std::size_t n) {
  std::vector<std::vector<bool>> out;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<bool> free(n);
    for (std::size_t i = 0; i < n; ++i) free[i] = (mask >> i) & 1;
    out.push_back(std::move(free));
  }
  return out;
}

}  // namespace support
