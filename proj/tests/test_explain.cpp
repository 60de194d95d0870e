#include <gtest/gtest.h>

#include <random>

#include "milpexplain/explain.hpp"
#include "support.hpp"

using namespace milpexplain;
using support::fixture_model;

namespace {

const EncodingKind kKinds[] = {EncodingKind::indicator, EncodingKind::big_m};

EncodedNetwork negated(const Ann& ann, EncodingKind kind, const Instance& x) {
  EncodedNetwork enc = build_encoding(ann, kind);
  attach_negation(enc, predict(ann, x));
  return enc;
}

Explanation explain(const Ann& ann, EncodingKind kind, const Instance& x,
                    OrderKind order = OrderKind::natural) {
  EncodedNetwork enc = negated(ann, kind, x);
  return minimal_explanation(ann, enc, x, FeatureOrder{order, 0}.permutation(ann.num_inputs()));
}

Explanation tampered(std::size_t cls, std::vector<std::pair<std::size_t, double>> kept,
                     std::vector<std::size_t> dropped) {
  Explanation e;
  e.predicted_class = cls;
  e.kept = std::move(kept);
  e.dropped = std::move(dropped);
  return e;
}

}  // namespace

TEST(Entails, GateNetFreeSets) {
  const Ann ann = fixture_model("gatenet");
  const Instance x{{0.9, 0.3}};
  for (auto kind : kKinds) {
    EncodedNetwork enc = negated(ann, kind, x);
    EXPECT_TRUE(entails(enc, x, {false, false}, 0).holds);
    EXPECT_TRUE(entails(enc, x, {false, true}, 0).holds);
    const auto broken = entails(enc, x, {true, false}, 0);
    EXPECT_FALSE(broken.holds);
    ASSERT_TRUE(broken.counterexample.has_value());
    // The witness really is not a strict win for "high".
    EXPECT_LE((*broken.counterexample)[0], 0.6 + 1e-6);
    EXPECT_EQ((*broken.counterexample)[1], 0.3);
  }
}

TEST(Entails, RestoresBoundsAndRejectsWrongTarget) {
  const Ann ann = fixture_model("gatenet");
  const Instance x{{0.9, 0.3}};
  EncodedNetwork enc = negated(ann, EncodingKind::big_m, x);
  const auto before = export_lp(enc.model);
  entails(enc, x, {true, false}, 0);
  EXPECT_EQ(export_lp(enc.model), before);
  EXPECT_THROW(entails(enc, x, {true, false}, 1), Error);
  EXPECT_THROW(entails(enc, x, {true}, 0), Error);
}

TEST(Entails, MatchesBruteForceOnGateNetAndTinyNet) {
  for (const std::string name : {"gatenet", "tinynet"}) {
    const Ann ann = fixture_model(name);
    std::mt19937_64 rng(21);
    for (int k = 0; k < 15; ++k) {
      const Instance x = support::random_clear_point(rng, ann);
      const std::size_t cls = predict(ann, x);
      for (auto kind : kKinds) {
        EncodedNetwork enc = negated(ann, kind, x);
        for (const auto& free : support::all_free_sets(2)) {
          EXPECT_EQ(entails(enc, x, free, cls).holds, brute_force_entails(ann, x, free, cls).holds)
              << name << " " << to_string(kind);
        }
      }
    }
  }
}

TEST(BruteForce, KnownVerdicts) {
  const Ann tiny = fixture_model("tinynet");
  const Instance x{{1.0, 0.0}};
  EXPECT_TRUE(brute_force_entails(tiny, x, {false, false}, 0).holds);
  const auto v = brute_force_entails(tiny, x, {true, false}, 0);
  EXPECT_FALSE(v.holds);
  ASSERT_TRUE(v.counterexample);
  const auto logits = forward(tiny, *v.counterexample).logits;
  EXPECT_LE(logits[0], logits[1] + 1e-6);

  const Ann cnet = fixture_model("constnet");
  EXPECT_TRUE(brute_force_entails(cnet, Instance{{0.2, 0.4}}, {true, true}, 0).holds);
}

TEST(BruteForce, EnumeratesDiscreteFeatures) {
  const Ann ann = fixture_model("mixed");
  std::mt19937_64 rng(8);
  const Instance x = support::random_clear_point(rng, ann);
  const std::size_t cls = predict(ann, x);
  std::vector<bool> free(ann.num_inputs(), false);
  for (std::size_t i = 0; i < ann.num_inputs(); ++i) {
    if (ann.features[i].is_discrete()) free[i] = true;
  }
  for (auto kind : kKinds) {
    EncodedNetwork enc = negated(ann, kind, x);
    EXPECT_EQ(entails(enc, x, free, cls).holds, brute_force_entails(ann, x, free, cls).holds);
  }
}

TEST(BruteForce, SizeGuard) {
  const Ann ann = fixture_model("deep");
  const Instance x{std::vector<double>(ann.num_inputs(), 0.5)};
  try {
    brute_force_entails(ann, x, std::vector<bool>(ann.num_inputs(), true), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::size_guard);
  }
}

TEST(MinimalExplanation, GateNetKeepsOnlyX1) {
  const Ann ann = fixture_model("gatenet");
  for (auto kind : kKinds) {
    const auto e = explain(ann, kind, Instance{{0.9, 0.3}});
    EXPECT_EQ(e.predicted_class, 0u);
    ASSERT_EQ(e.kept.size(), 1u);
    EXPECT_EQ(e.kept[0].first, 0u);
    EXPECT_EQ(e.kept[0].second, 0.9);
    EXPECT_EQ(e.dropped, std::vector<std::size_t>{1});
    ASSERT_EQ(e.checks.size(), 2u);
    EXPECT_FALSE(e.checks[0].dropped);
    EXPECT_TRUE(e.checks[1].dropped);
    EXPECT_GE(e.total_seconds, 0.0);
  }
}

TEST(MinimalExplanation, ConstantNetKeepsNothing) {
  const Ann ann = fixture_model("constnet");
  for (auto kind : kKinds) {
    const auto e = explain(ann, kind, Instance{{0.3, 0.8}});
    EXPECT_TRUE(e.kept.empty());
    EXPECT_EQ(e.dropped, (std::vector<std::size_t>{0, 1}));
  }
}

TEST(MinimalExplanation, TinyNetCornerNeedsBoth) {
  const Ann ann = fixture_model("tinynet");
  for (auto kind : kKinds) {
    for (auto order : {OrderKind::natural, OrderKind::reverse}) {
      const auto e = explain(ann, kind, Instance{{1.0, 0.0}}, order);
      EXPECT_EQ(e.kept_features(), (std::vector<std::size_t>{0, 1}));
    }
  }
}

TEST(MinimalExplanation, OrderDeterminesProcessingSequence) {
  const Ann ann = fixture_model("gatenet");
  const auto e = explain(ann, EncodingKind::big_m, Instance{{0.9, 0.3}}, OrderKind::reverse);
  ASSERT_EQ(e.checks.size(), 2u);
  EXPECT_EQ(e.checks[0].feature, 1u);
  EXPECT_TRUE(e.checks[0].dropped);
  EXPECT_EQ(e.kept_features(), std::vector<std::size_t>{0});
}

TEST(MinimalExplanation, TieMarginRejected) {
  const Ann ann = fixture_model("gatenet");
  const Instance tie{{0.6, 0.5}};  // both logits 0.1
  EncodedNetwork enc = build_encoding(ann, EncodingKind::big_m);
  attach_negation(enc, 0);
  try {
    minimal_explanation(ann, enc, tie, {0, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::tie_margin);
  }
}

TEST(MinimalExplanation, BadInputs) {
  const Ann ann = fixture_model("gatenet");
  const Instance x{{0.9, 0.3}};
  EncodedNetwork wrong = build_encoding(ann, EncodingKind::big_m);
  attach_negation(wrong, 1);
  EXPECT_THROW(minimal_explanation(ann, wrong, x, {0, 1}), Error);
  EncodedNetwork enc = negated(ann, EncodingKind::big_m, x);
  EXPECT_THROW(minimal_explanation(ann, enc, x, {0, 0}), Error);
  EXPECT_THROW(minimal_explanation(ann, enc, x, {0}), Error);
  EXPECT_THROW(minimal_explanation(ann, enc, Instance{{0.9}}, {0, 1}), Error);
}

TEST(MinimalExplanation, EncodingReusableAcrossInstances) {
  const Ann ann = fixture_model("blobs");
  const auto data = support::fixture_data(ann, "blobs");
  for (auto kind : kKinds) {
    const EncodedNetwork base = build_encoding(ann, kind);
    for (std::size_t k = 0; k < 5 && k < data.size(); ++k) {
      EncodedNetwork enc = base;
      attach_negation(enc, predict(ann, data[k]));
      const auto first = minimal_explanation(ann, enc, data[k], {0, 1, 2, 3});
      const auto again = minimal_explanation(ann, enc, data[k], {0, 1, 2, 3});
      EXPECT_EQ(first.kept, again.kept);
    }
  }
}

TEST(Verify, AcceptsComputedExplanation) {
  const Ann ann = fixture_model("gatenet");
  const Instance x{{0.9, 0.3}};
  for (auto kind : kKinds) {
    EXPECT_TRUE(verify_explanation(ann, kind, x, explain(ann, kind, x)).passed());
  }
}

TEST(Verify, InsufficientExplanationFails) {
  const Ann ann = fixture_model("gatenet");
  const Instance x{{0.9, 0.3}};
  const auto report = verify_explanation(ann, EncodingKind::big_m, x, tampered(0, {{1, 0.3}}, {0}));
  ASSERT_FALSE(report.passed());
  EXPECT_EQ(report.failures[0].check, CheckKind::sufficiency);
}

TEST(Verify, NonMinimalExplanationNamesFeature) {
  const Ann ann = fixture_model("gatenet");
  const Instance x{{0.9, 0.3}};
  const auto report =
      verify_explanation(ann, EncodingKind::indicator, x, tampered(0, {{0, 0.9}, {1, 0.3}}, {}));
  ASSERT_EQ(report.failures.size(), 1u);
  EXPECT_EQ(report.failures[0].check, CheckKind::minimality);
  EXPECT_EQ(report.failures[0].feature, std::optional<std::size_t>{1});
}

TEST(Verify, WrongPredictionFails) {
  const Ann ann = fixture_model("gatenet");
  const Instance x{{0.9, 0.3}};
  const auto report = verify_explanation(ann, EncodingKind::big_m, x, tampered(1, {{0, 0.9}}, {1}));
  ASSERT_FALSE(report.passed());
  EXPECT_EQ(report.failures[0].check, CheckKind::prediction);
}

TEST(FeatureOrder, ParseAndPermute) {
  EXPECT_EQ(parse_feature_order("natural").permutation(3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(parse_feature_order("reverse").permutation(3), (std::vector<std::size_t>{2, 1, 0}));
  const auto seeded = parse_feature_order("seed:7");
  EXPECT_EQ(seeded.seed, 7u);
  EXPECT_EQ(seeded.describe(), "seed:7");
  EXPECT_EQ(seeded.permutation(10), parse_feature_order("seed:7").permutation(10));
  auto p = seeded.permutation(10);
  std::sort(p.begin(), p.end());
  EXPECT_EQ(p, FeatureOrder{}.permutation(10));
  EXPECT_EQ(parse_feature_order("seed", 42).seed, 42u);
  EXPECT_THROW(parse_feature_order("seed:x"), Error);
  EXPECT_THROW(parse_feature_order("random"), Error);
}

TEST(Report, JsonRoundTrip) {
  const Ann ann = fixture_model("gatenet");
  ExplanationReport report{ann.name, "h", EncodingKind::big_m, "natural", {}};
  report.instances.push_back({0, "ok", "", explain(ann, EncodingKind::big_m, Instance{{0.9, 0.3}})});
  report.instances.push_back({1, "rejected", "tie", {}});
  const auto doc = report_to_json(report, ann, true);
  EXPECT_EQ(doc["instances"][0]["predicted_label"], "high");
  EXPECT_EQ(doc["instances"][0]["kept"][0]["name"], "x1");
  EXPECT_EQ(doc["instances"][0]["checks"][0]["solve_seconds"], 0.0);
  EXPECT_FALSE(doc["instances"][1].contains("kept"));
  const auto back = report_from_json(nlohmann::json::parse(doc.dump()));
  EXPECT_EQ(back.encoding, EncodingKind::big_m);
  EXPECT_EQ(back.instances[0].explanation.kept, report.instances[0].explanation.kept);
  EXPECT_EQ(back.instances[0].explanation.dropped, report.instances[0].explanation.dropped);
  EXPECT_EQ(back.instances[1].status, "rejected");
  EXPECT_EQ(report_to_json(back, ann, true), doc);
  EXPECT_THROW(report_from_json(nlohmann::json::object()), Error);
}
