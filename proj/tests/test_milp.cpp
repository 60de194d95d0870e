#include <gtest/gtest.h>

#include <functional>
#include <set>

#include "milpexplain/milp.hpp"
#include "milpexplain/simplex.hpp"
#include "support.hpp"

using namespace milpexplain;

namespace {

ErrorCode error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::io;
}

}  // namespace

TEST(AddVariable, DenseIdsFromZero) {
  MilpModel m;
  EXPECT_EQ(m.add_variable(VarKind::continuous, 0, 1, "x"), 0u);
  EXPECT_EQ(m.add_variable(VarKind::binary, 0, 1, "z"), 1u);
  EXPECT_EQ(m.add_variable(VarKind::integer, -3, 3, "n"), 2u);
  EXPECT_EQ(m.variable(1).kind, VarKind::binary);
  EXPECT_EQ(m.num_variables(), 3u);
}

TEST(AddVariable, BadBoundsRejected) {
  MilpModel m;
  EXPECT_EQ(error_of([&] { m.add_variable(VarKind::continuous, 2, 1, "x"); }), ErrorCode::bounds);
  EXPECT_EQ(error_of([&] { m.add_variable(VarKind::binary, 0, 2, "z"); }), ErrorCode::bounds);
  EXPECT_EQ(error_of([&] { m.add_variable(VarKind::continuous, kInfinity, kInfinity, "y"); }),
            ErrorCode::bounds);
  EXPECT_EQ(m.num_variables(), 0u);
}

TEST(AddVariable, NamesAreUnique) {
  MilpModel m;
  m.add_variable(VarKind::continuous, 0, 1, "x");
  EXPECT_EQ(error_of([&] { m.add_variable(VarKind::continuous, 0, 1, "x"); }),
            ErrorCode::duplicate_variable);
}

TEST(AddConstraint, StoredVerbatim) {
  MilpModel m;
  const auto x = m.add_variable(VarKind::continuous, 0, 1, "x");
  const auto y = m.add_variable(VarKind::continuous, 0, 1, "y");
  const auto id = m.add_constraint({{{1, x}, {1, y}}, Relation::less_equal, 1}, "cap");
  EXPECT_EQ(id, 0u);
  const auto& row = m.constraints()[0];
  ASSERT_EQ(row.terms.size(), 2u);
  EXPECT_EQ(row.terms[1].var, y);
  EXPECT_EQ(row.relation, Relation::less_equal);
  EXPECT_EQ(row.rhs, 1.0);
  EXPECT_EQ(m.constraint_names()[0], "cap");
}

TEST(AddConstraint, DuplicateAndUnknownVariables) {
  MilpModel m;
  const auto x = m.add_variable(VarKind::continuous, 0, 1, "x");
  EXPECT_EQ(error_of([&] { m.add_constraint({{{1, x}, {2, x}}, Relation::equal, 0}); }),
            ErrorCode::duplicate_variable);
  EXPECT_EQ(error_of([&] { m.add_constraint({{{1, 7}}, Relation::equal, 0}); }),
            ErrorCode::unknown_variable);
  EXPECT_EQ(error_of([&] { m.add_constraint({{{kInfinity, x}}, Relation::equal, 0}); }),
            ErrorCode::non_finite);
  EXPECT_EQ(m.num_constraints(), 0u);
}

TEST(AddIndicator, StoredSymbolically) {
  MilpModel m;
  const auto x = m.add_variable(VarKind::continuous, 0, 1, "x");
  const auto s = m.add_variable(VarKind::continuous, 0, 1, "s");
  const auto z = m.add_variable(VarKind::binary, 0, 1, "z");
  m.add_indicator(z, 1, {{{1, x}}, Relation::less_equal, 0});
  m.add_indicator(z, 0, {{{1, s}}, Relation::less_equal, 0});
  ASSERT_EQ(m.num_indicators(), 2u);
  EXPECT_EQ(m.num_constraints(), 0u);
  EXPECT_EQ(m.indicators()[1].active_value, 0);
  EXPECT_EQ(m.indicators()[1].implied.terms[0].var, s);
}

TEST(AddIndicator, NonBinaryRejected) {
  MilpModel m;
  const auto x = m.add_variable(VarKind::continuous, 0, 1, "x");
  const auto z = m.add_variable(VarKind::continuous, 0, 1, "z");
  const auto n = m.add_variable(VarKind::integer, 0, 1, "n");
  EXPECT_EQ(error_of([&] { m.add_indicator(z, 1, {{{1, x}}, Relation::less_equal, 0}); }),
            ErrorCode::not_binary);
  EXPECT_EQ(error_of([&] { m.add_indicator(n, 1, {{{1, x}}, Relation::less_equal, 0}); }),
            ErrorCode::not_binary);
}

TEST(SetBounds, ReturnsPreviousForRestore) {
  MilpModel m;
  const auto x = m.add_variable(VarKind::continuous, 0, 1, "x");
  const auto before = export_lp(m);
  const auto previous = m.set_bounds(x, 0.9, 0.9);
  EXPECT_EQ(previous, std::make_pair(0.0, 1.0));
  EXPECT_EQ(m.variable(x).lower, 0.9);
  m.set_bounds(x, previous.first, previous.second);
  EXPECT_EQ(export_lp(m), before);
}

TEST(SetBounds, InvalidRejectedAndModelUnchanged) {
  MilpModel m;
  const auto x = m.add_variable(VarKind::continuous, 0, 1, "x");
  const auto z = m.add_variable(VarKind::binary, 0, 1, "z");
  EXPECT_EQ(error_of([&] { m.set_bounds(x, 2, 1); }), ErrorCode::bounds);
  EXPECT_EQ(error_of([&] { m.set_bounds(z, 0, 2); }), ErrorCode::bounds);
  EXPECT_EQ(error_of([&] { m.set_bounds(9, 0, 1); }), ErrorCode::unknown_variable);
  EXPECT_EQ(m.variable(x).upper, 1.0);
}

TEST(SetBounds, FixedBinaryHonoredByRelaxation) {
  MilpModel m;
  const auto x = m.add_variable(VarKind::continuous, 0, 10, "x");
  const auto z = m.add_variable(VarKind::binary, 0, 1, "z");
  m.add_constraint({{{1, x}, {-4, z}}, Relation::less_equal, 0});
  m.set_objective({ObjectiveSense::maximize, {{1, x}, {-1, z}}, 0});
  const auto free = solve_lp(m);
  ASSERT_EQ(free.status, LpStatus::optimal);
  m.set_bounds(z, 1, 1);
  const auto fixed = solve_lp(m);
  ASSERT_EQ(fixed.status, LpStatus::optimal);
  EXPECT_EQ(fixed.values[z], 1.0);
  EXPECT_NEAR(fixed.values[x], 4.0, 1e-9);
}

TEST(MaxViolation, CoversBoundsRowsIntegralityAndIndicators) {
  MilpModel m;
  const auto x = m.add_variable(VarKind::continuous, 0, 1, "x");
  const auto z = m.add_variable(VarKind::binary, 0, 1, "z");
  m.add_constraint({{{1, x}}, Relation::greater_equal, 0.5});
  m.add_indicator(z, 1, {{{1, x}}, Relation::less_equal, 0.6});
  EXPECT_DOUBLE_EQ(m.max_violation({0.6, 1}), 0.0);
  EXPECT_NEAR(m.max_violation({0.8, 1}), 0.2, 1e-12);
  EXPECT_NEAR(m.max_violation({0.8, 0}), 0.0, 1e-12);
  EXPECT_NEAR(m.max_violation({0.3, 0}), 0.2, 1e-12);
  EXPECT_NEAR(m.max_violation({0.6, 0.5}), 0.5, 1e-12);
  EXPECT_NEAR(m.max_violation({1.5, 0}), 0.5, 1e-12);
}

TEST(ExportLp, EmptyModel) {
  EXPECT_EQ(export_lp(MilpModel{}),
            "Minimize\n obj:\nSubject To\nBounds\nBinary\nGeneral\nEnd\n");
}

TEST(ExportLp, WorkedExampleMatchesGolden) {
  EXPECT_EQ(export_lp(support::worked_example()),
            support::slurp(support::fixture_path("golden/worked_example.lp")));
}

TEST(ExportLp, Deterministic) {
  EXPECT_EQ(export_lp(support::worked_example()), export_lp(support::worked_example()));
}

TEST(ExportLp, SeventeenDigitsRoundTrip) {
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(format_number(0.0), "0");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(1e300), "1.0000000000000001e+300");
  for (double v : {0.1, 1.0 / 3.0, -2.5e-7, 123456.789}) {
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
}

TEST(ExportLp, SectionsAndBoundsForms) {
  MilpModel m;
  const auto a = m.add_variable(VarKind::continuous, -kInfinity, kInfinity, "a");
  const auto b = m.add_variable(VarKind::continuous, 2, 2, "b");
  const auto n = m.add_variable(VarKind::integer, 0, 5, "n");
  const auto z = m.add_variable(VarKind::binary, 0, 1, "z");
  m.add_constraint({{{1, a}, {-2, b}, {0.5, n}}, Relation::greater_equal, -1}, "r");
  m.add_indicator(z, 0, {{{1, a}}, Relation::equal, 3}, "i");
  m.set_objective({ObjectiveSense::maximize, {{1, a}}, 0});
  EXPECT_EQ(export_lp(m),
            "Maximize\n obj: 1 a\nSubject To\n r: 1 a - 2 b + 0.5 n >= -1\n"
            " i: z = 0 -> 1 a = 3\nBounds\n a free\n b = 2\n 0 <= n <= 5\n"
            "Binary\n z\nGeneral\n n\nEnd\n");
}

TEST(ExportLp, DistinguishesModelsInCorpus) {
  // Export is injective over small perturbations of the fixture models.
  std::set<std::string> seen;
  auto add = [&](const MilpModel& m) { EXPECT_TRUE(seen.insert(export_lp(m)).second); };
  MilpModel base = support::worked_example();
  add(base);
  MilpModel tighter = base;
  tighter.set_bounds(0, 1, 2);
  add(tighter);
  MilpModel sense = base;
  sense.set_objective({ObjectiveSense::maximize, {{1, 1}}, 0});
  add(sense);
  MilpModel extra = base;
  extra.add_constraint({{{1, 0}}, Relation::less_equal, 2.5});
  add(extra);
}
