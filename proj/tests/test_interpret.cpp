#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lgn/interpret.hpp"
#include "lgn/linalg.hpp"

namespace lgn {
namespace {

TEST(SelectionStats, Examples) {
  const AttentionStats c = selection_stats(Vector{0.3, 0.3, 0.3});
  EXPECT_DOUBLE_EQ(c.mean, 0.3);
  EXPECT_EQ(c.sd, 0.0);
  const AttentionStats s = selection_stats(Vector{0.0, 2.0});
  EXPECT_DOUBLE_EQ(s.mean, 1.0);
  EXPECT_DOUBLE_EQ(s.sd, std::sqrt(2.0));
  EXPECT_THROW(selection_stats(Vector{1.0}), std::invalid_argument);
}

TEST(SelectionInterval, Examples) {
  const Interval i = selection_interval(0.001, 0.0461);
  EXPECT_NEAR(i.hi, 3.2905 * 0.0461, 1e-4);
  EXPECT_NEAR(i.hi, 0.1517, 1e-4);
  EXPECT_EQ(i.lo, -i.hi);
  const Interval z = selection_interval(0.001, 0.0);
  EXPECT_EQ(z.lo, 0.0);
  EXPECT_EQ(z.hi, 0.0);
  EXPECT_NEAR(selection_interval(0.001, 1.0).hi, 3.2905, 1e-3);
}

TEST(SelectionInterval, SymmetricForAnyInputs) {
  for (double alpha : {1e-6, 0.001, 0.05, 0.3, 0.49})
    for (double sd : {0.0, 1e-3, 0.5, 7.0}) {
      const Interval i = selection_interval(alpha, sd);
      EXPECT_EQ(i.lo, -i.hi);
      EXPECT_GE(i.hi, 0.0);
    }
}

TEST(SelectionInterval, RejectsDomainViolations) {
  EXPECT_THROW(selection_interval(0.0, 1.0), std::domain_error);
  EXPECT_THROW(selection_interval(0.5, 1.0), std::domain_error);
  EXPECT_THROW(selection_interval(0.01, -1.0), std::domain_error);
}

TEST(Coverage, Examples) {
  const Interval i{-0.1, 0.1};
  const CoverageResult zeros = coverage_and_verdict(Vector(100, 0.0), i, 0.001);
  EXPECT_EQ(zeros.coverage, 1.0);
  EXPECT_EQ(zeros.verdict, Verdict::Droppable);
  Vector half(100, 0.0);
  for (std::size_t k = 0; k < 50; ++k) half[k] = 5.0;
  const CoverageResult h = coverage_and_verdict(half, i, 0.001);
  EXPECT_DOUBLE_EQ(h.coverage, 0.5);
  EXPECT_EQ(h.verdict, Verdict::Keep);
}

TEST(Coverage, MarginBoundary) {
  // 2 of 1000 outside: exactly 2 alpha at alpha = 0.001, still droppable.
  Vector col(1000, 0.0);
  col[0] = col[1] = 1.0;
  EXPECT_EQ(coverage_and_verdict(col, Interval{-0.5, 0.5}, 0.001).verdict, Verdict::Droppable);
  col[2] = 1.0;
  EXPECT_EQ(coverage_and_verdict(col, Interval{-0.5, 0.5}, 0.001).verdict, Verdict::Keep);
}

TEST(Coverage, PermutationInvariantAndMonotoneInWidth) {
  Rng rng(3);
  Vector col(500);
  for (auto& e : col) e = rng.normal();
  const double base = coverage_and_verdict(col, Interval{-1.0, 1.0}, 0.01).coverage;
  Vector shuffled = col;
  rng.shuffle(shuffled);
  EXPECT_EQ(coverage_and_verdict(shuffled, Interval{-1.0, 1.0}, 0.01).coverage, base);
  double prev = 0.0;
  for (int k = 0; k <= 40; ++k) {
    const double w = 0.1 * k;
    const double c = coverage_and_verdict(col, Interval{-w, w}, 0.01).coverage;
    EXPECT_GE(c, prev);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
    prev = c;
  }
}

TEST(SelectVariables, UsesControlColumnToSizeInterval) {
  Rng rng(4);
  Matrix attn(2000, 3);
  for (std::size_t i = 0; i < 2000; ++i) {
    attn(i, 0) = 0.5 + 0.1 * rng.normal();
    attn(i, 1) = 0.01 * rng.normal();
    attn(i, 2) = 0.05 * rng.normal();
  }
  const std::vector<std::string> names{"a", "b", "ctrl"};
  const SelectionReport r = select_variables(attn, names, 2, 0.001);
  EXPECT_EQ(r.at("a").verdict, Verdict::Keep);
  EXPECT_EQ(r.at("b").verdict, Verdict::Droppable);
  EXPECT_TRUE(r.at("ctrl").is_control);
  EXPECT_NEAR(r.interval.hi, -std_normal_quantile(0.0005) * r.at("ctrl").sd, 1e-15);
  std::ostringstream out;
  r.write_csv(out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
            "feature,mean,sd,coverage,verdict,control,alpha,margin,lower,upper");
  EXPECT_THROW(r.at("missing"), std::out_of_range);
}

TEST(Importance, Examples) {
  const ImportanceReport zero = variable_importance(Matrix(5, 2, 0.0), std::vector<std::string>{"a", "b"});
  EXPECT_EQ(zero.importance, (Vector{0.0, 0.0}));
  const ImportanceReport c =
      variable_importance(Matrix(4, 1, -0.5), std::vector<std::string>{"a"});
  EXPECT_DOUBLE_EQ(c.importance[0], 0.5);
}

TEST(Importance, OrderAndSignInvariance) {
  Rng rng(5);
  Matrix attn(300, 3);
  for (std::size_t i = 0; i < 300; ++i) {
    attn(i, 0) = 0.1 * rng.normal();
    attn(i, 1) = 1.0 * rng.normal();
    attn(i, 2) = 0.5 * rng.normal();
  }
  const std::vector<std::string> names{"a", "b", "c"};
  const ImportanceReport r = variable_importance(attn, names);
  EXPECT_EQ(r.order, (std::vector<std::size_t>{1, 2, 0}));
  for (double vi : r.importance) EXPECT_GE(vi, 0.0);
  Matrix flipped = attn;
  for (std::size_t i = 0; i < 300; ++i) flipped(i, 1) = -flipped(i, 1);
  EXPECT_EQ(variable_importance(flipped, names).importance, r.importance);
}

TEST(Importance, FlagsUnstandardizedColumns) {
  const bool standardized[] = {true, false};
  const ImportanceReport r = variable_importance(Matrix(3, 2, 1.0), std::vector<std::string>{"a", "b"},
                                                 std::span<const bool>(standardized, 2));
  EXPECT_EQ(r.unstandardized, (std::vector<std::string>{"b"}));
}

Vector uniform_x(std::size_t n, double lo, double hi, Rng& rng) {
  Vector x(n);
  for (auto& e : x) e = lo + (hi - lo) * rng.uniform();
  return x;
}

TEST(Smoother, ReproducesConstants) {
  Rng rng(6);
  const Vector x = uniform_x(500, -3.0, 2.0, rng);
  const SmoothCurve c = smooth_curve(x, Vector(500, 1.25));
  ASSERT_EQ(c.x.size(), 200u);
  for (double y : c.y) EXPECT_NEAR(y, 1.25, 1e-8);
}

TEST(Smoother, ReproducesLinesForAnyKnotCount) {
  Rng rng(7);
  Vector x(400);
  for (auto& e : x) e = rng.normal() * 2.0 + 1.0;
  Vector y(400);
  for (std::size_t i = 0; i < 400; ++i) y[i] = -0.7 + 1.9 * x[i];
  for (std::size_t knots : {4, 7, 20, 35}) {
    const SmoothCurve c = smooth_curve(x, y, knots);
    for (std::size_t g = 0; g < c.x.size(); ++g) {
      EXPECT_NEAR(c.y[g], -0.7 + 1.9 * c.x[g], 1e-6) << knots;
    }
  }
}

TEST(Smoother, RecoversSineFromNoisyData) {
  Rng rng(8);
  const std::size_t n = 5000;
  Vector x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal();
    y[i] = std::sin(2.0 * x[i]) + 0.1 * rng.normal();
  }
  const SmoothCurve c = smooth_curve(x, y);
  Vector sorted = x;
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted[static_cast<std::size_t>(0.05 * n)];
  const double hi = sorted[static_cast<std::size_t>(0.95 * n)];
  double worst = 0.0;
  for (std::size_t g = 0; g < c.x.size(); ++g) {
    if (c.x[g] < lo || c.x[g] > hi) continue;
    worst = std::max(worst, std::abs(c.y[g] - std::sin(2.0 * c.x[g])));
  }
  EXPECT_LT(worst, 0.05);
}

TEST(Smoother, GridIsStrictlyIncreasingOverDataRange) {
  Rng rng(9);
  const Vector x = uniform_x(100, 2.0, 5.0, rng);
  const SplineSmoother s(x);
  const Vector& grid = s.grid();
  EXPECT_EQ(grid.front(), *std::min_element(x.begin(), x.end()));
  EXPECT_EQ(grid.back(), *std::max_element(x.begin(), x.end()));
  for (std::size_t g = 1; g < grid.size(); ++g) EXPECT_GT(grid[g], grid[g - 1]);
}

TEST(Smoother, RejectsDegenerateInput) {
  EXPECT_THROW(smooth_curve(Vector(50, 1.0), Vector(50, 0.0)), std::invalid_argument);
  EXPECT_THROW(smooth_curve(Vector{1, 2, 3}, Vector{1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(smooth_curve(Vector(20, 1.0), Vector(19, 1.0)), std::invalid_argument);
}

TEST(Smoother, HandlesHeavilyTiedAbscissa) {
  // A binary-like column: two distinct values only.
  Vector x(200), y(200);
  for (std::size_t i = 0; i < 200; ++i) {
    x[i] = i % 2 ? 1.0 : -1.0;
    y[i] = 3.0 + 0.5 * x[i];
  }
  const SmoothCurve c = smooth_curve(x, y);
  EXPECT_NEAR(c.y.front(), 2.5, 1e-6);
  EXPECT_NEAR(c.y.back(), 3.5, 1e-6);
}

TEST(InteractionProfiles, ZeroTowerGivesZeroCurves) {
  const ModelSpec spec = ModelSpec::make(3, {4});
  Params p = zero_params(spec);
  for (auto& b : p.layers.back().bias) b = 0.4;
  Rng rng(10);
  Matrix x(300, 3);
  for (auto& e : x.data()) e = rng.normal();
  const InteractionProfile prof = interaction_profiles(p, spec, x, 1);
  EXPECT_EQ(prof.curves.rows(), 200u);
  EXPECT_EQ(prof.curves.cols(), 3u);
  EXPECT_LT(max_abs(prof.curves), 1e-12);
}

TEST(InteractionProfiles, LinearTowerGivesConstantCurves) {
  // beta(x) = W^T x, so d beta_j / d x_k = W(k, j) everywhere.
  const ModelSpec spec = ModelSpec::make(2, {});
  Params p = zero_params(spec);
  p.layers[0].weights = Matrix(2, 2, {0.1, 0.2, 0.3, 0.4});
  Rng rng(11);
  Matrix x(400, 2);
  for (auto& e : x.data()) e = rng.normal();
  const std::vector<std::string> names{"u", "w"};
  const InteractionProfile prof = interaction_profiles(p, spec, x, 0, names);
  for (std::size_t g = 0; g < prof.grid.size(); ++g) {
    EXPECT_NEAR(prof.curves(g, 0), 0.1, 1e-8);
    EXPECT_NEAR(prof.curves(g, 1), 0.3, 1e-8);
  }
  std::ostringstream out;
  prof.write_csv(out);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "x_u,d_u_d_u,d_u_d_w");
}

}  // namespace
}  // namespace lgn
