// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/jacobi.hpp"
#include "../support/orthogonal.hpp"
#include "loopscope/geometry.hpp"
#include "loopscope/spiral.hpp"

namespace loopscope::geometry {
namespace {

constexpr double kDeg = M_PI / 180.0;

IterateTrace trace_of(std::vector<Vec> states) {
  IterateTrace t;
  t.states = std::move(states);
  return t;
}

TEST(Deltas, HandConstruction) {
  const auto ds = deltas(trace_of({{0, 0}, {1, 0}, {1, 1}}));
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0], (Vec{1, 0}));
  EXPECT_EQ(ds[1], (Vec{0, 1}));
}

TEST(Deltas, ConstantTraceIsZero) {
  for (const auto& d : deltas(trace_of({{2, 3}, {2, 3}, {2, 3}}))) {
    EXPECT_EQ(norm(d), 0.0);
  }
}

TEST(Deltas, ShortTraceThrows) {
  EXPECT_THROW(deltas(trace_of({{1, 2}})), InsufficientDataError);
}

TEST(Cosines, ParallelOrthogonalAndDegenerate) {
  const std::vector<Vec> par = {{1, 0}, {2, 0}};
  EXPECT_DOUBLE_EQ(*step_cosines(par)[0], 1.0);
  const std::vector<Vec> orth = {{1, 0}, {0, 3}};
  EXPECT_DOUBLE_EQ(*step_cosines(orth)[0], 0.0);
  const std::vector<Vec> zero = {{1, 0}, {0, 0}};
  EXPECT_FALSE(step_cosines(zero)[0].has_value());
}

TEST(Accelerations, DirectEvaluation) {
  const std::vector<Vec> ds = {{1, 0}, {0, 1}};
  const auto a = accelerations(ds);
  EXPECT_NEAR(a.raw[0], std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(a.normalized[0], std::sqrt(2.0) / 2.0, 1e-8);
  const std::vector<Vec> same = {{1, 2}, {1, 2}, {1, 2}};
  const auto z = accelerations(same);
  for (double v : z.raw) EXPECT_EQ(v, 0.0);
  for (double v : z.normalized) EXPECT_EQ(v, 0.0);
}

TEST(StepStats, SpiralReproducesClosedForm) {
  const auto cfg = spiral::SpiralConfig::planar(0.9, 30 * kDeg);
  const auto s = step_stats(spiral::simulate(cfg, 80));
  const double sc = std::sqrt(1.0 - 2.0 * 0.9 * std::cos(30 * kDeg) + 0.81);
  EXPECT_NEAR(sc, 0.50115, 5e-6);
  for (std::size_t k = 0; k < s.step_norms.size(); ++k) {
    EXPECT_NEAR(s.step_norms[k], sc * std::pow(0.9, k), 1e-9);
  }
  for (std::size_t i = 0; i < s.cosines.size(); ++i) {
    EXPECT_NEAR(*s.cosines[i], std::cos(30 * kDeg), 1e-9);
    EXPECT_NEAR(s.accelerations[i], sc * sc * std::pow(0.9, i), 1e-9);
  }
}

TEST(StepStats, RotationInvarianceAndScaleCovariance) {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t d : {2u, 5u, 16u}) {
    std::vector<Vec> states(12, Vec(d));
    for (auto& s : states)
      for (auto& x : s) x = n(gen);
    const auto q = testing::random_orthogonal(d, gen);
    std::vector<Vec> rotated, scaled;
    const double c = 3.7;
    for (const auto& s : states) {
      rotated.push_back(testing::apply(q, s));
      Vec t = s;
      for (auto& x : t) x *= c;
      scaled.push_back(t);
    }
    const auto base = step_stats(trace_of(states), 0.0);
    const auto rot = step_stats(trace_of(rotated), 0.0);
    const auto sca = step_stats(trace_of(scaled), 0.0);
    for (std::size_t k = 0; k < base.step_norms.size(); ++k) {
      EXPECT_NEAR(rot.step_norms[k], base.step_norms[k], 1e-9);
      EXPECT_NEAR(sca.step_norms[k], c * base.step_norms[k], 1e-9);
      EXPECT_NEAR(sca.normalized_steps[k], base.normalized_steps[k], 1e-9);
    }
    for (std::size_t i = 0; i < base.cosines.size(); ++i) {
      EXPECT_NEAR(*rot.cosines[i], *base.cosines[i], 1e-9);
      EXPECT_NEAR(*sca.cosines[i], *base.cosines[i], 1e-9);
      EXPECT_NEAR(rot.accelerations[i], base.accelerations[i], 1e-9);
      EXPECT_NEAR(sca.accelerations[i], c * base.accelerations[i], 1e-9);
      EXPECT_NEAR(sca.normalized_accels[i], base.normalized_accels[i], 1e-9);
      EXPECT_GE(base.normalized_accels[i], 0.0);
      EXPECT_LE(base.normalized_accels[i], 2.0);
    }
  }
}

StepStats single_value(double v) {
  StepStats s;
  s.step_norms = {v};
  s.normalized_steps = {v};
  return s;
}

TEST(Aggregate, SingleTraceAndSymmetry) {
  const auto one = step_stats(trace_of({{0, 0}, {1, 0}, {1, 2}}));
  const auto agg = aggregate(std::vector<StepStats>{one});
  for (std::size_t k = 0; k < agg.step_norms.k.size(); ++k) {
    EXPECT_EQ(agg.step_norms.mean[k], one.step_norms[k]);
    EXPECT_EQ(agg.step_norms.stddev[k], 0.0);
    EXPECT_EQ(agg.step_norms.count[k], 1u);
  }
  const auto sym = aggregate(std::vector<StepStats>{single_value(2.5), single_value(-2.5)});
  EXPECT_EQ(sym.step_norms.mean[0], 0.0);
  EXPECT_DOUBLE_EQ(sym.step_norms.stddev[0], 2.5);
}

TEST(Aggregate, MonteCarloNormal) {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> n(5.0, 1.0);
  std::vector<StepStats> all;
  for (int i = 0; i < 100; ++i) all.push_back(single_value(n(gen)));
  const auto agg = aggregate(all);
  EXPECT_GE(agg.step_norms.mean[0], 4.7);
  EXPECT_LE(agg.step_norms.mean[0], 5.3);
  EXPECT_GE(agg.step_norms.stddev[0], 0.8);
  EXPECT_LE(agg.step_norms.stddev[0], 1.2);
  EXPECT_EQ(agg.step_norms.count[0], 100u);
}

TEST(Aggregate, UndefinedCosinesExcludedAndEmptyThrows) {
  // Second trace has a zero step, so its only cosine is undefined.
  const auto a = step_stats(trace_of({{0, 0}, {1, 0}, {1, 1}}));
  const auto b = step_stats(trace_of({{0, 0}, {1, 0}, {1, 0}}));
  const auto agg = aggregate(std::vector<StepStats>{a, b});
  ASSERT_EQ(agg.cosines.count.size(), 1u);
  EXPECT_EQ(agg.cosines.count[0], 1u);
  EXPECT_THROW(aggregate(std::vector<StepStats>{}), InsufficientDataError);
}

TEST(Pca, AxisPointsAndDegenerate) {
  const std::vector<Vec> pts = {{0, 0}, {1, 0}, {3, 0}};
  const auto p = fit_pca(pts);
  EXPECT_NEAR(p.components[0][0], 1.0, 1e-12);
  EXPECT_NEAR(p.explained_variance[1], 0.0, 1e-15);
  const std::vector<Vec> same = {{1, 1}, {1, 1}};
  EXPECT_THROW(fit_pca(same), DegenerateDataError);
  const std::vector<Vec> one = {{1, 1}};
  EXPECT_THROW(fit_pca(one), InsufficientDataError);
}

TEST(Pca, FivePointExampleMatchesJacobi) {
  const std::vector<Vec> pts = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {2, 1}};
  const auto p = fit_pca(pts);
  const auto ref = testing::jacobi_eigen(testing::covariance(pts));
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_NEAR(p.explained_variance[c], ref.values[c], 1e-9);
    EXPECT_NEAR(std::abs(dot(p.components[c], ref.vectors[c])), 1.0, 1e-9);
  }
}

TEST(Pca, RandomMatchesJacobiUpToDim8) {
  std::mt19937_64 gen(99);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t d = 2; d <= 8; ++d) {
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<Vec> pts(30, Vec(d));
      for (auto& p : pts)
        for (std::size_t i = 0; i < d; ++i) p[i] = n(gen) * static_cast<double>(d - i);
      const auto p = fit_pca(pts);
      const auto ref = testing::jacobi_eigen(testing::covariance(pts));
      EXPECT_GE(p.explained_variance[0], p.explained_variance[1]);
      EXPECT_NEAR(dot(p.components[0], p.components[1]), 0.0, 1e-9);
      for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_NEAR(norm(p.components[c]), 1.0, 1e-9);
        EXPECT_NEAR(p.explained_variance[c], ref.values[c], 1e-6);
        // Sign convention: align the oracle vector, then compare entries.
        Vec r = ref.vectors[c];
        std::size_t arg = 0;
        for (std::size_t i = 1; i < d; ++i)
          if (std::abs(r[i]) > std::abs(r[arg])) arg = i;
        if (r[arg] < 0)
          for (auto& x : r) x = -x;
        for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(p.components[c][i], r[i], 1e-6);
      }
    }
  }
}

TEST(Pca, ProjectionIdentities) {
  const std::vector<Vec> pts = {{0, 0, 1}, {1, 2, 0}, {2, 1, 3}, {4, 0, 1}};
  const auto p = fit_pca(pts);
  const auto m = project_point(p, p.mean);
  EXPECT_NEAR(m[0], 0.0, 1e-12);
  EXPECT_NEAR(m[1], 0.0, 1e-12);
  Vec shifted = p.mean;
  for (std::size_t i = 0; i < 3; ++i) shifted[i] += p.components[0][i];
  const auto one = project_point(p, shifted);
  EXPECT_NEAR(one[0], 1.0, 1e-12);
  EXPECT_NEAR(one[1], 0.0, 1e-12);

  const auto proj = project_trajectory(p, trace_of(pts));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      double ref = 0.0;
      for (std::size_t j = 0; j < 3; ++j) ref += (pts[i][j] - p.mean[j]) * p.components[c][j];
      EXPECT_NEAR(proj[i][c], ref, 1e-12);
    }
  }
  EXPECT_THROW(project_point(p, Vec{1, 2}), std::invalid_argument);
}

TEST(Pca, LosslessInTwoDimensions) {
  const std::vector<Vec> pts = {{0.3, 1.0}, {2.0, -1.0}, {1.5, 0.2}, {-0.7, 0.4}};
  const auto p = fit_pca(pts);
  for (const auto& x : pts) {
    const auto y = project_point(p, x);
    for (std::size_t i = 0; i < 2; ++i) {
      const double back = p.mean[i] + y[0] * p.components[0][i] + y[1] * p.components[1][i];
      EXPECT_NEAR(back, x[i], 1e-9);
    }
  }
}

}  // namespace
}  // namespace loopscope::geometry
