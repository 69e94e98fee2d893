// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Iterate-only loop geometry: step deltas, their norms, consecutive-step
// cosines, accelerations, token-averaged curves and 2-D PCA projections.
//
// Indexing: for a trace x^(0..L) there are L deltas, Delta^(k) = x^(k+1) -
// x^(k), k = 0..L-1. Cosines and accelerations pair Delta^(k) with
// Delta^(k-1) and exist for k = 1..L-1; entry i of those vectors is k = i+1.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace loopscope::geometry {

using Vec = std::vector<double>;

inline constexpr double kCosineEps = 1e-12;
inline constexpr double kDefaultEps = 1e-8;

class InsufficientDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct IterateTrace {
  std::size_t group = 0;
  std::size_t token = 0;
  std::vector<Vec> states;
};

double norm(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);
Vec difference(std::span<const double> a, std::span<const double> b);  // a - b

std::vector<Vec> deltas(const IterateTrace& trace);

// Undefined (nullopt) where either delta has norm < kCosineEps.
std::vector<std::optional<double>> step_cosines(std::span<const Vec> deltas);

struct Accelerations {
  std::vector<double> raw;         // ||D(k) - D(k-1)||
  std::vector<double> normalized;  // raw / (||D(k)|| + ||D(k-1)|| + eps)
};
Accelerations accelerations(std::span<const Vec> deltas, double eps = kDefaultEps);

struct StepStats {
  std::vector<double> step_norms;        // k = 0..L-1
  std::vector<double> normalized_steps;  // ||D(k)|| / (||x(k)|| + eps)
  std::vector<std::optional<double>> cosines;  // k = 1..L-1
  std::vector<double> accelerations;           // k = 1..L-1
  std::vector<double> normalized_accels;       // k = 1..L-1
};

StepStats step_stats(const IterateTrace& trace, double eps = kDefaultEps);

struct AggregateCurve {
  std::vector<std::size_t> k;
  std::vector<double> mean;
  std::vector<double> stddev;  // population
  std::vector<std::size_t> count;
};

struct AggregateStats {
  AggregateCurve step_norms;
  AggregateCurve normalized_steps;
  AggregateCurve cosines;
  AggregateCurve accelerations;
  AggregateCurve normalized_accels;
};

// Per-k mean and 1-sigma across traces; traces may differ in length and
// undefined cosines are skipped.
AggregateStats aggregate(std::span<const StepStats> stats);

struct PCAProjection {
  Vec mean;
  std::array<Vec, 2> components;
  std::array<double, 2> explained_variance{};
  std::size_t dim() const { return mean.size(); }
};

// Top-2 principal directions of the (population) covariance. Each
// component's largest-magnitude coordinate is made positive.
PCAProjection fit_pca(std::span<const Vec> points);

std::array<double, 2> project_point(const PCAProjection& proj,
                                    std::span<const double> point);
std::vector<std::array<double, 2>> project_trajectory(const PCAProjection& proj,
                                                      const IterateTrace& trace);

}  // namespace loopscope::geometry
