// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "loopscope/geometry.hpp"

namespace loopscope::geometry {

namespace {

void check_same_dim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("vector dimensions differ: " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
}

// Accumulates per-k samples; mean and population std on finish.
class CurveBuilder {
 public:
  void add(std::size_t k, double v) { samples_[k].push_back(v); }

  AggregateCurve finish() const {
    AggregateCurve c;
    for (const auto& [k, vs] : samples_) {
      double m = 0.0;
      for (double v : vs) m += v;
      m /= static_cast<double>(vs.size());
      double var = 0.0;
      for (double v : vs) var += (v - m) * (v - m);
      var /= static_cast<double>(vs.size());
      c.k.push_back(k);
      c.mean.push_back(m);
      c.stddev.push_back(std::sqrt(var));
      c.count.push_back(vs.size());
    }
    return c;
  }

 private:
  std::map<std::size_t, std::vector<double>> samples_;
};

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

Vec difference(std::span<const double> a, std::span<const double> b) {
  check_same_dim(a, b);
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

std::vector<Vec> deltas(const IterateTrace& trace) {
  if (trace.states.size() < 2) {
    throw InsufficientDataError("trace needs at least 2 states, has " +
                                std::to_string(trace.states.size()));
  }
  std::vector<Vec> out;
  out.reserve(trace.states.size() - 1);
  for (std::size_t k = 0; k + 1 < trace.states.size(); ++k) {
    out.push_back(difference(trace.states[k + 1], trace.states[k]));
  }
  return out;
}

std::vector<std::optional<double>> step_cosines(std::span<const Vec> ds) {
  std::vector<std::optional<double>> out;
  for (std::size_t k = 1; k < ds.size(); ++k) {
    const double na = norm(ds[k]);
    const double nb = norm(ds[k - 1]);
    if (na < kCosineEps || nb < kCosineEps) {
      out.emplace_back(std::nullopt);
      continue;
    }
    out.emplace_back(std::clamp(dot(ds[k], ds[k - 1]) / (na * nb), -1.0, 1.0));
  }
  return out;
}

Accelerations accelerations(std::span<const Vec> ds, double eps) {
  Accelerations out;
  for (std::size_t k = 1; k < ds.size(); ++k) {
    const double a = norm(difference(ds[k], ds[k - 1]));
    out.raw.push_back(a);
    out.normalized.push_back(a / (norm(ds[k]) + norm(ds[k - 1]) + eps));
  }
  return out;
}

StepStats step_stats(const IterateTrace& trace, double eps) {
  const auto ds = deltas(trace);
  StepStats s;
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const double n = norm(ds[k]);
    s.step_norms.push_back(n);
    s.normalized_steps.push_back(n / (norm(trace.states[k]) + eps));
  }
  s.cosines = step_cosines(ds);
  auto acc = accelerations(ds, eps);
  s.accelerations = std::move(acc.raw);
  s.normalized_accels = std::move(acc.normalized);
  return s;
}

AggregateStats aggregate(std::span<const StepStats> stats) {
  if (stats.empty()) throw InsufficientDataError("aggregate of no traces");
  CurveBuilder norms, norm_steps, cosines, accels, norm_accels;
  for (const auto& s : stats) {
    for (std::size_t k = 0; k < s.step_norms.size(); ++k) {
      norms.add(k, s.step_norms[k]);
      norm_steps.add(k, s.normalized_steps[k]);
    }
    for (std::size_t i = 0; i < s.cosines.size(); ++i) {
      if (s.cosines[i]) cosines.add(i + 1, *s.cosines[i]);
    }
    for (std::size_t i = 0; i < s.accelerations.size(); ++i) {
      accels.add(i + 1, s.accelerations[i]);
      norm_accels.add(i + 1, s.normalized_accels[i]);
    }
  }
  return {norms.finish(), norm_steps.finish(), cosines.finish(),
          accels.finish(), norm_accels.finish()};
}

}  // namespace loopscope::geometry
