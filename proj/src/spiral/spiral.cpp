// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "loopscope/spiral.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace loopscope::spiral {

namespace {

Vec basis(std::size_t dim, std::size_t i) {
  Vec v(dim, 0.0);
  v[i] = 1.0;
  return v;
}

// Rotation by `angle` in the (u, v) plane, identity on its complement.
Vec rotate(std::span<const double> x, const SpiralConfig& cfg, double angle) {
  const double pu = geometry::dot(x, cfg.plane_u);
  const double pv = geometry::dot(x, cfg.plane_v);
  const double c = std::cos(angle), s = std::sin(angle);
  Vec out(x.begin(), x.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += (c * pu - s * pv - pu) * cfg.plane_u[i] +
              (s * pu + c * pv - pv) * cfg.plane_v[i];
  }
  return out;
}

}  // namespace

SpiralConfig SpiralConfig::planar(double rho, double theta_radians, std::size_t dim) {
  SpiralConfig c;
  c.dim = dim;
  c.rho = rho;
  c.theta = theta_radians;
  return c.resolved();
}

SpiralConfig SpiralConfig::resolved() const {
  if (dim < 2) throw std::invalid_argument("spiral dimension must be >= 2");
  if (!(rho > 0.0) || rho > 1.0) {
    throw std::invalid_argument("spiral contraction must lie in (0, 1]");
  }
  SpiralConfig c = *this;
  if (c.center.empty()) c.center.assign(dim, 0.0);
  if (c.e0.empty()) c.e0 = basis(dim, 0);
  if (c.plane_u.empty()) c.plane_u = basis(dim, 0);
  if (c.plane_v.empty()) c.plane_v = basis(dim, 1);
  for (const Vec* v : {&c.center, &c.e0, &c.plane_u, &c.plane_v}) {
    if (v->size() != dim) {
      throw std::invalid_argument("spiral vectors must have dimension " +
                                  std::to_string(dim));
    }
  }
  const double uu = geometry::dot(c.plane_u, c.plane_u);
  const double vv = geometry::dot(c.plane_v, c.plane_v);
  const double uv = geometry::dot(c.plane_u, c.plane_v);
  if (std::abs(uu - 1.0) > 1e-12 || std::abs(vv - 1.0) > 1e-12 ||
      std::abs(uv) > 1e-12) {
    throw std::invalid_argument("rotation plane basis must be orthonormal");
  }
  return c;
}

void to_json(nlohmann::json& j, const SpiralConfig& c) {
  j = nlohmann::json{{"dim", c.dim},       {"rho", c.rho},
                     {"theta", c.theta},   {"center", c.center},
                     {"e0", c.e0},         {"plane_u", c.plane_u},
                     {"plane_v", c.plane_v}};
}

void from_json(const nlohmann::json& j, SpiralConfig& c) {
  c = SpiralConfig{};
  c.dim = j.value("dim", std::size_t{2});
  c.rho = j.at("rho").get<double>();
  if (j.contains("theta_deg")) {
    c.theta = j.at("theta_deg").get<double>() * M_PI / 180.0;
  } else {
    c.theta = j.value("theta", 0.0);
  }
  c.center = j.value("center", Vec{});
  c.e0 = j.value("e0", Vec{});
  c.plane_u = j.value("plane_u", Vec{});
  c.plane_v = j.value("plane_v", Vec{});
}

Vec spiral_step(std::span<const double> x, const SpiralConfig& raw) {
  const SpiralConfig cfg = raw.resolved();
  if (x.size() != cfg.dim) throw std::invalid_argument("state dimension mismatch");
  const Vec offset = geometry::difference(x, cfg.center);
  Vec r = rotate(offset, cfg, cfg.theta);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = cfg.center[i] + cfg.rho * r[i];
  return r;
}

double step_scale(const SpiralConfig& cfg) {
  return std::sqrt(1.0 - 2.0 * cfg.rho * std::cos(cfg.theta) + cfg.rho * cfg.rho);
}

ClosedFormStats closed_form_stats(const SpiralConfig& raw, std::size_t k) {
  const SpiralConfig cfg = raw.resolved();
  const double s = step_scale(cfg);
  const double e = geometry::norm(cfg.e0);
  const auto kd = static_cast<double>(k);
  ClosedFormStats out;
  out.norm = std::pow(cfg.rho, kd) * s * e;
  if (k >= 1) {
    out.acceleration = std::pow(cfg.rho, kd - 1.0) * s * s * e;
    if (s * e > 0.0) out.cosine = std::cos(cfg.theta);
  }
  return out;
}

Vec closed_form_state(const SpiralConfig& raw, std::size_t k) {
  const SpiralConfig cfg = raw.resolved();
  const auto kd = static_cast<double>(k);
  Vec r = rotate(cfg.e0, cfg, kd * cfg.theta);
  const double scale = std::pow(cfg.rho, kd);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = cfg.center[i] + scale * r[i];
  return r;
}

geometry::IterateTrace simulate(const SpiralConfig& raw, std::size_t steps) {
  const SpiralConfig cfg = raw.resolved();
  geometry::IterateTrace trace;
  Vec x = cfg.center;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += cfg.e0[i];
  trace.states.push_back(x);
  for (std::size_t k = 0; k < steps; ++k) {
    x = spiral_step(x, cfg);
    trace.states.push_back(x);
  }
  return trace;
}

TwoScaleTrace generate_two_scale_trace(std::span<const SpiralConfig> spirals,
                                       const DriftConfig& drift,
                                       std::size_t steps_per_segment) {
  if (spirals.empty()) throw std::invalid_argument("need at least one spiral segment");
  if (spirals.size() != drift.block_jumps.size() + 1) {
    throw std::invalid_argument("segment count must equal jump count + 1");
  }
  if (steps_per_segment == 0) throw std::invalid_argument("segments need >= 1 step");
  TwoScaleTrace out;
  for (std::size_t seg = 0; seg < spirals.size(); ++seg) {
    SpiralConfig cfg = spirals[seg].resolved();
    if (seg > 0) {
      const Vec& jump = drift.block_jumps[seg - 1];
      if (jump.size() != cfg.dim) throw std::invalid_argument("jump dimension mismatch");
      const auto& states = out.trace.states;
      const double last_step =
          geometry::norm(geometry::difference(states.back(), states[states.size() - 2]));
      if (!(geometry::norm(jump) > last_step)) {
        throw std::invalid_argument("jump " + std::to_string(seg - 1) +
                                    " must exceed the preceding segment's final step");
      }
      Vec next = states.back();
      for (std::size_t i = 0; i < next.size(); ++i) next[i] += jump[i];
      cfg.e0 = geometry::difference(next, cfg.center);
    }
    const auto seg_trace = simulate(cfg, steps_per_segment);
    for (std::size_t k = 0; k < seg_trace.states.size(); ++k) {
      out.trace.states.push_back(seg_trace.states[k]);
      out.labels.push_back({seg, k});
    }
  }
  return out;
}

}  // namespace loopscope::spiral
