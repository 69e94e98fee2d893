// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Contractive-rotation ("spiral") dynamics with closed-form geometry.
//
//   x' = c + rho * R(theta) (x - c),  R rotating the (u, v) plane
//
// With e_k = x^(k) - c = rho^k R^k e0, each delta is
//   Delta^(k) = rho^k R^k (rho R - I) e0.
// In the rotation plane rho R - I is itself a scaled rotation with scale
//   s = |rho e^{i theta} - 1| = sqrt(1 - 2 rho cos(theta) + rho^2),
// so ||Delta^(k)|| = rho^k s ||e0|| and consecutive deltas differ by the
// fixed rotation rho R, giving cos(Delta^(k), Delta^(k-1)) = cos(theta).
// Applying the same argument once more,
//   Delta^(k) - Delta^(k-1) = rho^(k-1) R^(k-1) (rho R - I)^2 e0,
// hence a^(k) = rho^(k-1) s^2 ||e0||. All three hold when e0 lies in the
// rotation plane.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "loopscope/geometry.hpp"

namespace loopscope::spiral {

using geometry::Vec;

struct SpiralConfig {
  std::size_t dim = 2;
  double rho = 0.9;
  double theta = 0.0;  // radians
  Vec center;          // empty: origin
  Vec e0;              // empty: first basis vector
  Vec plane_u;         // empty: first basis vector
  Vec plane_v;         // empty: second basis vector

  // Fills defaulted vectors for `dim`; throws ConfigError-like
  // std::invalid_argument on inconsistent input.
  SpiralConfig resolved() const;
  static SpiralConfig planar(double rho, double theta_radians, std::size_t dim = 2);
};

void to_json(nlohmann::json& j, const SpiralConfig& c);
void from_json(const nlohmann::json& j, SpiralConfig& c);

Vec spiral_step(std::span<const double> x, const SpiralConfig& cfg);

double step_scale(const SpiralConfig& cfg);

struct ClosedFormStats {
  double norm = 0.0;                // ||Delta^(k)||
  std::optional<double> cosine;     // k >= 1; undefined when the map is static
  std::optional<double> acceleration;  // k >= 1
};

ClosedFormStats closed_form_stats(const SpiralConfig& cfg, std::size_t k);
// c + rho^k R(k theta) e0, evaluated directly.
Vec closed_form_state(const SpiralConfig& cfg, std::size_t k);

// States x^(0) .. x^(steps) by repeated spiral_step.
geometry::IterateTrace simulate(const SpiralConfig& cfg, std::size_t steps);

struct DriftConfig {
  std::vector<Vec> block_jumps;
};

struct StageLabel {
  std::size_t segment = 0;
  std::size_t k = 0;
};

struct TwoScaleTrace {
  geometry::IterateTrace trace;
  std::vector<StageLabel> labels;  // one per state
};

// Spiral segments joined by drift jumps. Segment i+1 starts at the last
// state of segment i plus jump i and spirals around its own center.
TwoScaleTrace generate_two_scale_trace(std::span<const SpiralConfig> spirals,
                                       const DriftConfig& drift,
                                       std::size_t steps_per_segment);

}  // namespace loopscope::spiral
