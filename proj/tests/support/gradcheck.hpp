// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference oracle shared by the unit and acceptance suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "loopscope/tensor.hpp"

namespace loopscope::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<param>[index]" of the worst entry
};

// Gradients below kGradFloor are compared against the floor rather than
// their own magnitude; the central difference itself carries ~1e-10
// absolute noise at h = 1e-5.
inline constexpr double kGradFloor = 1e-5;

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kGradFloor});
}

// `loss_fn` must rebuild the loss from the current parameter values.
inline GradCheckResult grad_check(
    const std::function<Tensor()>& loss_fn,
    std::vector<std::pair<std::string, Tensor>> params, double h = 1e-5) {
  for (auto& [name, p] : params) p.zero_grad();
  Tensor loss = loss_fn();
  backward(loss);
  GradCheckResult result;
  NoGradGuard no_grad;
  for (auto& [name, p] : params) {
    const std::vector<double> analytic = p.grad();
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss_fn().item();
      values[i] = saved - h;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(analytic[i], numeric);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace loopscope::testing
