// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "loopscope/geometry.hpp"

namespace loopscope::geometry {

PCAProjection fit_pca(std::span<const Vec> points) {
  if (points.size() < 2) {
    throw InsufficientDataError("PCA needs at least 2 points");
  }
  const std::size_t d = points.front().size();
  if (d < 2) throw std::invalid_argument("PCA to 2-D needs dimension >= 2");
  for (const auto& p : points) {
    if (p.size() != d) throw std::invalid_argument("PCA points differ in dimension");
  }
  const bool all_same = std::all_of(points.begin(), points.end(),
                                    [&](const Vec& p) { return p == points.front(); });
  if (all_same) throw DegenerateDataError("all PCA points are identical");

  const auto n = static_cast<double>(points.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (const auto& p : points) {
    mean += Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(d));
  }
  mean /= n;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                              static_cast<Eigen::Index>(d));
  for (const auto& p : points) {
    const Eigen::VectorXd c =
        Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(d)) - mean;
    cov.noalias() += c * c.transpose();
  }
  cov /= n;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw DegenerateDataError("covariance eigendecomposition failed");
  }
  PCAProjection proj;
  proj.mean.assign(mean.data(), mean.data() + d);
  // Eigen sorts eigenvalues ascending.
  for (std::size_t c = 0; c < 2; ++c) {
    const auto col = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    proj.components[c].assign(v.data(), v.data() + d);
    proj.explained_variance[c] = std::max(0.0, solver.eigenvalues()(col));
  }
  return proj;
}

std::array<double, 2> project_point(const PCAProjection& proj,
                                    std::span<const double> point) {
  if (point.size() != proj.dim()) {
    throw std::invalid_argument("projection dimension " + std::to_string(proj.dim()) +
                                " vs point dimension " + std::to_string(point.size()));
  }
  const Vec centered = difference(point, proj.mean);
  return {dot(centered, proj.components[0]), dot(centered, proj.components[1])};
}

std::vector<std::array<double, 2>> project_trajectory(const PCAProjection& proj,
                                                      const IterateTrace& trace) {
  std::vector<std::array<double, 2>> out;
  out.reserve(trace.states.size());
  for (const auto& s : trace.states) out.push_back(project_point(proj, s));
  return out;
}

}  // namespace loopscope::geometry
