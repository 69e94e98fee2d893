// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Spiral conformance suite: simulated geometry against closed forms, and
// run_with_exit against exit steps predicted from the closed forms.

#include <algorithm>
#include <cmath>

#include "loopscope/harness.hpp"
#include "loopscope/rng.hpp"

namespace loopscope::harness {

namespace {

constexpr double kDeg = M_PI / 180.0;

struct LinearHead {
  std::vector<std::vector<double>> w;
  std::vector<double> b;

  std::vector<double> logits(std::span<const double> x) const {
    std::vector<double> z(b);
    for (std::size_t v = 0; v < w.size(); ++v)
      for (std::size_t i = 0; i < x.size(); ++i) z[v] += w[v][i] * x[i];
    return z;
  }
};

LinearHead make_head(std::size_t vocab, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  LinearHead h;
  h.w.assign(vocab, std::vector<double>(dim));
  for (auto& row : h.w)
    for (auto& x : row) x = rng.normal();
  h.b.assign(vocab, 0.0);
  for (auto& x : h.b) x = rng.normal(0.0, 0.1);
  return h;
}

std::size_t predicted_exit(const spiral::SpiralConfig& cfg, const exit::ExitConfig& ec,
                           const LinearHead& head) {
  const double s = spiral::step_scale(cfg);
  const double e = geometry::norm(cfg.e0);
  const std::size_t first = std::max<std::size_t>(ec.min_steps, 1);
  switch (ec.policy) {
    case exit::Policy::kStepNorm:
      for (std::size_t k = ec.min_steps; k < ec.k_max; ++k) {
        if (std::pow(cfg.rho, static_cast<double>(k)) * s * e < ec.tau) return k;
      }
      return ec.k_max;
    case exit::Policy::kAcceleration: {
      bool prev = false;
      for (std::size_t k = 1; k < ec.k_max; ++k) {
        const double a = std::pow(cfg.rho, static_cast<double>(k) - 1.0) * s * s * e;
        const bool small = a < ec.tau;
        if (k >= ec.min_steps && small && (prev || !ec.two_hit)) return k;
        prev = small;
      }
      return ec.k_max;
    }
    case exit::Policy::kKL: {
      auto prev = exit::DecodedDistribution::from_logits(
          head.logits(spiral::closed_form_state(cfg, first - 1)));
      for (std::size_t k = first; k < ec.k_max; ++k) {
        auto cur = exit::DecodedDistribution::from_logits(
            head.logits(spiral::closed_form_state(cfg, k)));
        if (exit::kl_divergence(cur, prev) < ec.tau) return k;
        prev = std::move(cur);
      }
      return ec.k_max;
    }
  }
  return ec.k_max;
}

}  // namespace

bool OracleReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const OracleCheck& c) { return c.pass; });
}

OracleReport run_oracle(const OracleConfig& oc, const std::vector<double>& tau_grid) {
  OracleReport report;
  const LinearHead head = make_head(oc.decoder_vocab, oc.dim, oc.decoder_seed);
  const exit::Decoder decoder = [&](std::span<const double> x) { return head.logits(x); };

  for (double rho : oc.rho) {
    for (double deg : oc.theta_deg) {
      const auto cfg = spiral::SpiralConfig::planar(rho, deg * kDeg, oc.dim);
      const auto stats = geometry::step_stats(spiral::simulate(cfg, oc.stats_steps));
      double err_norm = 0.0, err_cos = 0.0, err_acc = 0.0;
      bool defined_match = true;
      for (std::size_t k = 0; k < stats.step_norms.size(); ++k) {
        const auto cf = spiral::closed_form_stats(cfg, k);
        err_norm = std::max(err_norm, std::abs(stats.step_norms[k] - cf.norm));
        if (k == 0) continue;
        err_acc = std::max(err_acc, std::abs(stats.accelerations[k - 1] - *cf.acceleration));
        const auto& c = stats.cosines[k - 1];
        if (c.has_value() != cf.cosine.has_value()) {
          defined_match = false;
        } else if (c) {
          err_cos = std::max(err_cos, std::abs(*c - *cf.cosine));
        }
      }
      auto add = [&](const std::string& name, double observed, bool pass) {
        report.checks.push_back({name, rho, deg, "", 0.0, 0.0, observed, pass});
      };
      add("step_norm_closed_form", err_norm, err_norm <= oc.tolerance);
      add("cosine_closed_form", err_cos, defined_match && err_cos <= oc.tolerance);
      add("acceleration_closed_form", err_acc, err_acc <= oc.tolerance);

      const auto map = [&](std::span<const double> x) { return spiral::spiral_step(x, cfg); };
      std::map<std::pair<std::string, double>, std::size_t> observed;
      for (exit::Policy p : {exit::Policy::kStepNorm, exit::Policy::kKL,
                             exit::Policy::kAcceleration}) {
        for (double tau : tau_grid) {
          const auto ec = exit::ExitConfig::for_policy(p, tau, oc.k_max);
          const auto run = exit::run_with_exit(map, cfg.e0, ec,
                                               p == exit::Policy::kKL ? &decoder : nullptr);
          const std::size_t expect = predicted_exit(cfg, ec, head);
          const auto got = run.decision.steps_used;
          observed[{exit::policy_name(p), tau}] = got;
          report.checks.push_back({"exit_step", rho, deg, exit::policy_name(p), tau,
                                   static_cast<double>(expect), static_cast<double>(got),
                                   expect == got});
          const bool calls_ok = p == exit::Policy::kKL
                                    ? run.decoder_calls == run.decision.trigger_values.size()
                                    : run.decoder_calls == 0;
          report.checks.push_back({"decoder_calls", rho, deg, exit::policy_name(p), tau,
                                   0.0, static_cast<double>(run.decoder_calls), calls_ok});
        }
      }
      const double speed = spiral::step_scale(cfg);
      const std::size_t floor =
          exit::ExitConfig::for_policy(exit::Policy::kAcceleration, 1.0, oc.k_max).min_steps;
      for (double tau : tau_grid) {
        if (rho == 1.0 && tau < speed) {
          const auto got = observed[{"step_norm", tau}];
          report.checks.push_back({"pure_rotation_no_step_norm_exit", rho, deg, "step_norm",
                                   tau, static_cast<double>(oc.k_max),
                                   static_cast<double>(got), got == oc.k_max});
        }
        // Both policies sit on the min_steps floor when tau is coarse.
        if (rho < 1.0 && deg > 0.0 && speed < rho) {
          const auto acc = observed[{"acceleration", tau}];
          const auto sn = observed[{"step_norm", tau}];
          if (sn < oc.k_max) {
            report.checks.push_back({"acceleration_before_step_norm", rho, deg, "acceleration",
                                     tau, static_cast<double>(sn), static_cast<double>(acc),
                                     sn > floor ? acc < sn : acc <= sn});
          }
        }
      }
    }
  }
  return report;
}

}  // namespace loopscope::harness
