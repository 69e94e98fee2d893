// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Early-exit rules for looped blocks: step-norm, KL between decoded
// distributions, and the two-hit acceleration latch.
//
// Loop skeleton shared by all policies (x0 = x^(k), x1 = f(x0)):
//
//   k = 0, prev_small = false
//   while k < k_max:
//     x1 = f(x0); delta = x1 - x0
//     if policy triggers at k: break
//     delta_prev = delta; x0 = x1; k += 1
//   return x0, k
//
// Acceleration at step k needs delta_prev, so it is first evaluated at
// k = 1; prev_small is refreshed on every evaluated step. KL compares the
// decode of x^(k) against the decode of x^(k-1).

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "loopscope/model.hpp"
#include "loopscope/tensor.hpp"

namespace loopscope::exit {

using Vec = std::vector<double>;

enum class Policy { kStepNorm, kKL, kAcceleration };

std::string policy_name(Policy p);  // "step_norm", "kl", "acceleration"
Policy parse_policy(const std::string& name);

struct ExitConfig {
  Policy policy = Policy::kAcceleration;
  double tau = 1e-3;
  bool normalized = false;
  bool two_hit = true;
  std::size_t min_steps = 2;
  std::size_t k_max = 16;
  double epsilon = 1e-8;
  // Per-group thresholds; groups not listed use `tau`.
  std::map<std::size_t, double> group_tau;

  static ExitConfig for_policy(Policy p, double tau, std::size_t k_max);
  double tau_for(std::size_t group) const;
  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const ExitConfig& c);
// Missing keys fall back to the policy's defaults (min_steps 1 for KL).
void from_json(const nlohmann::json& j, ExitConfig& c);

enum class ExitReason { kThresholdMet, kKMaxReached };
std::string reason_name(ExitReason r);  // "threshold_met", "k_max_reached"

struct ExitDecision {
  bool exited_early = false;
  std::size_t steps_used = 0;
  // One entry per observed step; nullopt where the statistic is undefined
  // (acceleration and KL at k = 0).
  std::vector<std::optional<double>> trigger_values;
  ExitReason reason = ExitReason::kKMaxReached;
};

struct DecodedDistribution {
  Vec logits;
  Vec probs;
  Vec log_probs;

  static DecodedDistribution from_logits(std::span<const double> logits);
};

// Throws std::invalid_argument unless p is a strictly positive vector
// summing to 1 within `tol`.
void validate_simplex(std::span<const double> p, double tol = 1e-9);

// KL(p || q) in nats, p and q validated as simplices.
double kl_divergence(std::span<const double> p, std::span<const double> q);
// Same quantity from log-probabilities; no validation.
double kl_divergence(const DecodedDistribution& p, const DecodedDistribution& q);

double step_norm_statistic(std::span<const double> delta, std::span<const double> x,
                           const ExitConfig& cfg);
double acceleration_statistic(std::span<const double> delta,
                              std::span<const double> delta_prev,
                              const ExitConfig& cfg);

bool step_norm_trigger(std::span<const double> delta, std::span<const double> x,
                       const ExitConfig& cfg);
bool kl_trigger(std::span<const double> p, std::span<const double> p_prev,
                const ExitConfig& cfg);

struct AccelerationHistory {
  bool prev_small = false;
};
// Updates history.prev_small with this step's comparison.
bool acceleration_trigger(std::span<const double> delta,
                          std::span<const double> delta_prev,
                          AccelerationHistory& history, const ExitConfig& cfg);

class LoopNumericError : public NumericError {
 public:
  LoopNumericError(std::size_t step, const std::string& what);
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

// Per-trajectory state machine for the loop skeleton above. The caller
// supplies x^(k), f(x^(k)) and, for KL, the decode of x^(k).
class ExitTracker {
 public:
  ExitTracker(ExitConfig cfg, double tau);

  // Returns true when the loop should break at step k, keeping x^(k).
  bool observe(std::size_t k, std::span<const double> current,
               std::span<const double> next,
               const DecodedDistribution* current_decoded = nullptr);

  bool halted() const { return halted_; }
  bool needs_decoding() const { return cfg_.policy == Policy::kKL; }
  // steps_used = exit k when halted, else the number of observed steps.
  ExitDecision decision() const;

 private:
  ExitConfig cfg_;
  double tau_;
  bool halted_ = false;
  std::size_t observed_ = 0;
  std::size_t exit_k_ = 0;
  Vec delta_prev_;
  std::optional<DecodedDistribution> decoded_prev_;
  AccelerationHistory history_;
  std::vector<std::optional<double>> values_;
};

using BlockMap = std::function<Vec(std::span<const double>)>;
using Decoder = std::function<Vec(std::span<const double>)>;  // logits

struct ExitRun {
  Vec state;
  ExitDecision decision;
  std::size_t decoder_calls = 0;
};

// Requires a decoder iff the policy is KL. Throws LoopNumericError when
// f produces a non-finite state.
ExitRun run_with_exit(const BlockMap& f, Vec x0, const ExitConfig& cfg,
                      const Decoder* decoder = nullptr);

// Per-token halting inside RecurrentModel::forward. Each token of each
// group gets its own tracker; halted tokens are frozen by the model.
class TokenExitController final : public LoopController {
 public:
  using BatchDecoder = std::function<Tensor(const Tensor&)>;  // [T x d] -> [T x V]

  TokenExitController(ExitConfig cfg, std::size_t n_groups,
                      BatchDecoder decoder = nullptr);

  std::size_t max_steps(std::size_t group) const override;
  void begin_group(std::size_t group, std::size_t n_tokens) override;
  std::vector<unsigned char> step(std::size_t group, std::size_t k,
                                  const Tensor& current, const Tensor& next,
                                  std::span<const unsigned char> active) override;

  // Decisions for the most recent forward call, [group][token].
  std::vector<std::vector<ExitDecision>> decisions() const;
  std::size_t decoder_calls() const { return decoder_calls_; }

 private:
  ExitConfig cfg_;
  BatchDecoder decoder_;
  std::vector<std::vector<ExitTracker>> trackers_;
  std::size_t decoder_calls_ = 0;
};

}  // namespace loopscope::exit
