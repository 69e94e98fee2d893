// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "loopscope/exit.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "loopscope/recurrence.hpp"

namespace loopscope::exit {

namespace {

double l2(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

void check_dims(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("exit statistic inputs differ in dimension: " +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::string policy_name(Policy p) {
  switch (p) {
    case Policy::kStepNorm: return "step_norm";
    case Policy::kKL: return "kl";
    case Policy::kAcceleration: return "acceleration";
  }
  return "unknown";
}

Policy parse_policy(const std::string& name) {
  if (name == "step_norm") return Policy::kStepNorm;
  if (name == "kl") return Policy::kKL;
  if (name == "acceleration") return Policy::kAcceleration;
  throw ConfigError("unknown exit policy '" + name + "'");
}

std::string reason_name(ExitReason r) {
  return r == ExitReason::kThresholdMet ? "threshold_met" : "k_max_reached";
}

ExitConfig ExitConfig::for_policy(Policy p, double tau, std::size_t k_max) {
  ExitConfig c;
  c.policy = p;
  c.tau = tau;
  c.k_max = k_max;
  c.min_steps = p == Policy::kKL ? 1 : 2;
  return c;
}

double ExitConfig::tau_for(std::size_t group) const {
  const auto it = group_tau.find(group);
  return it == group_tau.end() ? tau : it->second;
}

void ExitConfig::validate() const {
  auto check_tau = [](double t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw ConfigError("exit threshold must be finite and > 0, got " + std::to_string(t));
    }
  };
  check_tau(tau);
  for (const auto& [g, t] : group_tau) check_tau(t);
  if (min_steps < 1) throw ConfigError("min_steps must be >= 1");
  if (k_max < min_steps) throw ConfigError("k_max must be >= min_steps");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

void to_json(nlohmann::json& j, const ExitConfig& c) {
  j = nlohmann::json{{"policy", policy_name(c.policy)},
                     {"tau", c.tau},
                     {"normalized", c.normalized},
                     {"two_hit", c.two_hit},
                     {"min_steps", c.min_steps},
                     {"k_max", c.k_max},
                     {"epsilon", c.epsilon}};
  if (!c.group_tau.empty()) {
    nlohmann::json g = nlohmann::json::object();
    for (const auto& [group, t] : c.group_tau) g[std::to_string(group)] = t;
    j["group_tau"] = g;
  }
}

void from_json(const nlohmann::json& j, ExitConfig& c) {
  const Policy p = parse_policy(j.value("policy", std::string("acceleration")));
  c = ExitConfig::for_policy(p, j.value("tau", 1e-3), j.value("k_max", std::size_t{16}));
  c.normalized = j.value("normalized", false);
  c.two_hit = j.value("two_hit", true);
  c.min_steps = j.value("min_steps", c.min_steps);
  c.epsilon = j.value("epsilon", c.epsilon);
  if (j.contains("group_tau")) {
    for (const auto& [key, value] : j.at("group_tau").items()) {
      c.group_tau[std::stoul(key)] = value.get<double>();
    }
  }
  c.validate();
}

DecodedDistribution DecodedDistribution::from_logits(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("empty logit vector");
  if (!all_finite(logits)) throw NumericError("non-finite logits");
  DecodedDistribution d;
  d.logits.assign(logits.begin(), logits.end());
  const double m = *std::max_element(logits.begin(), logits.end());
  double acc = 0.0;
  for (double z : logits) acc += std::exp(z - m);
  const double lse = m + std::log(acc);
  d.log_probs.reserve(logits.size());
  d.probs.reserve(logits.size());
  for (double z : logits) {
    d.log_probs.push_back(z - lse);
    d.probs.push_back(std::exp(z - lse));
  }
  return d;
}

void validate_simplex(std::span<const double> p, double tol) {
  if (p.empty()) throw std::invalid_argument("empty distribution");
  double sum = 0.0;
  for (double x : p) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument("distribution entries must be finite and > 0");
    }
    sum += x;
  }
  if (std::abs(sum - 1.0) > tol) {
    throw std::invalid_argument("distribution sums to " + std::to_string(sum));
  }
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_dims(p, q);
  validate_simplex(p);
  validate_simplex(q);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * std::log(p[i] / q[i]);
  // Rounding can leave near-identical pairs a few ulps below zero.
  return std::max(acc, 0.0);
}

double kl_divergence(const DecodedDistribution& p, const DecodedDistribution& q) {
  check_dims(p.probs, q.probs);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    acc += p.probs[i] * (p.log_probs[i] - q.log_probs[i]);
  }
  return std::max(acc, 0.0);
}

double step_norm_statistic(std::span<const double> delta, std::span<const double> x,
                           const ExitConfig& cfg) {
  check_dims(delta, x);
  const double n = l2(delta);
  return cfg.normalized ? n / (l2(x) + cfg.epsilon) : n;
}

double acceleration_statistic(std::span<const double> delta,
                              std::span<const double> delta_prev,
                              const ExitConfig& cfg) {
  check_dims(delta, delta_prev);
  double acc = 0.0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double d = delta[i] - delta_prev[i];
    acc += d * d;
  }
  const double a = std::sqrt(acc);
  return cfg.normalized ? a / (l2(delta) + l2(delta_prev) + cfg.epsilon) : a;
}

bool step_norm_trigger(std::span<const double> delta, std::span<const double> x,
                       const ExitConfig& cfg) {
  return step_norm_statistic(delta, x, cfg) < cfg.tau;
}

bool kl_trigger(std::span<const double> p, std::span<const double> p_prev,
                const ExitConfig& cfg) {
  return kl_divergence(p, p_prev) < cfg.tau;
}

bool acceleration_trigger(std::span<const double> delta,
                          std::span<const double> delta_prev,
                          AccelerationHistory& history, const ExitConfig& cfg) {
  const bool small = acceleration_statistic(delta, delta_prev, cfg) < cfg.tau;
  const bool fire = small && (!cfg.two_hit || history.prev_small);
  history.prev_small = small;
  return fire;
}

LoopNumericError::LoopNumericError(std::size_t step, const std::string& what)
    : NumericError("loop step " + std::to_string(step) + ": " + what), step_(step) {}

ExitTracker::ExitTracker(ExitConfig cfg, double tau) : cfg_(std::move(cfg)), tau_(tau) {
  cfg_.tau = tau_;
  cfg_.validate();
}

bool ExitTracker::observe(std::size_t k, std::span<const double> current,
                          std::span<const double> next,
                          const DecodedDistribution* current_decoded) {
  if (halted_) throw std::logic_error("observe after the trajectory halted");
  if (k != observed_) {
    throw std::logic_error("loop steps must be observed in order; expected " +
                           std::to_string(observed_) + ", got " + std::to_string(k));
  }
  check_dims(current, next);
  if (!all_finite(next)) throw LoopNumericError(k, "non-finite state");

  Vec delta(next.size());
  for (std::size_t i = 0; i < next.size(); ++i) delta[i] = next[i] - current[i];

  std::optional<double> value;
  bool fire = false;
  const bool eligible = k >= cfg_.min_steps;
  switch (cfg_.policy) {
    case Policy::kStepNorm: {
      value = step_norm_statistic(delta, current, cfg_);
      fire = eligible && *value < tau_;
      break;
    }
    case Policy::kAcceleration: {
      if (!delta_prev_.empty()) {
        value = acceleration_statistic(delta, delta_prev_, cfg_);
        const bool small = *value < tau_;
        fire = eligible && small && (!cfg_.two_hit || history_.prev_small);
        history_.prev_small = small;
      }
      break;
    }
    case Policy::kKL: {
      if (current_decoded == nullptr) {
        throw std::invalid_argument("KL exit needs the decoded distribution of x^(k)");
      }
      if (decoded_prev_) {
        value = kl_divergence(*current_decoded, *decoded_prev_);
        fire = eligible && *value < tau_;
      }
      decoded_prev_ = *current_decoded;
      break;
    }
  }
  values_.push_back(value);
  ++observed_;
  if (fire) {
    halted_ = true;
    exit_k_ = k;
    return true;
  }
  delta_prev_ = std::move(delta);
  return false;
}

ExitDecision ExitTracker::decision() const {
  ExitDecision d;
  d.exited_early = halted_;
  d.steps_used = halted_ ? exit_k_ : observed_;
  d.trigger_values = values_;
  d.reason = halted_ ? ExitReason::kThresholdMet : ExitReason::kKMaxReached;
  return d;
}

ExitRun run_with_exit(const BlockMap& f, Vec x0, const ExitConfig& cfg,
                      const Decoder* decoder) {
  cfg.validate();
  const bool kl = cfg.policy == Policy::kKL;
  if (kl != (decoder != nullptr && *decoder)) {
    throw std::invalid_argument("a decoder is required for, and only for, the KL policy");
  }
  if (!all_finite(x0)) throw LoopNumericError(0, "non-finite initial state");
  ExitTracker tracker(cfg, cfg.tau);
  ExitRun run;
  for (std::size_t k = 0; k < cfg.k_max; ++k) {
    Vec x1 = f(x0);
    if (x1.size() != x0.size()) {
      throw std::invalid_argument("block map changed the state dimension");
    }
    std::optional<DecodedDistribution> decoded;
    if (kl) {
      decoded = DecodedDistribution::from_logits((*decoder)(x0));
      ++run.decoder_calls;
    }
    if (tracker.observe(k, x0, x1, decoded ? &*decoded : nullptr)) break;
    x0 = std::move(x1);
  }
  run.state = std::move(x0);
  run.decision = tracker.decision();
  return run;
}

TokenExitController::TokenExitController(ExitConfig cfg, std::size_t n_groups,
                                         BatchDecoder decoder)
    : cfg_(std::move(cfg)), decoder_(std::move(decoder)), trackers_(n_groups) {
  cfg_.validate();
  if ((cfg_.policy == Policy::kKL) != static_cast<bool>(decoder_)) {
    throw std::invalid_argument("a decoder is required for, and only for, the KL policy");
  }
}

std::size_t TokenExitController::max_steps(std::size_t) const { return cfg_.k_max; }

void TokenExitController::begin_group(std::size_t group, std::size_t n_tokens) {
  auto& row = trackers_.at(group);
  row.clear();
  row.reserve(n_tokens);
  for (std::size_t t = 0; t < n_tokens; ++t) row.emplace_back(cfg_, cfg_.tau_for(group));
}

std::vector<unsigned char> TokenExitController::step(
    std::size_t group, std::size_t k, const Tensor& current, const Tensor& next,
    std::span<const unsigned char> active) {
  auto& row = trackers_.at(group);
  if (row.size() != current.rows() || active.size() != row.size()) {
    throw DimensionError("controller token count mismatch");
  }
  Tensor logits;
  if (cfg_.policy == Policy::kKL) {
    NoGradGuard guard;
    logits = decoder_(current);
    ++decoder_calls_;
  }
  std::vector<unsigned char> halt(row.size(), 0);
  for (std::size_t t = 0; t < row.size(); ++t) {
    if (!active[t]) continue;
    std::optional<DecodedDistribution> decoded;
    if (logits.defined()) decoded = DecodedDistribution::from_logits(logits.row(t));
    try {
      halt[t] = row[t].observe(k, current.row(t), next.row(t),
                               decoded ? &*decoded : nullptr);
    } catch (const LoopNumericError&) {
      throw LoopNumericError(k, "non-finite state at token " + std::to_string(t));
    }
  }
  return halt;
}

std::vector<std::vector<ExitDecision>> TokenExitController::decisions() const {
  std::vector<std::vector<ExitDecision>> out(trackers_.size());
  for (std::size_t g = 0; g < trackers_.size(); ++g) {
    for (const auto& tr : trackers_[g]) out[g].push_back(tr.decision());
  }
  return out;
}

}  // namespace loopscope::exit
