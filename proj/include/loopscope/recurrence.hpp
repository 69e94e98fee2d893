// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Block-group layout and loop-count schedules.

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "loopscope/rng.hpp"

namespace loopscope {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LoopKind { kSelf, kPaired };

// Contiguous layers [first_layer, last_layer] looped as one unit. A paired
// group steps all of its layers jointly; one application is one loop step.
struct Group {
  std::size_t first_layer = 0;
  std::size_t last_layer = 0;
  LoopKind kind = LoopKind::kSelf;

  std::size_t span() const { return last_layer - first_layer + 1; }
  bool contains(std::size_t layer) const {
    return layer >= first_layer && layer <= last_layer;
  }
  bool operator==(const Group&) const = default;
};

struct LoopSchedule {
  enum class Mode { kFixed, kSampled };

  Mode mode = Mode::kFixed;
  std::size_t fixed_count = 4;
  // Sampled mode: lambda ~ LogNormal(ln(rate) - sigma^2/2, sigma),
  // L = 1 + Poisson(lambda), so E[lambda] = rate and E[L] = rate + 1.
  double rate = 12.0;
  double sigma = 0.5;
  // Optional clamp on sampled counts; 0 leaves the tail uncapped.
  std::size_t max_count = 0;

  static LoopSchedule fixed(std::size_t count);
  static LoopSchedule sampled(double rate, double sigma = 0.5);

  void validate() const;
  double expected_count() const;
};

std::size_t sample_loop_count(const LoopSchedule& schedule, Rng& rng);

struct RecurrenceSpec {
  std::vector<Group> groups;
  LoopSchedule schedule;
  // Std of the Gaussian state injected at group entry.
  double noise_scale = 0.02;
  // Re-inject fresh noise before every loop step instead of only at entry.
  bool noise_every_step = false;
  std::uint64_t seed = 0;

  void validate(std::size_t n_layers) const;
  // Group index owning `layer`, or -1 when the layer runs single-pass.
  int group_of(std::size_t layer) const;
};

void to_json(nlohmann::json& j, const Group& g);
void from_json(const nlohmann::json& j, Group& g);
void to_json(nlohmann::json& j, const LoopSchedule& s);
void from_json(const nlohmann::json& j, LoopSchedule& s);
void to_json(nlohmann::json& j, const RecurrenceSpec& s);
void from_json(const nlohmann::json& j, RecurrenceSpec& s);

RecurrenceSpec load_recurrence_spec(const std::string& path);

}  // namespace loopscope
