// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "loopscope/recurrence.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace loopscope {

LoopSchedule LoopSchedule::fixed(std::size_t count) {
  LoopSchedule s;
  s.mode = Mode::kFixed;
  s.fixed_count = count;
  return s;
}

LoopSchedule LoopSchedule::sampled(double rate, double sigma) {
  LoopSchedule s;
  s.mode = Mode::kSampled;
  s.rate = rate;
  s.sigma = sigma;
  return s;
}

void LoopSchedule::validate() const {
  if (mode == Mode::kFixed) {
    if (fixed_count < 1) throw ConfigError("fixed loop count must be >= 1");
  } else {
    if (!(rate > 0.0)) throw ConfigError("sampled schedule needs rate > 0");
    if (!(sigma > 0.0)) throw ConfigError("sampled schedule needs sigma > 0");
  }
}

double LoopSchedule::expected_count() const {
  return mode == Mode::kFixed ? static_cast<double>(fixed_count) : rate + 1.0;
}

std::size_t sample_loop_count(const LoopSchedule& schedule, Rng& rng) {
  if (schedule.mode == LoopSchedule::Mode::kFixed) return schedule.fixed_count;
  const double mu = std::log(schedule.rate) - 0.5 * schedule.sigma * schedule.sigma;
  const double lambda = rng.lognormal(mu, schedule.sigma);
  std::size_t count = 1 + static_cast<std::size_t>(rng.poisson(lambda));
  if (schedule.max_count > 0) count = std::min(count, schedule.max_count);
  return count;
}

void RecurrenceSpec::validate(std::size_t n_layers) const {
  schedule.validate();
  if (noise_scale < 0.0) throw ConfigError("noise_scale must be >= 0");
  std::size_t next_free = 0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const Group& g = groups[i];
    if (g.last_layer < g.first_layer) {
      throw ConfigError("group " + std::to_string(i) + " has an empty span");
    }
    if (g.last_layer >= n_layers) {
      throw ConfigError("group " + std::to_string(i) + " exceeds layer count " +
                        std::to_string(n_layers));
    }
    if (g.first_layer < next_free) {
      throw ConfigError("group spans must be disjoint and ordered");
    }
    if (g.kind == LoopKind::kSelf && g.span() != 1) {
      throw ConfigError("self-loop group " + std::to_string(i) +
                        " must span exactly one layer");
    }
    if (g.kind == LoopKind::kPaired && g.span() < 2) {
      throw ConfigError("paired-loop group " + std::to_string(i) +
                        " must span at least two layers");
    }
    next_free = g.last_layer + 1;
  }
}

int RecurrenceSpec::group_of(std::size_t layer) const {
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].contains(layer)) return static_cast<int>(i);
  }
  return -1;
}

void to_json(nlohmann::json& j, const Group& g) {
  j = nlohmann::json{{"layers", {g.first_layer, g.last_layer}},
                     {"kind", g.kind == LoopKind::kSelf ? "self" : "paired"}};
}

void from_json(const nlohmann::json& j, Group& g) {
  const auto& layers = j.at("layers");
  if (!layers.is_array() || layers.size() != 2) {
    throw ConfigError("group.layers must be [first, last]");
  }
  g.first_layer = layers[0].get<std::size_t>();
  g.last_layer = layers[1].get<std::size_t>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "self") {
    g.kind = LoopKind::kSelf;
  } else if (kind == "paired") {
    g.kind = LoopKind::kPaired;
  } else {
    throw ConfigError("unknown group kind '" + kind + "'");
  }
}

void to_json(nlohmann::json& j, const LoopSchedule& s) {
  if (s.mode == LoopSchedule::Mode::kFixed) {
    j = nlohmann::json{{"mode", "fixed"}, {"count", s.fixed_count}};
  } else {
    j = nlohmann::json{{"mode", "sampled"},
                       {"rate", s.rate},
                       {"sigma", s.sigma},
                       {"max_count", s.max_count}};
  }
}

void from_json(const nlohmann::json& j, LoopSchedule& s) {
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "fixed") {
    s = LoopSchedule::fixed(j.at("count").get<std::size_t>());
  } else if (mode == "sampled") {
    s = LoopSchedule::sampled(j.value("rate", 12.0), j.value("sigma", 0.5));
    s.max_count = j.value("max_count", std::size_t{0});
  } else {
    throw ConfigError("unknown schedule mode '" + mode + "'");
  }
}

void to_json(nlohmann::json& j, const RecurrenceSpec& s) {
  j = nlohmann::json{{"groups", s.groups},
                     {"schedule", s.schedule},
                     {"noise_scale", s.noise_scale},
                     {"noise_every_step", s.noise_every_step},
                     {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, RecurrenceSpec& s) {
  s.groups = j.at("groups").get<std::vector<Group>>();
  s.schedule = j.at("schedule").get<LoopSchedule>();
  s.noise_scale = j.value("noise_scale", 0.02);
  s.noise_every_step = j.value("noise_every_step", false);
  s.seed = j.value("seed", std::uint64_t{0});
}

RecurrenceSpec load_recurrence_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open recurrence spec " + path);
  return nlohmann::json::parse(in).get<RecurrenceSpec>();
}

}  // namespace loopscope
