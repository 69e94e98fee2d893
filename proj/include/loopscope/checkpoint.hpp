// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//   8 bytes  magic "LSCKPT\0\1"
//   u32      format version
//   u64      header length N
//   N bytes  JSON header (config, step, RNG state, tensor directory)
//   payload  row-major little-endian float64 arrays, in directory order

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "loopscope/model.hpp"
#include "loopscope/recurrence.hpp"

namespace loopscope {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint64_t step = 0;
  ModelConfig model;
  RecurrenceSpec recurrence;
  std::vector<NamedArray> weights;
  // Optimizer first/second moments, same names as weights.
  std::vector<NamedArray> moment1;
  std::vector<NamedArray> moment2;
  std::string rng_state;
  std::string config_hash;
  nlohmann::json extra = nlohmann::json::object();
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

std::vector<NamedArray> snapshot(const std::vector<NamedTensor>& tensors);
RecurrentModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace loopscope
