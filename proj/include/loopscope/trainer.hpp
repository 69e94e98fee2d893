// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Byte-level next-token training and evaluation for RecurrentModel.
//
// Each optimizer step draws one loop count per group from the schedule and
// shares it across the batch; gradients flow through every sampled loop
// application. All randomness (batch positions, loop counts, state noise)
// comes from one Rng whose state is checkpointed, so a resumed run
// continues bit-for-bit.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "loopscope/checkpoint.hpp"
#include "loopscope/exit.hpp"
#include "loopscope/model.hpp"

namespace loopscope::train {

class TrainingError : public NumericError {
 public:
  TrainingError(std::uint64_t step, const std::string& what);
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

std::vector<int> byte_tokenize(std::string_view text);
std::string read_file(const std::string& path);

struct TrainConfig {
  std::string corpus;  // path to raw bytes
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::size_t seq_len = 32;
  double lr = 3e-3;
  double min_lr_ratio = 0.1;  // cosine floor as a fraction of lr
  double warmup_frac = 0.05;
  double weight_decay = 0.1;
  double grad_clip = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  std::size_t checkpoint_every = 500;
  bool checkpoint_at_start = false;
  std::uint64_t seed = 0;

  void validate(const ModelConfig& model) const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Linear warmup over the first warmup_frac of steps, then cosine decay to
// min_lr_ratio * lr at the final step.
double learning_rate(const TrainConfig& cfg, std::size_t step);

// Decoupled weight decay on 2-D parameters only.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const std::vector<NamedTensor>& params);

  void step(const std::vector<NamedTensor>& params, double lr, const TrainConfig& cfg);
  std::uint64_t steps_taken() const { return t_; }

  std::vector<NamedArray> first_moments(const std::vector<NamedTensor>& params) const;
  std::vector<NamedArray> second_moments(const std::vector<NamedTensor>& params) const;
  void restore(const std::vector<NamedArray>& m1, const std::vector<NamedArray>& m2,
               std::uint64_t t);

 private:
  std::vector<std::vector<double>> m_, v_;
  std::vector<std::string> names_;
  std::uint64_t t_ = 0;
};

struct TrainLogRow {
  std::uint64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

struct Batch {
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> targets;
};

// Mean next-token CE over the batch with fixed loop counts. `rng` feeds
// the loop-state noise.
Tensor batch_loss(const RecurrentModel& model, const RecurrenceSpec& spec,
                  const Batch& batch, const std::vector<std::size_t>& loop_counts,
                  Rng& rng);

std::string config_hash(const ModelConfig& model, const RecurrenceSpec& spec,
                        const TrainConfig& train);

class Trainer {
 public:
  Trainer(TrainConfig cfg, RecurrentModel& model, RecurrenceSpec spec,
          std::vector<int> corpus);

  // One optimizer step; throws TrainingError on a non-finite loss.
  TrainLogRow step();
  std::uint64_t current_step() const { return step_; }

  Checkpoint checkpoint() const;
  // Restores weights, moments, step and RNG state; the checkpoint must
  // match this trainer's config hash.
  void restore(const Checkpoint& ckpt);

  // Runs until cfg.steps, emitting checkpoints on schedule.
  void run(const std::function<void(const TrainLogRow&)>& on_log,
           const std::function<void(const Checkpoint&)>& on_checkpoint);

  const std::string& hash() const { return hash_; }

 private:
  Batch sample_batch();

  TrainConfig cfg_;
  RecurrentModel& model_;
  RecurrenceSpec spec_;
  std::vector<int> corpus_;
  AdamW opt_;
  Rng rng_;
  std::uint64_t step_ = 0;
  std::string hash_;
};

// Evenly spaced windows of seq_len + 1 tokens.
std::vector<std::vector<int>> make_eval_set(const std::vector<int>& tokens,
                                            std::size_t seq_len, std::size_t count);

struct EvalOptions {
  // Loop budget per group; also the cap when an exit policy is set.
  std::size_t k_max = 16;
  std::optional<exit::ExitConfig> exit;
  std::uint64_t seed = 0;  // sequence i uses Rng(seed + i) for noise
  bool keep_decisions = false;
};

struct EvalResult {
  double ce = 0.0;
  double ppl = 0.0;
  std::vector<double> mean_steps;  // per group, averaged over tokens
  double ms_per_token = 0.0;
  std::size_t tokens = 0;
  std::size_t decoder_calls = 0;
  // [seq][group][token] when keep_decisions is set.
  std::vector<std::vector<std::vector<exit::ExitDecision>>> decisions;
};

EvalResult eval_ce_ppl(const RecurrentModel& model, const RecurrenceSpec& spec,
                       const std::vector<std::vector<int>>& eval_set,
                       const EvalOptions& options);

}  // namespace loopscope::train
