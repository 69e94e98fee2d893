// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer with looped block groups.
//
// Each layer is a sandwich-normalized pre/post RMSNorm block:
//   x += norm(attn(norm(x)));  x += norm(mlp_silu(norm(x)))
// A group re-applies its layer span L times to a loop state s:
//   s0 = P([e ; noise]),  s_{k+1} = Block(P([e ; s_k]))
// where e is the hidden sequence entering the group and P is the group's
// learned [2d x d] looped-input projection.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "loopscope/recurrence.hpp"
#include "loopscope/rng.hpp"
#include "loopscope/tensor.hpp"

namespace loopscope {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 128;
  std::size_t vocab_size = 256;
  std::size_t block_size = 128;
  std::size_t mlp_ratio = 4;
  std::uint64_t seed = 0;

  static ModelConfig full_scale();  // 12 layers, 12 heads, d=768, block 512
  static ModelConfig desk();         // 4 layers, 4 heads, d=128, block 128
  static ModelConfig tiny();         // smoke-test scale
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

using NamedTensor = std::pair<std::string, Tensor>;

struct LayerWeights {
  Tensor attn_in_norm, attn_out_norm, mlp_in_norm, mlp_out_norm;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor w_up, b_up, w_down, b_down;
};

struct LoopState {
  std::size_t group = 0;
  std::size_t k = 0;
  Tensor state;  // [T x d]
};

// Per-group record of x^(0) .. x^(L) for all token positions.
struct GroupTrace {
  std::size_t group = 0;
  std::vector<Tensor> states;
};

// One hidden-state snapshot along the depth path, for trajectory plots.
struct StageRecord {
  std::string label;  // "embed", "layer<i>", "group<g>"
  std::size_t k = 0;
  Tensor state;
};

// Loop-execution hook. The model asks it, once per loop step, which tokens
// halt; halted tokens keep x^(k) for the rest of the group's loop.
class LoopController {
 public:
  virtual ~LoopController() = default;
  virtual std::size_t max_steps(std::size_t group) const = 0;
  virtual void begin_group(std::size_t group, std::size_t n_tokens) = 0;
  // `current` is x^(k), `next` the candidate x^(k+1). Returns one flag per
  // token; only entries with active[t] != 0 are consulted.
  virtual std::vector<unsigned char> step(
      std::size_t group, std::size_t k, const Tensor& current,
      const Tensor& next, std::span<const unsigned char> active) = 0;
};

struct ForwardOptions {
  bool trace = false;
  // Overrides the schedule: one loop count per group.
  std::optional<std::vector<std::size_t>> loop_counts;
  // When set, loop lengths come from the controller instead of the schedule.
  LoopController* controller = nullptr;
};

struct ForwardResult {
  Tensor logits;                         // [T x V]
  std::vector<std::size_t> loop_counts;  // steps taken per group
  std::vector<GroupTrace> traces;        // when trace is set
  std::vector<StageRecord> stages;       // when trace is set
};

// Concat-project: [input_embed ; state] x weights, weights is [2d x d].
Tensor looped_input_projection(const Tensor& input_embed, const Tensor& state,
                               const Tensor& weights);

// [T x d] i.i.d. N(0, scale^2); all zeros when scale == 0 (no draws made).
Tensor sample_state_noise(std::size_t t_len, std::size_t d, Rng& rng,
                          double scale);

class RecurrentModel {
 public:
  // Random initialization from config.seed.
  RecurrentModel(ModelConfig config, const RecurrenceSpec& spec);

  const ModelConfig& config() const { return config_; }
  const std::vector<Group>& groups() const { return groups_; }

  // Stable, named parameter list (checkpoint order).
  std::vector<NamedTensor> parameters() const;
  // Copies values from named arrays; every parameter must be present.
  void load_parameters(const std::vector<std::pair<std::string, std::vector<double>>>& values);

  Tensor& group_projection(std::size_t group) { return projections_.at(group); }
  LayerWeights& layer(std::size_t i) { return layers_.at(i); }
  const LayerWeights& layer(std::size_t i) const { return layers_.at(i); }

  // Token + learned positional embeddings, [T x d].
  Tensor embed(std::span<const int> tokens) const;
  Tensor apply_layer(std::size_t layer, const Tensor& x) const;
  Tensor looped_input_projection(std::size_t group, const Tensor& input_embed,
                                 const Tensor& state) const;
  Tensor init_loop_state(std::size_t group, const Tensor& input_embed,
                         Rng& rng, double noise_scale) const;
  // One application of the group's block map. `noise_rng` is only drawn
  // from when noise_every_step is set.
  LoopState step_group(const LoopState& state, const Tensor& input_embed,
                       const RecurrenceSpec& spec, Rng& noise_rng) const;
  // Final RMSNorm + unembedding.
  Tensor decode(const Tensor& hidden) const;

  ForwardResult forward(std::span<const int> tokens, const RecurrenceSpec& spec,
                        Rng& rng, const ForwardOptions& options = {}) const;

 private:
  void check_spec(const RecurrenceSpec& spec) const;

  ModelConfig config_;
  std::vector<Group> groups_;
  Tensor tok_emb_, pos_emb_;
  std::vector<LayerWeights> layers_;
  std::vector<Tensor> projections_;
  Tensor final_norm_, lm_head_;
};

}  // namespace loopscope
