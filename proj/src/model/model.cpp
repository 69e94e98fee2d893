// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "loopscope/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "loopscope/ops.hpp"

namespace loopscope {

namespace {

constexpr double kInitStd = 0.02;

Tensor gaussian(Shape shape, Rng& rng, double stddev) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ops::add_rowwise(ops::matmul(x, w), b);
}

}  // namespace

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.n_layers = 12;
  c.n_heads = 12;
  c.d_model = 768;
  c.vocab_size = 50304;
  c.block_size = 512;
  return c;
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.n_layers = 4;
  c.n_heads = 2;
  c.d_model = 32;
  c.block_size = 64;
  return c;
}

void ModelConfig::validate() const {
  if (n_layers == 0 || n_heads == 0 || d_model == 0 || vocab_size == 0 ||
      block_size == 0 || mlp_ratio == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model must be divisible by n_heads");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers},   {"n_heads", c.n_heads},
                     {"d_model", c.d_model},     {"vocab_size", c.vocab_size},
                     {"block_size", c.block_size}, {"mlp_ratio", c.mlp_ratio},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  const ModelConfig defaults;
  c.n_layers = j.value("n_layers", defaults.n_layers);
  c.n_heads = j.value("n_heads", defaults.n_heads);
  c.d_model = j.value("d_model", defaults.d_model);
  c.vocab_size = j.value("vocab_size", defaults.vocab_size);
  c.block_size = j.value("block_size", defaults.block_size);
  c.mlp_ratio = j.value("mlp_ratio", defaults.mlp_ratio);
  c.seed = j.value("seed", defaults.seed);
}

Tensor looped_input_projection(const Tensor& input_embed, const Tensor& state,
                               const Tensor& weights) {
  if (input_embed.shape() != state.shape()) {
    throw DimensionError("looped_input_projection: embed " +
                         shape_string(input_embed.shape()) + " vs state " +
                         shape_string(state.shape()));
  }
  return ops::matmul(ops::concat_cols(input_embed, state), weights);
}

Tensor sample_state_noise(std::size_t t_len, std::size_t d, Rng& rng,
                          double scale) {
  std::vector<double> v(t_len * d, 0.0);
  if (scale > 0.0) {
    for (auto& x : v) x = rng.normal(0.0, scale);
  }
  return Tensor::from({t_len, d}, std::move(v));
}

RecurrentModel::RecurrentModel(ModelConfig config, const RecurrenceSpec& spec)
    : config_(std::move(config)), groups_(spec.groups) {
  config_.validate();
  spec.validate(config_.n_layers);
  Rng rng(config_.seed);
  const std::size_t d = config_.d_model;
  const std::size_t hidden = d * config_.mlp_ratio;

  // Residual-branch projections are scaled by the expected number of layer
  // applications, counting loop repeats.
  double applications = 0.0;
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    applications += spec.group_of(l) < 0 ? 1.0 : spec.schedule.expected_count();
  }
  const double resid_std = kInitStd / std::sqrt(2.0 * applications);

  tok_emb_ = gaussian({config_.vocab_size, d}, rng, kInitStd);
  pos_emb_ = gaussian({config_.block_size, d}, rng, kInitStd);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    LayerWeights w;
    w.attn_in_norm = Tensor::full({d}, 1.0, true);
    w.attn_out_norm = Tensor::full({d}, 1.0, true);
    w.mlp_in_norm = Tensor::full({d}, 1.0, true);
    w.mlp_out_norm = Tensor::full({d}, 1.0, true);
    w.wq = gaussian({d, d}, rng, kInitStd);
    w.bq = Tensor::zeros({d}, true);
    w.wk = gaussian({d, d}, rng, kInitStd);
    w.bk = Tensor::zeros({d}, true);
    w.wv = gaussian({d, d}, rng, kInitStd);
    w.bv = Tensor::zeros({d}, true);
    w.wo = gaussian({d, d}, rng, resid_std);
    w.bo = Tensor::zeros({d}, true);
    w.w_up = gaussian({d, hidden}, rng, kInitStd);
    w.b_up = Tensor::zeros({hidden}, true);
    w.w_down = gaussian({hidden, d}, rng, resid_std);
    w.b_down = Tensor::zeros({d}, true);
    layers_.push_back(std::move(w));
  }
  // Projection starts as the average of embedding and state plus noise,
  // which makes the loop map a contraction at initialization.
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    Tensor p = gaussian({2 * d, d}, rng, kInitStd);
    auto v = p.mutable_data();
    for (std::size_t i = 0; i < d; ++i) {
      v[i * d + i] += 0.5;
      v[(d + i) * d + i] += 0.5;
    }
    projections_.push_back(std::move(p));
  }
  final_norm_ = Tensor::full({d}, 1.0, true);
  lm_head_ = gaussian({d, config_.vocab_size}, rng, kInitStd);
}

std::vector<NamedTensor> RecurrentModel::parameters() const {
  std::vector<NamedTensor> out;
  out.emplace_back("tok_emb", tok_emb_);
  out.emplace_back("pos_emb", pos_emb_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& w = layers_[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.emplace_back(p + "attn_in_norm", w.attn_in_norm);
    out.emplace_back(p + "attn_out_norm", w.attn_out_norm);
    out.emplace_back(p + "mlp_in_norm", w.mlp_in_norm);
    out.emplace_back(p + "mlp_out_norm", w.mlp_out_norm);
    out.emplace_back(p + "wq", w.wq);
    out.emplace_back(p + "bq", w.bq);
    out.emplace_back(p + "wk", w.wk);
    out.emplace_back(p + "bk", w.bk);
    out.emplace_back(p + "wv", w.wv);
    out.emplace_back(p + "bv", w.bv);
    out.emplace_back(p + "wo", w.wo);
    out.emplace_back(p + "bo", w.bo);
    out.emplace_back(p + "w_up", w.w_up);
    out.emplace_back(p + "b_up", w.b_up);
    out.emplace_back(p + "w_down", w.w_down);
    out.emplace_back(p + "b_down", w.b_down);
  }
  for (std::size_t g = 0; g < projections_.size(); ++g) {
    out.emplace_back("groups." + std::to_string(g) + ".projection",
                     projections_[g]);
  }
  out.emplace_back("final_norm", final_norm_);
  out.emplace_back("lm_head", lm_head_);
  return out;
}

void RecurrentModel::load_parameters(
    const std::vector<std::pair<std::string, std::vector<double>>>& values) {
  for (auto& [name, tensor] : parameters()) {
    auto it = std::find_if(values.begin(), values.end(),
                           [&](const auto& v) { return v.first == name; });
    if (it == values.end()) {
      throw std::runtime_error("missing parameter '" + name + "'");
    }
    if (it->second.size() != tensor.size()) {
      throw DimensionError("parameter '" + name + "' has " +
                           std::to_string(it->second.size()) +
                           " values, expected " + std::to_string(tensor.size()));
    }
    std::copy(it->second.begin(), it->second.end(),
              tensor.mutable_data().begin());
  }
}

void RecurrentModel::check_spec(const RecurrenceSpec& spec) const {
  spec.validate(config_.n_layers);
  if (spec.groups != groups_) {
    throw ConfigError("recurrence spec groups differ from the model layout");
  }
}

Tensor RecurrentModel::embed(std::span<const int> tokens) const {
  if (tokens.empty()) throw std::invalid_argument("empty token sequence");
  if (tokens.size() > config_.block_size) {
    throw std::invalid_argument("sequence of " + std::to_string(tokens.size()) +
                                " tokens exceeds block size " +
                                std::to_string(config_.block_size));
  }
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw std::invalid_argument("token id " + std::to_string(t) +
                                  " outside vocabulary of " +
                                  std::to_string(config_.vocab_size));
    }
  }
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] = static_cast<int>(i);
  }
  return ops::add(ops::embedding(tok_emb_, tokens),
                  ops::embedding(pos_emb_, positions));
}

Tensor RecurrentModel::apply_layer(std::size_t layer, const Tensor& x) const {
  const LayerWeights& w = layers_.at(layer);
  Tensor h = ops::rmsnorm(x, w.attn_in_norm);
  Tensor attn = ops::causal_attention(linear(h, w.wq, w.bq), linear(h, w.wk, w.bk),
                                      linear(h, w.wv, w.bv), config_.n_heads);
  Tensor y = ops::add(x, ops::rmsnorm(linear(attn, w.wo, w.bo), w.attn_out_norm));
  Tensor m = ops::silu(linear(ops::rmsnorm(y, w.mlp_in_norm), w.w_up, w.b_up));
  return ops::add(y, ops::rmsnorm(linear(m, w.w_down, w.b_down), w.mlp_out_norm));
}

Tensor RecurrentModel::looped_input_projection(std::size_t group,
                                               const Tensor& input_embed,
                                               const Tensor& state) const {
  return loopscope::looped_input_projection(input_embed, state,
                                            projections_.at(group));
}

Tensor RecurrentModel::init_loop_state(std::size_t group,
                                       const Tensor& input_embed, Rng& rng,
                                       double noise_scale) const {
  if (noise_scale < 0.0) throw ConfigError("noise scale must be >= 0");
  Tensor noise = sample_state_noise(input_embed.rows(), input_embed.cols(), rng,
                                    noise_scale);
  return looped_input_projection(group, input_embed, noise);
}

LoopState RecurrentModel::step_group(const LoopState& state,
                                     const Tensor& input_embed,
                                     const RecurrenceSpec& spec,
                                     Rng& noise_rng) const {
  const Group& g = groups_.at(state.group);
  Tensor s = state.state;
  if (spec.noise_every_step && spec.noise_scale > 0.0) {
    s = ops::add(s, sample_state_noise(s.rows(), s.cols(), noise_rng,
                                       spec.noise_scale));
  }
  Tensor h = looped_input_projection(state.group, input_embed, s);
  for (std::size_t l = g.first_layer; l <= g.last_layer; ++l) {
    h = apply_layer(l, h);
  }
  return LoopState{state.group, state.k + 1, std::move(h)};
}

Tensor RecurrentModel::decode(const Tensor& hidden) const {
  return ops::matmul(ops::rmsnorm(hidden, final_norm_), lm_head_);
}

ForwardResult RecurrentModel::forward(std::span<const int> tokens,
                                      const RecurrenceSpec& spec, Rng& rng,
                                      const ForwardOptions& options) const {
  check_spec(spec);
  ForwardResult result;
  if (options.loop_counts && options.loop_counts->size() != groups_.size()) {
    throw ConfigError("loop_counts needs one entry per group");
  }
  std::vector<std::size_t> planned(groups_.size());
  for (std::size_t g = 0; g < groups_.size(); ++g) {
    if (options.controller) {
      planned[g] = options.controller->max_steps(g);
    } else if (options.loop_counts) {
      planned[g] = (*options.loop_counts)[g];
    } else {
      planned[g] = sample_loop_count(spec.schedule, rng);
    }
  }

  Tensor x = embed(tokens);
  if (options.trace) result.stages.push_back({"embed", 0, x});
  const std::size_t t_len = tokens.size();

  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const int gi = spec.group_of(l);
    if (gi < 0) {
      x = apply_layer(l, x);
      if (options.trace) {
        result.stages.push_back({"layer" + std::to_string(l), 0, x});
      }
      continue;
    }
    const auto g = static_cast<std::size_t>(gi);
    const std::string label = "group" + std::to_string(g);
    const Tensor input_embed = x;
    LoopState state{g, 0, init_loop_state(g, input_embed, rng, spec.noise_scale)};
    GroupTrace trace{g, {}};
    auto record = [&](const Tensor& s, std::size_t k) {
      if (!options.trace) return;
      trace.states.push_back(s);
      result.stages.push_back({label, k, s});
    };
    record(state.state, 0);

    std::vector<unsigned char> active(t_len, 1);
    if (options.controller) options.controller->begin_group(g, t_len);
    std::size_t steps = 0;
    while (steps < planned[g]) {
      LoopState next = step_group(state, input_embed, spec, rng);
      if (options.controller) {
        const auto halt = options.controller->step(g, steps, state.state,
                                                   next.state, active);
        bool any_active = false;
        for (std::size_t t = 0; t < t_len; ++t) {
          if (active[t] && halt.at(t)) active[t] = 0;
          any_active = any_active || active[t];
        }
        if (!any_active) break;
        next.state = ops::select_rows(state.state, next.state, active);
      }
      state = std::move(next);
      ++steps;
      record(state.state, steps);
    }
    result.loop_counts.push_back(steps);
    if (options.trace) result.traces.push_back(std::move(trace));
    x = state.state;
    l = groups_[g].last_layer;
  }
  result.logits = decode(x);
  return result;
}

}  // namespace loopscope
