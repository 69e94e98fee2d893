// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "loopscope/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "loopscope/hash.hpp"
#include "loopscope/ops.hpp"

namespace loopscope::train {

TrainingError::TrainingError(std::uint64_t step, const std::string& what)
    : NumericError("training step " + std::to_string(step) + ": " + what), step_(step) {}

std::vector<int> byte_tokenize(std::string_view text) {
  std::vector<int> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(c);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void TrainConfig::validate(const ModelConfig& model) const {
  if (steps == 0 || batch_size == 0 || seq_len == 0) {
    throw ConfigError("steps, batch_size and seq_len must be positive");
  }
  if (seq_len > model.block_size) {
    throw ConfigError("seq_len " + std::to_string(seq_len) + " exceeds block_size " +
                      std::to_string(model.block_size));
  }
  if (checkpoint_every == 0 || steps % checkpoint_every != 0) {
    throw ConfigError("checkpoint_every must divide steps");
  }
  if (!(lr > 0.0) || min_lr_ratio < 0.0 || min_lr_ratio > 1.0) {
    throw ConfigError("learning rate must be > 0 and min_lr_ratio in [0, 1]");
  }
  if (warmup_frac < 0.0 || warmup_frac >= 1.0) throw ConfigError("warmup_frac must be in [0, 1)");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("Adam betas must be in [0, 1)");
  }
  if (weight_decay < 0.0 || grad_clip < 0.0) {
    throw ConfigError("weight_decay and grad_clip must be >= 0");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"corpus", c.corpus},
                     {"steps", c.steps},
                     {"batch_size", c.batch_size},
                     {"seq_len", c.seq_len},
                     {"lr", c.lr},
                     {"min_lr_ratio", c.min_lr_ratio},
                     {"warmup_frac", c.warmup_frac},
                     {"weight_decay", c.weight_decay},
                     {"grad_clip", c.grad_clip},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"checkpoint_every", c.checkpoint_every},
                     {"checkpoint_at_start", c.checkpoint_at_start},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.corpus = j.value("corpus", d.corpus);
  c.steps = j.value("steps", d.steps);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.seq_len = j.value("seq_len", d.seq_len);
  c.lr = j.value("lr", d.lr);
  c.min_lr_ratio = j.value("min_lr_ratio", d.min_lr_ratio);
  c.warmup_frac = j.value("warmup_frac", d.warmup_frac);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.grad_clip = j.value("grad_clip", d.grad_clip);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.checkpoint_at_start = j.value("checkpoint_at_start", d.checkpoint_at_start);
  c.seed = j.value("seed", d.seed);
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  const auto total = static_cast<double>(cfg.steps);
  const double warmup = std::floor(cfg.warmup_frac * total);
  const auto s = static_cast<double>(step);
  if (s < warmup) return cfg.lr * (s + 1.0) / warmup;
  const double span = std::max(1.0, total - 1.0 - warmup);
  const double progress = std::min(1.0, (s - warmup) / span);
  const double floor = cfg.min_lr_ratio * cfg.lr;
  return floor + 0.5 * (cfg.lr - floor) * (1.0 + std::cos(M_PI * progress));
}

AdamW::AdamW(const std::vector<NamedTensor>& params) {
  for (const auto& [name, t] : params) {
    names_.push_back(name);
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void AdamW::step(const std::vector<NamedTensor>& params, double lr, const TrainConfig& cfg) {
  if (params.size() != m_.size()) throw std::logic_error("optimizer parameter count changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p].second;
    const std::vector<double> g = t.grad();
    auto w = t.mutable_data();
    const bool decay = t.dim() == 2 && cfg.weight_decay > 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[p][i] = cfg.beta1 * m_[p][i] + (1.0 - cfg.beta1) * g[i];
      v_[p][i] = cfg.beta2 * v_[p][i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m_[p][i] / bc1;
      const double vhat = v_[p][i] / bc2;
      if (decay) w[i] -= lr * cfg.weight_decay * w[i];
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

std::vector<NamedArray> AdamW::first_moments(const std::vector<NamedTensor>& params) const {
  std::vector<NamedArray> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    out.push_back({names_[p], params[p].second.shape(), m_[p]});
  }
  return out;
}

std::vector<NamedArray> AdamW::second_moments(const std::vector<NamedTensor>& params) const {
  std::vector<NamedArray> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    out.push_back({names_[p], params[p].second.shape(), v_[p]});
  }
  return out;
}

void AdamW::restore(const std::vector<NamedArray>& m1, const std::vector<NamedArray>& m2,
                    std::uint64_t t) {
  if (m1.size() != names_.size() || m2.size() != names_.size()) {
    throw CheckpointError("optimizer moment count mismatch");
  }
  for (std::size_t p = 0; p < names_.size(); ++p) {
    if (m1[p].name != names_[p] || m2[p].name != names_[p] ||
        m1[p].values.size() != m_[p].size() || m2[p].values.size() != v_[p].size()) {
      throw CheckpointError("optimizer moment mismatch at '" + names_[p] + "'");
    }
    m_[p] = m1[p].values;
    v_[p] = m2[p].values;
  }
  t_ = t;
}

Tensor batch_loss(const RecurrentModel& model, const RecurrenceSpec& spec,
                  const Batch& batch, const std::vector<std::size_t>& loop_counts,
                  Rng& rng) {
  if (batch.inputs.empty()) throw std::invalid_argument("empty batch");
  ForwardOptions opt;
  opt.loop_counts = loop_counts;
  Tensor total;
  for (std::size_t b = 0; b < batch.inputs.size(); ++b) {
    const auto out = model.forward(batch.inputs[b], spec, rng, opt);
    const Tensor ce = ops::cross_entropy(out.logits, batch.targets[b]);
    total = total.defined() ? ops::add(total, ce) : ce;
  }
  return ops::scale(total, 1.0 / static_cast<double>(batch.inputs.size()));
}

std::string config_hash(const ModelConfig& model, const RecurrenceSpec& spec,
                        const TrainConfig& train) {
  const nlohmann::json j{{"model", model}, {"recurrence", spec}, {"train", train}};
  return hex64(fnv1a(j.dump()));
}

Trainer::Trainer(TrainConfig cfg, RecurrentModel& model, RecurrenceSpec spec,
                 std::vector<int> corpus)
    : cfg_(std::move(cfg)),
      model_(model),
      spec_(std::move(spec)),
      corpus_(std::move(corpus)),
      opt_(model.parameters()),
      rng_(cfg_.seed),
      hash_(config_hash(model.config(), spec_, cfg_)) {
  cfg_.validate(model_.config());
  spec_.validate(model_.config().n_layers);
  if (corpus_.size() < cfg_.seq_len + 1) {
    throw std::invalid_argument("corpus has " + std::to_string(corpus_.size()) +
                                " tokens; one training window needs " +
                                std::to_string(cfg_.seq_len + 1));
  }
  for (int t : corpus_) {
    if (t < 0 || static_cast<std::size_t>(t) >= model_.config().vocab_size) {
      throw std::invalid_argument("corpus token outside the vocabulary");
    }
  }
}

Batch Trainer::sample_batch() {
  Batch b;
  const std::size_t starts = corpus_.size() - cfg_.seq_len;
  for (std::size_t i = 0; i < cfg_.batch_size; ++i) {
    const std::size_t s = rng_.index(starts);
    b.inputs.emplace_back(corpus_.begin() + static_cast<long>(s),
                          corpus_.begin() + static_cast<long>(s + cfg_.seq_len));
    b.targets.emplace_back(corpus_.begin() + static_cast<long>(s + 1),
                           corpus_.begin() + static_cast<long>(s + cfg_.seq_len + 1));
  }
  return b;
}

TrainLogRow Trainer::step() {
  const auto params = model_.parameters();
  for (const auto& [name, t] : params) Tensor(t).zero_grad();

  const Batch batch = sample_batch();
  std::vector<std::size_t> counts;
  for (std::size_t g = 0; g < spec_.groups.size(); ++g) {
    counts.push_back(sample_loop_count(spec_.schedule, rng_));
  }
  Tensor loss;
  try {
    loss = batch_loss(model_, spec_, batch, counts, rng_);
  } catch (const NumericError& e) {
    throw TrainingError(step_, e.what());
  }
  if (!std::isfinite(loss.item())) throw TrainingError(step_, "non-finite loss");
  backward(loss);

  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) sq += g * g;
  }
  const double grad_norm = std::sqrt(sq);
  if (!std::isfinite(grad_norm)) throw TrainingError(step_, "non-finite gradient");
  if (cfg_.grad_clip > 0.0 && grad_norm > cfg_.grad_clip) {
    const double f = cfg_.grad_clip / grad_norm;
    for (const auto& [name, t] : params) {
      Tensor p = t;
      // Scale the accumulated gradient in place.
      auto& g = p.node_ptr()->grad_buffer();
      for (double& x : g) x *= f;
    }
  }
  const double lr = learning_rate(cfg_, step_);
  opt_.step(params, lr, cfg_);
  TrainLogRow row{step_, loss.item(), lr, grad_norm};
  ++step_;
  return row;
}

Checkpoint Trainer::checkpoint() const {
  const auto params = model_.parameters();
  Checkpoint c;
  c.step = step_;
  c.model = model_.config();
  c.recurrence = spec_;
  c.weights = snapshot(params);
  c.moment1 = opt_.first_moments(params);
  c.moment2 = opt_.second_moments(params);
  c.rng_state = rng_.state();
  c.config_hash = hash_;
  c.extra["optimizer_steps"] = opt_.steps_taken();
  c.extra["train"] = cfg_;
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  if (ckpt.config_hash != hash_) {
    throw CheckpointError("checkpoint config hash " + ckpt.config_hash +
                          " does not match trainer " + hash_);
  }
  std::vector<std::pair<std::string, std::vector<double>>> values;
  for (const auto& w : ckpt.weights) values.emplace_back(w.name, w.values);
  model_.load_parameters(values);
  opt_.restore(ckpt.moment1, ckpt.moment2,
               ckpt.extra.value("optimizer_steps", static_cast<std::uint64_t>(ckpt.step)));
  rng_.restore(ckpt.rng_state);
  step_ = ckpt.step;
}

void Trainer::run(const std::function<void(const TrainLogRow&)>& on_log,
                  const std::function<void(const Checkpoint&)>& on_checkpoint) {
  if (step_ == 0 && cfg_.checkpoint_at_start && on_checkpoint) on_checkpoint(checkpoint());
  while (step_ < cfg_.steps) {
    const auto row = step();
    if (on_log) on_log(row);
    if (step_ % cfg_.checkpoint_every == 0 && on_checkpoint) on_checkpoint(checkpoint());
  }
}

std::vector<std::vector<int>> make_eval_set(const std::vector<int>& tokens,
                                            std::size_t seq_len, std::size_t count) {
  if (count == 0) throw std::invalid_argument("eval set needs at least one sequence");
  if (tokens.size() < seq_len + 1) throw std::invalid_argument("eval corpus too short");
  const std::size_t span = tokens.size() - seq_len - 1;
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t s = count == 1 ? 0 : span * i / (count - 1);
    out.emplace_back(tokens.begin() + static_cast<long>(s),
                     tokens.begin() + static_cast<long>(s + seq_len + 1));
  }
  return out;
}

EvalResult eval_ce_ppl(const RecurrentModel& model, const RecurrenceSpec& spec,
                       const std::vector<std::vector<int>>& eval_set,
                       const EvalOptions& options) {
  if (eval_set.empty()) throw std::invalid_argument("empty eval set");
  NoGradGuard no_grad;
  const std::size_t n_groups = spec.groups.size();
  EvalResult r;
  r.mean_steps.assign(n_groups, 0.0);
  double ce_sum = 0.0;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const auto& seq = eval_set[i];
    if (seq.size() < 2) throw std::invalid_argument("eval sequences need >= 2 tokens");
    const std::span<const int> inputs(seq.data(), seq.size() - 1);
    const std::span<const int> targets(seq.data() + 1, seq.size() - 1);
    Rng rng(options.seed + i);
    ForwardOptions fo;
    std::optional<exit::TokenExitController> ctl;
    if (options.exit) {
      auto cfg = *options.exit;
      cfg.k_max = options.k_max;
      exit::TokenExitController::BatchDecoder dec;
      if (cfg.policy == exit::Policy::kKL) {
        dec = [&model](const Tensor& h) { return model.decode(h); };
      }
      ctl.emplace(cfg, n_groups, dec);
      fo.controller = &*ctl;
    } else {
      fo.loop_counts = std::vector<std::size_t>(n_groups, options.k_max);
    }
    const auto out = model.forward(inputs, spec, rng, fo);
    const double ce = ops::cross_entropy(out.logits, targets).item();
    ce_sum += ce * static_cast<double>(inputs.size());
    r.tokens += inputs.size();
    if (ctl) {
      const auto d = ctl->decisions();
      for (std::size_t g = 0; g < n_groups; ++g) {
        for (const auto& x : d[g]) r.mean_steps[g] += static_cast<double>(x.steps_used);
      }
      r.decoder_calls += ctl->decoder_calls();
      if (options.keep_decisions) r.decisions.push_back(d);
    } else {
      for (std::size_t g = 0; g < n_groups; ++g) {
        r.mean_steps[g] += static_cast<double>(out.loop_counts[g] * inputs.size());
      }
    }
  }
  const auto elapsed = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  const auto n = static_cast<double>(r.tokens);
  r.ce = ce_sum / n;
  r.ppl = std::exp(r.ce);
  for (auto& s : r.mean_steps) s /= n;
  r.ms_per_token = elapsed / n;
  return r;
}

}  // namespace loopscope::train
