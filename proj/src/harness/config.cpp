// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <sstream>

#include "loopscope/hash.hpp"
#include "loopscope/harness.hpp"

namespace loopscope::harness {

namespace {

nlohmann::json oracle_json(const OracleConfig& c) {
  return {{"rho", c.rho},
          {"theta_deg", c.theta_deg},
          {"dim", c.dim},
          {"stats_steps", c.stats_steps},
          {"k_max", c.k_max},
          {"tolerance", c.tolerance},
          {"decoder_vocab", c.decoder_vocab},
          {"decoder_seed", c.decoder_seed}};
}

OracleConfig oracle_from(const nlohmann::json& j) {
  OracleConfig c;
  c.rho = j.value("rho", c.rho);
  c.theta_deg = j.value("theta_deg", c.theta_deg);
  c.dim = j.value("dim", c.dim);
  c.stats_steps = j.value("stats_steps", c.stats_steps);
  c.k_max = j.value("k_max", c.k_max);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.decoder_vocab = j.value("decoder_vocab", c.decoder_vocab);
  c.decoder_seed = j.value("decoder_seed", c.decoder_seed);
  return c;
}

nlohmann::json diagnose_json(const DiagnoseConfig& c) {
  nlohmann::json jumps = nlohmann::json::array();
  for (const auto& v : c.drift.block_jumps) jumps.push_back(v);
  return {{"source", c.source},
          {"loops", c.loops},
          {"trajectory_sequences", c.trajectory_sequences},
          {"spirals", c.spirals},
          {"block_jumps", jumps},
          {"steps_per_segment", c.steps_per_segment}};
}

DiagnoseConfig diagnose_from(const nlohmann::json& j) {
  DiagnoseConfig c;
  c.source = j.value("source", c.source);
  c.loops = j.value("loops", c.loops);
  c.trajectory_sequences = j.value("trajectory_sequences", c.trajectory_sequences);
  if (j.contains("spirals")) c.spirals = j.at("spirals").get<std::vector<spiral::SpiralConfig>>();
  if (j.contains("block_jumps")) {
    c.drift.block_jumps = j.at("block_jumps").get<std::vector<std::vector<double>>>();
  }
  c.steps_per_segment = j.value("steps_per_segment", c.steps_per_segment);
  return c;
}

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (version != kConfigVersion) {
    throw ConfigError("unsupported config version " + std::to_string(version));
  }
  if (run_id.empty() || run_id.find('/') != std::string::npos) {
    throw ConfigError("run_id must be a nonempty file-name fragment");
  }
  model.validate();
  recurrence.validate(model.n_layers);
  if (tau_grid.empty()) throw ConfigError("tau grid is empty");
  for (std::size_t i = 0; i < tau_grid.size(); ++i) {
    if (!(tau_grid[i] > 0.0)) throw ConfigError("tau grid must be strictly positive");
    if (i > 0 && !(tau_grid[i] > tau_grid[i - 1])) {
      throw ConfigError("tau grid must be sorted ascending");
    }
  }
  for (const auto& p : policies) exit::parse_policy(p);
  if (k_max == 0) throw ConfigError("k_max must be >= 1");
  if (eval_sequences == 0 || eval_seq_len == 0 || eval_seq_len > model.block_size) {
    throw ConfigError("eval_sequences and eval_seq_len must be positive, seq_len <= block_size");
  }
  if (diagnose.source != "model" && diagnose.source != "spiral") {
    throw ConfigError("diagnose.source must be 'model' or 'spiral'");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"version", c.version},
                     {"run_id", c.run_id},
                     {"output_dir", c.output_dir},
                     {"seed", c.seed},
                     {"model", c.model},
                     {"recurrence", c.recurrence},
                     {"train", c.train},
                     {"eval_corpus", c.eval_corpus},
                     {"eval_sequences", c.eval_sequences},
                     {"eval_seq_len", c.eval_seq_len},
                     {"checkpoints", c.checkpoints},
                     {"k_max", c.k_max},
                     {"policies", c.policies},
                     {"tau_grid", c.tau_grid},
                     {"exit", c.exit},
                     {"fixed_budgets", c.fixed_budgets},
                     {"diagnose", diagnose_json(c.diagnose)},
                     {"oracle", oracle_json(c.oracle)}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  c.version = j.value("version", 0);
  c.run_id = j.value("run_id", c.run_id);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.seed = j.value("seed", c.seed);
  if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
  if (j.contains("recurrence")) c.recurrence = j.at("recurrence").get<RecurrenceSpec>();
  if (j.contains("train")) c.train = j.at("train").get<train::TrainConfig>();
  c.eval_corpus = j.value("eval_corpus", c.eval_corpus);
  c.eval_sequences = j.value("eval_sequences", c.eval_sequences);
  c.eval_seq_len = j.value("eval_seq_len", c.eval_seq_len);
  c.checkpoints = j.value("checkpoints", c.checkpoints);
  c.k_max = j.value("k_max", c.k_max);
  c.policies = j.value("policies", c.policies);
  c.tau_grid = j.value("tau_grid", c.tau_grid);
  c.exit = j.value("exit", c.exit);
  c.fixed_budgets = j.value("fixed_budgets", c.fixed_budgets);
  if (j.contains("diagnose")) c.diagnose = diagnose_from(j.at("diagnose"));
  if (j.contains("oracle")) c.oracle = oracle_from(j.at("oracle"));
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  nlohmann::json* node = &j;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override path '" + key + "' crosses a non-object");
    node = &(*node)[path[i]];
    if (node->is_null()) *node = nlohmann::json::object();
  }
  if (!node->is_object()) throw ConfigError("override path '" + key + "' crosses a non-object");
  (*node)[path.back()] = value;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  ExperimentConfig c;
  try {
    c = j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  const auto base = std::filesystem::absolute(path).parent_path();
  c.train.corpus = resolve(base, c.train.corpus);
  c.eval_corpus = resolve(base, c.eval_corpus);
  c.output_dir = resolve(base, c.output_dir);
  for (auto& p : c.checkpoints) p = resolve(base, p);
  c.validate();
  return c;
}

std::string experiment_hash(const ExperimentConfig& cfg) {
  nlohmann::json j = cfg;
  j.erase("output_dir");
  // Paths differ across machines; the hash covers their file names only.
  auto name_only = [](const std::string& p) {
    return std::filesystem::path(p).filename().string();
  };
  j["train"]["corpus"] = name_only(cfg.train.corpus);
  j["eval_corpus"] = name_only(cfg.eval_corpus);
  nlohmann::json ck = nlohmann::json::array();
  for (const auto& p : cfg.checkpoints) ck.push_back(name_only(p));
  j["checkpoints"] = ck;
  return hex64(fnv1a(j.dump()));
}

std::string prompt_hash(const std::vector<std::vector<int>>& prompts) {
  std::uint64_t h = fnv1a("");
  for (const auto& p : prompts) {
    h = fnv1a("[", h);
    for (int t : p) h = fnv1a(std::to_string(t) + ",", h);
    h = fnv1a("]", h);
  }
  return hex64(h);
}

}  // namespace loopscope::harness
