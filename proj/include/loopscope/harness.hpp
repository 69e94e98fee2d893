// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment runner behind the `loopscope` CLI. One versioned JSON config
// drives every subcommand; outputs are `<run_id>_<artifact>.csv` files in
// output_dir plus a `<run_id>_manifest.json`. Every CSV row carries the
// config hash.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "loopscope/exit.hpp"
#include "loopscope/geometry.hpp"
#include "loopscope/model.hpp"
#include "loopscope/spiral.hpp"
#include "loopscope/trainer.hpp"

namespace loopscope::harness {

inline constexpr int kConfigVersion = 1;

struct OracleConfig {
  std::vector<double> rho = {0.9, 0.99, 1.0};
  std::vector<double> theta_deg = {0.0, 5.0, 30.0};
  std::size_t dim = 2;
  std::size_t stats_steps = 200;
  std::size_t k_max = 2000;
  double tolerance = 1e-9;
  std::size_t decoder_vocab = 8;
  std::uint64_t decoder_seed = 1;
};

struct DiagnoseConfig {
  std::string source = "model";  // "model" or "spiral"
  std::size_t loops = 12;        // fixed L per group
  std::size_t trajectory_sequences = 2;
  std::vector<spiral::SpiralConfig> spirals;
  spiral::DriftConfig drift;
  std::size_t steps_per_segment = 40;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  std::string run_id = "run";
  std::string output_dir = "out";  // not part of the config hash
  std::uint64_t seed = 0;
  ModelConfig model;
  RecurrenceSpec recurrence;
  train::TrainConfig train;
  std::string eval_corpus;  // empty: the training corpus
  std::size_t eval_sequences = 8;
  std::size_t eval_seq_len = 32;
  std::vector<std::string> checkpoints;  // empty: the training schedule
  std::size_t k_max = 12;
  std::vector<std::string> policies = {"step_norm", "kl", "acceleration"};
  std::vector<double> tau_grid = {1e-5, 1e-4, 1e-3, 1e-2};
  nlohmann::json exit = nlohmann::json::object();  // base ExitConfig keys
  std::vector<std::size_t> fixed_budgets;          // empty: {k_max}
  DiagnoseConfig diagnose;
  OracleConfig oracle;

  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

// Applies "a.b.c=value" overrides; value is parsed as JSON, falling back
// to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Reads the file, applies overrides, resolves relative paths against the
// config file's directory.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

std::string experiment_hash(const ExperimentConfig& cfg);
std::string prompt_hash(const std::vector<std::vector<int>>& prompts);

// --- results -----------------------------------------------------------

struct TrainOutcome {
  std::vector<std::string> checkpoint_paths;
  double initial_ce = 0.0;
  double final_loss = 0.0;
  std::vector<train::TrainLogRow> log;
};

struct CheckpointCurves {
  std::string checkpoint;  // label (step number or "spiral")
  std::vector<geometry::AggregateStats> groups;
};

struct DiagnoseOutcome {
  std::vector<CheckpointCurves> curves;
};

struct SweepRow {
  std::string policy;  // "fixed" for budget rows
  std::optional<double> tau;
  std::size_t k_max = 0;
  double ce = 0.0;
  double ppl = 0.0;
  double mean_steps = 0.0;
  std::vector<double> mean_steps_per_group;
  std::size_t tokens = 0;
  std::size_t decoder_calls = 0;
  double ms_per_token = 0.0;
};

struct SweepOutcome {
  std::vector<SweepRow> rows;
  std::string prompt_hash;
};

struct EvalOutcome {
  train::EvalResult result;
  std::string checkpoint;
};

struct OracleCheck {
  std::string check;
  double rho = 0.0;
  double theta_deg = 0.0;
  std::string policy;
  double tau = 0.0;
  double expected = 0.0;
  double observed = 0.0;
  bool pass = false;
};

struct OracleReport {
  std::vector<OracleCheck> checks;
  bool all_pass() const;
};

// --- subcommands ---------------------------------------------------------

TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream& log);
EvalOutcome cmd_eval(const ExperimentConfig& cfg, std::ostream& log);
DiagnoseOutcome cmd_diagnose(const ExperimentConfig& cfg, std::ostream& log);
SweepOutcome cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);
OracleReport cmd_oracle(const ExperimentConfig& cfg, std::ostream& log);

// Closed-form conformance suite; no files written.
OracleReport run_oracle(const OracleConfig& cfg, const std::vector<double>& tau_grid);

// Dispatches by name and returns the process exit status.
int run_subcommand(const std::string& name, const ExperimentConfig& cfg, std::ostream& log);

// Checkpoint paths the config refers to, in order.
std::vector<std::string> checkpoint_paths(const ExperimentConfig& cfg);
std::vector<std::vector<int>> eval_prompts(const ExperimentConfig& cfg);

}  // namespace loopscope::harness
