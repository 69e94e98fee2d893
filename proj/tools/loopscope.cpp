// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// loopscope <train|eval|diagnose|sweep|oracle> --config FILE [--set key=value]...

#include <iostream>

#include "CLI11.hpp"
#include "loopscope/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Looped-transformer geometry and exit-policy harness"};
  app.require_subcommand(1, 1);

  std::string config;
  std::vector<std::string> overrides;
  const std::pair<const char*, const char*> commands[] = {
      {"train", "train a model and write checkpoints on schedule"},
      {"eval", "CE/PPL of the last checkpoint at each fixed loop budget"},
      {"diagnose", "step norms, cosines, accelerations and PCA trajectories"},
      {"sweep", "exit policy x tau sweep against fixed budgets"},
      {"oracle", "spiral closed-form conformance; nonzero status on mismatch"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config, "experiment config (JSON)")->required();
    sub->add_option("--set", overrides, "override a config key, e.g. train.steps=100");
  }
  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = loopscope::harness::load_config(config, overrides);
    return loopscope::harness::run_subcommand(name, cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "loopscope " << name << ": " << e.what() << "\n";
    return 2;
  }
}
