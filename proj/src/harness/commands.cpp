// Copyright 2026 The LoopScope Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

#include "loopscope/checkpoint.hpp"
#include "loopscope/harness.hpp"

#ifndef LOOPSCOPE_VERSION
#define LOOPSCOPE_VERSION "unknown"
#endif

namespace loopscope::harness {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, std::string hash, const std::vector<std::string>& columns)
      : out_(path), hash_(std::move(hash)) {
    if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
    out_ << "config_hash";
    for (const auto& c : columns) out_ << ',' << c;
    out_ << '\n';
  }

  void row(const std::vector<std::string>& cells) {
    out_ << hash_;
    for (const auto& c : cells) out_ << ',' << c;
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::string hash_;
};

fs::path artifact(const ExperimentConfig& cfg, const std::string& name) {
  return fs::path(cfg.output_dir) / (cfg.run_id + "_" + name);
}

void prepare_output(const ExperimentConfig& cfg) { fs::create_directories(cfg.output_dir); }

void record_manifest(const ExperimentConfig& cfg, const std::string& command,
                     const std::vector<fs::path>& artifacts, const nlohmann::json& extra) {
  const fs::path path = artifact(cfg, "manifest.json");
  nlohmann::json m = nlohmann::json::object();
  if (fs::exists(path)) {
    std::ifstream in(path);
    m = nlohmann::json::parse(in, nullptr, false);
    if (m.is_discarded() || !m.is_object()) m = nlohmann::json::object();
  }
  m["run_id"] = cfg.run_id;
  m["config_hash"] = experiment_hash(cfg);
  m["seed"] = cfg.seed;
  m["code_version"] = LOOPSCOPE_VERSION;
  m["config_version"] = cfg.version;
  nlohmann::json entry = extra;
  nlohmann::json files = nlohmann::json::array();
  for (const auto& a : artifacts) files.push_back(a.filename().string());
  entry["artifacts"] = files;
  m["commands"][command] = entry;
  std::ofstream out(path);
  out << m.dump(2) << '\n';
}

std::string checkpoint_label(const std::string& path) {
  return fs::path(path).stem().string();
}

RecurrentModel load_model(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("missing checkpoint '" + path + "'");
  return model_from_checkpoint(load_checkpoint(path));
}

std::vector<std::size_t> budgets(const ExperimentConfig& cfg) {
  return cfg.fixed_budgets.empty() ? std::vector<std::size_t>{cfg.k_max} : cfg.fixed_budgets;
}

geometry::IterateTrace token_trace(const GroupTrace& g, std::size_t token) {
  geometry::IterateTrace t;
  t.group = g.group;
  t.token = token;
  for (const auto& s : g.states) {
    const auto row = s.row(token);
    t.states.emplace_back(row.begin(), row.end());
  }
  return t;
}

const std::vector<std::string> kRecordColumns = {
    "checkpoint", "seq", "group", "token", "k", "step_norm", "normalized_step",
    "cosine", "acceleration", "normalized_accel"};
const std::vector<std::string> kCurveColumns = {"checkpoint", "group", "metric", "k",
                                                "mean", "std", "count"};
const std::vector<std::string> kTrajectoryColumns = {"checkpoint", "seq", "token", "stage",
                                                     "k", "pc1", "pc2"};

void write_records(CsvWriter& w, const std::string& label, std::size_t seq,
                   std::size_t group, std::size_t token, const geometry::StepStats& s) {
  for (std::size_t k = 0; k < s.step_norms.size(); ++k) {
    const bool paired = k >= 1;
    w.row({label, std::to_string(seq), std::to_string(group), std::to_string(token),
           std::to_string(k), fmt(s.step_norms[k]), fmt(s.normalized_steps[k]),
           paired ? fmt(s.cosines[k - 1]) : "", paired ? fmt(s.accelerations[k - 1]) : "",
           paired ? fmt(s.normalized_accels[k - 1]) : ""});
  }
}

void write_curves(CsvWriter& w, const std::string& label, std::size_t group,
                  const geometry::AggregateStats& a) {
  const std::vector<std::pair<std::string, const geometry::AggregateCurve*>> metrics = {
      {"step_norm", &a.step_norms},
      {"normalized_step", &a.normalized_steps},
      {"cosine", &a.cosines},
      {"acceleration", &a.accelerations},
      {"normalized_accel", &a.normalized_accels}};
  for (const auto& [name, c] : metrics) {
    for (std::size_t i = 0; i < c->k.size(); ++i) {
      w.row({label, std::to_string(group), name, std::to_string(c->k[i]), fmt(c->mean[i]),
             fmt(c->stddev[i]), std::to_string(c->count[i])});
    }
  }
}

DiagnoseOutcome diagnose_spiral(const ExperimentConfig& cfg, const std::string& hash,
                                std::vector<fs::path>& files) {
  const auto& dc = cfg.diagnose;
  if (dc.spirals.empty()) throw ConfigError("diagnose.source=spiral needs diagnose.spirals");
  std::vector<geometry::IterateTrace> traces;
  std::vector<std::string> stage;
  if (!dc.drift.block_jumps.empty()) {
    auto two = spiral::generate_two_scale_trace(dc.spirals, dc.drift, dc.steps_per_segment);
    traces.push_back(two.trace);
    for (const auto& l : two.labels) stage.push_back("segment" + std::to_string(l.segment));
  } else {
    for (std::size_t i = 0; i < dc.spirals.size(); ++i) {
      auto t = spiral::simulate(dc.spirals[i], dc.steps_per_segment);
      t.token = i;
      traces.push_back(std::move(t));
    }
  }
  const std::string label = "spiral";
  files = {artifact(cfg, "diagnostics.csv"), artifact(cfg, "curves.csv"),
           artifact(cfg, "trajectory.csv")};
  CsvWriter rec(files[0], hash, kRecordColumns);
  CsvWriter cur(files[1], hash, kCurveColumns);
  CsvWriter traj(files[2], hash, kTrajectoryColumns);
  std::vector<geometry::StepStats> stats;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    stats.push_back(geometry::step_stats(traces[i]));
    write_records(rec, label, 0, 0, i, stats.back());
  }
  DiagnoseOutcome out;
  out.curves.push_back({label, {geometry::aggregate(stats)}});
  write_curves(cur, label, 0, out.curves.back().groups[0]);

  std::vector<geometry::Vec> all;
  for (const auto& t : traces) all.insert(all.end(), t.states.begin(), t.states.end());
  const auto proj = geometry::fit_pca(all);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto pts = geometry::project_trajectory(proj, traces[i]);
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const std::string st = stage.empty() ? "spiral" + std::to_string(i) : stage[k];
      traj.row({label, "0", std::to_string(i), st, std::to_string(k), fmt(pts[k][0]),
                fmt(pts[k][1])});
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> checkpoint_paths(const ExperimentConfig& cfg) {
  if (!cfg.checkpoints.empty()) return cfg.checkpoints;
  std::vector<std::string> out;
  if (cfg.train.checkpoint_at_start) out.push_back(artifact(cfg, "ckpt_0.bin").string());
  for (std::size_t s = cfg.train.checkpoint_every; s <= cfg.train.steps;
       s += cfg.train.checkpoint_every) {
    out.push_back(artifact(cfg, "ckpt_" + std::to_string(s) + ".bin").string());
  }
  return out;
}

std::vector<std::vector<int>> eval_prompts(const ExperimentConfig& cfg) {
  const std::string path = cfg.eval_corpus.empty() ? cfg.train.corpus : cfg.eval_corpus;
  if (path.empty()) throw ConfigError("no eval corpus configured");
  const auto toks = train::byte_tokenize(train::read_file(path));
  if (toks.empty()) throw std::invalid_argument("eval corpus '" + path + "' is empty");
  return train::make_eval_set(toks, cfg.eval_seq_len, cfg.eval_sequences);
}

TrainOutcome cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  prepare_output(cfg);
  const std::string hash = experiment_hash(cfg);
  const auto corpus = train::byte_tokenize(train::read_file(cfg.train.corpus));
  RecurrentModel model(cfg.model, cfg.recurrence);
  train::Trainer trainer(cfg.train, model, cfg.recurrence, corpus);

  TrainOutcome out;
  train::EvalOptions eo;
  eo.k_max = cfg.k_max;
  eo.seed = cfg.seed;
  const auto prompts = eval_prompts(cfg);
  out.initial_ce = train::eval_ce_ppl(model, cfg.recurrence, prompts, eo).ce;
  log << "initial eval CE " << fmt(out.initial_ce) << "\n";

  const fs::path log_path = artifact(cfg, "train_log.csv");
  CsvWriter w(log_path, hash, {"step", "loss", "lr", "grad_norm"});
  trainer.run(
      [&](const train::TrainLogRow& r) {
        out.log.push_back(r);
        w.row({std::to_string(r.step), fmt(r.loss), fmt(r.lr), fmt(r.grad_norm)});
        if (r.step % 100 == 0) log << "step " << r.step << " loss " << fmt(r.loss) << "\n";
      },
      [&](const Checkpoint& c) {
        const auto path = artifact(cfg, "ckpt_" + std::to_string(c.step) + ".bin");
        save_checkpoint(path.string(), c);
        out.checkpoint_paths.push_back(path.string());
      });
  out.final_loss = out.log.empty() ? 0.0 : out.log.back().loss;
  std::vector<fs::path> files{log_path};
  for (const auto& p : out.checkpoint_paths) files.emplace_back(p);
  record_manifest(cfg, "train", files,
                  {{"initial_ce", out.initial_ce}, {"prompt_hash", prompt_hash(prompts)}});
  return out;
}

EvalOutcome cmd_eval(const ExperimentConfig& cfg, std::ostream& log) {
  prepare_output(cfg);
  const std::string hash = experiment_hash(cfg);
  const auto paths = checkpoint_paths(cfg);
  if (paths.empty()) throw ConfigError("no checkpoint to evaluate");
  const auto model = load_model(paths.back());
  const auto prompts = eval_prompts(cfg);
  const std::string ph = prompt_hash(prompts);
  const fs::path path = artifact(cfg, "eval.csv");
  CsvWriter w(path, hash, {"checkpoint", "prompt_hash", "k_max", "ce", "ppl", "mean_steps",
                           "tokens", "ms_per_token"});
  EvalOutcome out;
  out.checkpoint = checkpoint_label(paths.back());
  for (std::size_t b : budgets(cfg)) {
    train::EvalOptions eo;
    eo.k_max = b;
    eo.seed = cfg.seed;
    const auto r = train::eval_ce_ppl(model, cfg.recurrence, prompts, eo);
    double steps = 0.0;
    for (double s : r.mean_steps) steps += s / static_cast<double>(r.mean_steps.size());
    w.row({out.checkpoint, ph, std::to_string(b), fmt(r.ce), fmt(r.ppl), fmt(steps),
           std::to_string(r.tokens), fmt(r.ms_per_token)});
    log << "eval k_max=" << b << " CE " << fmt(r.ce) << " PPL " << fmt(r.ppl) << "\n";
    out.result = r;
  }
  record_manifest(cfg, "eval", {path}, {{"prompt_hash", ph}});
  return out;
}

DiagnoseOutcome cmd_diagnose(const ExperimentConfig& cfg, std::ostream& log) {
  prepare_output(cfg);
  const std::string hash = experiment_hash(cfg);
  std::vector<fs::path> files;
  if (cfg.diagnose.source == "spiral") {
    auto out = diagnose_spiral(cfg, hash, files);
    record_manifest(cfg, "diagnose", files, {{"source", "spiral"}});
    log << "diagnose: spiral traces written\n";
    return out;
  }
  const auto paths = checkpoint_paths(cfg);
  if (paths.empty()) throw ConfigError("diagnose needs at least one checkpoint");
  const auto prompts = eval_prompts(cfg);
  files = {artifact(cfg, "diagnostics.csv"), artifact(cfg, "curves.csv"),
           artifact(cfg, "trajectory.csv")};
  CsvWriter rec(files[0], hash, kRecordColumns);
  CsvWriter cur(files[1], hash, kCurveColumns);
  CsvWriter traj(files[2], hash, kTrajectoryColumns);
  DiagnoseOutcome out;
  NoGradGuard no_grad;
  for (const auto& path : paths) {
    const auto model = load_model(path);
    const std::string label = checkpoint_label(path);
    const std::size_t n_groups = cfg.recurrence.groups.size();
    std::vector<std::vector<geometry::StepStats>> per_group(n_groups);
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const std::span<const int> inputs(prompts[i].data(), prompts[i].size() - 1);
      Rng rng(cfg.seed + i);
      ForwardOptions fo;
      fo.trace = true;
      fo.loop_counts = std::vector<std::size_t>(n_groups, cfg.diagnose.loops);
      const auto result = model.forward(inputs, cfg.recurrence, rng, fo);
      for (std::size_t g = 0; g < n_groups; ++g) {
        for (std::size_t t = 0; t < inputs.size(); ++t) {
          per_group[g].push_back(geometry::step_stats(token_trace(result.traces[g], t)));
          write_records(rec, label, i, g, t, per_group[g].back());
        }
      }
      if (i < cfg.diagnose.trajectory_sequences) {
        std::vector<geometry::Vec> all;
        for (const auto& st : result.stages) {
          for (std::size_t t = 0; t < inputs.size(); ++t) {
            const auto row = st.state.row(t);
            all.emplace_back(row.begin(), row.end());
          }
        }
        const auto proj = geometry::fit_pca(all);
        for (std::size_t t = 0; t < inputs.size(); ++t) {
          for (const auto& st : result.stages) {
            const auto p = geometry::project_point(proj, st.state.row(t));
            traj.row({label, std::to_string(i), std::to_string(t), st.label,
                      std::to_string(st.k), fmt(p[0]), fmt(p[1])});
          }
        }
      }
    }
    CheckpointCurves cc;
    cc.checkpoint = label;
    for (std::size_t g = 0; g < n_groups; ++g) {
      cc.groups.push_back(geometry::aggregate(per_group[g]));
      write_curves(cur, label, g, cc.groups.back());
    }
    log << "diagnose: " << label << " done\n";
    out.curves.push_back(std::move(cc));
  }
  record_manifest(cfg, "diagnose", files, {{"prompt_hash", prompt_hash(prompts)}});
  return out;
}

SweepOutcome cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  prepare_output(cfg);
  const std::string hash = experiment_hash(cfg);
  const auto paths = checkpoint_paths(cfg);
  if (paths.empty()) throw ConfigError("sweep needs a checkpoint");
  const auto model = load_model(paths.back());
  const auto prompts = eval_prompts(cfg);
  SweepOutcome out;
  out.prompt_hash = prompt_hash(prompts);
  const std::size_t n_groups = cfg.recurrence.groups.size();

  std::vector<std::string> cols{"prompt_hash", "policy", "tau", "k_max", "ce", "ppl",
                                "mean_steps"};
  for (std::size_t g = 0; g < n_groups; ++g) cols.push_back("mean_steps_g" + std::to_string(g));
  for (const char* c : {"tokens", "decoder_calls", "ms_per_token"}) cols.emplace_back(c);
  const fs::path sweep_path = artifact(cfg, "sweep.csv");
  const fs::path exits_path = artifact(cfg, "exits.csv");
  CsvWriter sw(sweep_path, hash, cols);
  CsvWriter ew(exits_path, hash, {"seq", "token", "group", "policy", "tau", "steps_used",
                                  "exited_early", "reason"});

  auto emit = [&](SweepRow row) {
    std::vector<std::string> cells{out.prompt_hash, row.policy, fmt(row.tau),
                                   std::to_string(row.k_max), fmt(row.ce), fmt(row.ppl),
                                   fmt(row.mean_steps)};
    for (double s : row.mean_steps_per_group) cells.push_back(fmt(s));
    cells.push_back(std::to_string(row.tokens));
    cells.push_back(std::to_string(row.decoder_calls));
    cells.push_back(fmt(row.ms_per_token));
    sw.row(cells);
    log << "sweep " << row.policy << " tau=" << fmt(row.tau) << " CE " << fmt(row.ce)
        << " steps " << fmt(row.mean_steps) << "\n";
    out.rows.push_back(std::move(row));
  };
  auto to_row = [&](const std::string& policy, std::optional<double> tau, std::size_t k_max,
                    const train::EvalResult& r) {
    SweepRow row;
    row.policy = policy;
    row.tau = tau;
    row.k_max = k_max;
    row.ce = r.ce;
    row.ppl = r.ppl;
    row.mean_steps_per_group = r.mean_steps;
    for (double s : r.mean_steps) row.mean_steps += s / static_cast<double>(n_groups);
    row.tokens = r.tokens;
    row.decoder_calls = r.decoder_calls;
    row.ms_per_token = r.ms_per_token;
    return row;
  };

  for (std::size_t b : budgets(cfg)) {
    train::EvalOptions eo;
    eo.k_max = b;
    eo.seed = cfg.seed;
    emit(to_row("fixed", std::nullopt, b, train::eval_ce_ppl(model, cfg.recurrence, prompts, eo)));
  }
  for (const auto& policy : cfg.policies) {
    for (double tau : cfg.tau_grid) {
      nlohmann::json j = cfg.exit;
      j["policy"] = policy;
      j["tau"] = tau;
      j["k_max"] = cfg.k_max;
      train::EvalOptions eo;
      eo.k_max = cfg.k_max;
      eo.seed = cfg.seed;
      eo.exit = j.get<exit::ExitConfig>();
      eo.keep_decisions = true;
      const auto r = train::eval_ce_ppl(model, cfg.recurrence, prompts, eo);
      for (std::size_t s = 0; s < r.decisions.size(); ++s) {
        for (std::size_t g = 0; g < r.decisions[s].size(); ++g) {
          for (std::size_t t = 0; t < r.decisions[s][g].size(); ++t) {
            const auto& d = r.decisions[s][g][t];
            ew.row({std::to_string(s), std::to_string(t), std::to_string(g), policy, fmt(tau),
                    std::to_string(d.steps_used), d.exited_early ? "1" : "0",
                    exit::reason_name(d.reason)});
          }
        }
      }
      emit(to_row(policy, tau, cfg.k_max, r));
    }
  }
  record_manifest(cfg, "sweep", {sweep_path, exits_path}, {{"prompt_hash", out.prompt_hash}});
  return out;
}

OracleReport cmd_oracle(const ExperimentConfig& cfg, std::ostream& log) {
  prepare_output(cfg);
  const std::string hash = experiment_hash(cfg);
  const auto report = run_oracle(cfg.oracle, cfg.tau_grid);
  const fs::path path = artifact(cfg, "oracle.csv");
  CsvWriter w(path, hash, {"check", "rho", "theta_deg", "policy", "tau", "expected",
                           "observed", "pass"});
  std::size_t failed = 0;
  for (const auto& c : report.checks) {
    w.row({c.check, fmt(c.rho), fmt(c.theta_deg), c.policy, c.policy.empty() ? "" : fmt(c.tau),
           fmt(c.expected), fmt(c.observed), c.pass ? "1" : "0"});
    if (!c.pass) {
      ++failed;
      log << "FAIL " << c.check << " rho=" << fmt(c.rho) << " theta=" << fmt(c.theta_deg)
          << " " << c.policy << " tau=" << fmt(c.tau) << " expected " << fmt(c.expected)
          << " observed " << fmt(c.observed) << "\n";
    }
  }
  log << "oracle: " << report.checks.size() - failed << "/" << report.checks.size()
      << " checks passed\n";
  record_manifest(cfg, "oracle", {path}, {{"checks", report.checks.size()}, {"failed", failed}});
  return report;
}

int run_subcommand(const std::string& name, const ExperimentConfig& cfg, std::ostream& log) {
  if (name == "train") {
    cmd_train(cfg, log);
  } else if (name == "eval") {
    cmd_eval(cfg, log);
  } else if (name == "diagnose") {
    cmd_diagnose(cfg, log);
  } else if (name == "sweep") {
    cmd_sweep(cfg, log);
  } else if (name == "oracle") {
    return cmd_oracle(cfg, log).all_pass() ? 0 : 1;
  } else {
    throw ConfigError("unknown subcommand '" + name + "'");
  }
  return 0;
}

}  // namespace loopscope::harness
