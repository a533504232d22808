// Copyright 2026 The shsteer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// shsteer command-line front end.
//
// Exit codes: 0 ok, 1 trial failures (or a runtime error), 2 configuration
// or usage error.

#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "shsteer/shsteer.hpp"
#include "shsteer/teleop/server.hpp"

namespace fs = std::filesystem;
using namespace shsteer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailures = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

AuthorityMode mode_arg(const std::string& text) {
  auto m = parse_mode(text);
  if (!m) throw ConfigError("unknown mode '" + text + "' (Manual, HGStrong, HGNormal, HGDecrease, HGIncrease)");
  return *m;
}

ExperimentConfig load(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config_file(o.config);
  if (o.seed) cfg.sim.master_seed = *o.seed;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_out = true) {
  cmd->add_option("--config", o.config, "TOML configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "master seed, overrides sim.master_seed");
  if (with_out) cmd->add_option("--out", o.out, "output directory");
}

int cmd_calibrate(const CommonOptions& o, int subject) {
  const auto cfg = load(o);
  if (subject < 1) throw ConfigError("--subject counts from 1");
  const SubjectSetup s = prepare_subject(cfg.sim, subject);
  nlohmann::json j{{"subject", subject},
                   {"master_seed", cfg.sim.master_seed},
                   {"semg_ref", s.calibration.reference},
                   {"reps", s.calibration.reps},
                   {"noise_floor", s.noise_floor}};
  std::cout << j.dump(2) << '\n';
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    char name[48];
    std::snprintf(name, sizeof name, "calibration_s%02d.json", subject);
    write_text_file(fs::path(o.out) / name, j.dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_trial(const CommonOptions& o, const std::string& mode, int subject, int trial, bool no_driver,
              bool export_path) {
  auto cfg = load(o);
  if (!mode.empty()) cfg.sim.guidance.mode = mode_arg(mode);
  if (no_driver) cfg.sim.driver_enabled = false;
  if (subject < 1 || trial < 1) throw ConfigError("--subject and --trial count from 1");
  const TargetPath path = make_path(cfg.sim);
  const SubjectSetup s = prepare_subject(cfg.sim, subject);
  const TrialLog log = run_trial(cfg.sim, path, s, trial);

  nlohmann::json j{{"subject", subject},
                   {"condition", mode_name(cfg.sim.guidance.mode)},
                   {"trial", trial},
                   {"aborted", log.meta.aborted},
                   {"failure", log.meta.failure},
                   {"duration", static_cast<double>(log.meta.internal_steps) / cfg.sim.internal_rate}};
  if (!log.meta.aborted && cfg.sim.track_kind == TrackKind::DoubleLaneChange) {
    j["metrics"] = teleop::metrics_json(compute_trial_metrics(log, cfg.sim.track));
  }
  std::cout << j.dump(2) << '\n';
  if (!o.out.empty()) {
    write_trial_files(o.out, trial_stem(subject, cfg.sim.guidance.mode, trial), log);
    if (export_path) {
      std::ofstream os(fs::path(o.out) / "path.csv", std::ios::binary);
      path.write_csv(os);
    }
  }
  return log.meta.aborted ? kExitFailures : kExitOk;
}

int cmd_batch(const CommonOptions& o, const std::vector<std::string>& modes, std::optional<int> subjects,
              std::optional<int> trials, std::optional<int> threads) {
  auto cfg = load(o);
  if (!modes.empty()) {
    cfg.plan.conditions.clear();
    for (const auto& m : modes) cfg.plan.conditions.push_back(mode_arg(m));
  }
  if (subjects) cfg.plan.subjects = *subjects;
  if (trials) cfg.plan.trials_per_condition = *trials;
  if (threads) cfg.plan.threads = *threads;
  cfg.validate();
  const fs::path dir = o.out.empty() ? fs::path(cfg.plan.output_dir) : fs::path(o.out);
  const BatchResult r = run_batch_to_dir(cfg, dir);
  std::cerr << "batch: " << r.trials.size() << " trials, " << r.failed() << " failed -> " << dir.string() << '\n';
  std::ifstream report(dir / "report.txt");
  std::cout << report.rdbuf();
  return r.failure_rate_exceeded() ? kExitFailures : kExitOk;
}

int cmd_report(const std::string& input, const std::string& out, bool posthoc_always) {
  fs::path metrics = input;
  if (fs::is_directory(metrics)) metrics /= "metrics.csv";
  std::ifstream is(metrics, std::ios::binary);
  if (!is) throw InputError("cannot read " + metrics.string());
  const auto rows = read_metrics_csv(is);
  const fs::path dir = out.empty() ? metrics.parent_path() : fs::path(out);
  if (!dir.empty()) fs::create_directories(dir);
  std::cout << write_report_files(dir.empty() ? fs::path(".") : dir, rows, posthoc_always);
  return kExitOk;
}

teleop::Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const CommonOptions& o, const std::string& mode, std::optional<int> port, std::optional<double> pace,
              bool once, bool autostart) {
  auto cfg = load(o);
  if (!mode.empty()) cfg.sim.guidance.mode = mode_arg(mode);
  if (port) cfg.teleop.port = *port;
  if (pace) cfg.teleop.pace = *pace;
  if (autostart) cfg.teleop.autostart = true;
  cfg.validate();
  teleop::ServerOptions opts;
  opts.out_dir = o.out.empty() ? fs::path("sessions") : fs::path(o.out);
  opts.single_session = once;
  opts.on_log = [](const std::string& line) { std::cerr << "serve: " << line << '\n'; };
  teleop::Server server(cfg, static_cast<unsigned short>(cfg.teleop.port), opts);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serve: listening on ws://127.0.0.1:" << server.port() << " config " << teleop::session_hash(cfg)
            << '\n';
  std::cout << "port " << server.port() << std::endl;
  server.run();
  g_server = nullptr;
  return kExitOk;
}

int cmd_replay(const CommonOptions& o, const std::string& trace_path, const std::string& mode) {
  auto cfg = load(o);
  if (!mode.empty()) cfg.sim.guidance.mode = mode_arg(mode);
  std::ifstream is(trace_path, std::ios::binary);
  if (!is) throw InputError("cannot read " + trace_path);
  const teleop::Trace trace = teleop::read_trace(is);
  const auto r = teleop::replay(trace, cfg);
  std::cout << r.summary.dump(2) << '\n';
  if (!o.out.empty()) {
    std::string stem = fs::path(trace_path).filename().string();
    if (auto pos = stem.find(".trace"); pos != std::string::npos) stem.resize(pos);
    write_trial_files(o.out, stem, r.log);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shsteer: shared-steering simulator with haptic guidance and sEMG-adaptive authority"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "shsteer 0.1.0");

  CommonOptions common;
  std::string mode;
  int subject = 1;
  int trial = 1;

  auto* calibrate = app.add_subcommand("calibrate", "run the MVC calibration protocol for one virtual subject");
  add_common(calibrate, common);
  calibrate->add_option("--subject", subject, "subject id, from 1");

  bool no_driver = false;
  bool export_path = false;
  auto* trial_cmd = app.add_subcommand("trial", "run one trial and print its metrics");
  add_common(trial_cmd, common);
  trial_cmd->add_option("--mode", mode, "authority mode");
  trial_cmd->add_option("--subject", subject, "subject id, from 1");
  trial_cmd->add_option("--trial", trial, "trial index, from 1");
  trial_cmd->add_flag("--no-driver", no_driver, "zero driver torque (guidance only)");
  trial_cmd->add_flag("--export-path", export_path, "also write path.csv (s,x,y,heading)");

  std::vector<std::string> modes;
  std::optional<int> subjects;
  std::optional<int> trials;
  std::optional<int> threads;
  auto* batch = app.add_subcommand("batch", "run the full experiment and write the results bundle");
  add_common(batch, common);
  batch->add_option("--mode", modes, "restrict to these conditions (repeatable)");
  batch->add_option("--subjects", subjects, "number of virtual subjects");
  batch->add_option("--trials", trials, "trials per condition");
  batch->add_option("--threads", threads, "worker threads, 0 = all cores");

  std::string report_in;
  bool posthoc_always = true;
  auto* report = app.add_subcommand("report", "recompute statistics from a metrics CSV");
  report->add_option("input", report_in, "results directory or metrics.csv")->required();
  report->add_option("--out", common.out, "output directory (default: next to the input)");
  report->add_flag("!--gate-posthoc", posthoc_always, "only run post hoc tests after a significant omnibus F");

  std::optional<int> port;
  std::optional<double> pace;
  bool once = false;
  bool autostart = false;
  auto* serve = app.add_subcommand("serve", "run the teleop WebSocket server");
  add_common(serve, common);
  serve->add_option("--mode", mode, "initial authority mode");
  serve->add_option("--port", port, "TCP port, 0 picks a free one");
  serve->add_option("--pace", pace, "wall-clock speed factor");
  serve->add_flag("--once", once, "exit after the first session ends");
  serve->add_flag("--autostart", autostart, "start the trial as soon as a client connects");

  std::string trace_path;
  auto* replay = app.add_subcommand("replay", "re-run a recorded teleop trace without pacing");
  add_common(replay, common);
  replay->add_option("--trace", trace_path, "trace file (.trace.jsonl)")->required()->check(CLI::ExistingFile);
  replay->add_option("--mode", mode, "initial authority mode used when recording");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*calibrate) return cmd_calibrate(common, subject);
    if (*trial_cmd) return cmd_trial(common, mode, subject, trial, no_driver, export_path);
    if (*batch) return cmd_batch(common, modes, subjects, trials, threads);
    if (*report) return cmd_report(report_in, common.out, posthoc_always);
    if (*serve) return cmd_serve(common, mode, port, pace, once, autostart);
    if (*replay) return cmd_replay(common, trace_path, mode);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ReplayRefusedError& e) {
    std::cerr << "replay refused: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailures;
  }
  return kExitOk;
}
