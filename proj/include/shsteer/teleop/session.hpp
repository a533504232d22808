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

#pragma once

#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shsteer/config.hpp"
#include "shsteer/metrics.hpp"
#include "shsteer/sim_engine.hpp"
#include "shsteer/teleop/protocol.hpp"

namespace shsteer::teleop {

// Hash over everything that influences a session's outcome.
inline json session_config_json(const ExperimentConfig& cfg) {
  const auto& t = cfg.teleop;
  return {{"sim", shsteer::to_json(cfg.sim)},
          {"teleop",
           {{"broadcast_rate", t.broadcast_rate},
            {"autostart", t.autostart},
            {"key_torque_rate", t.key_torque_rate},
            {"key_torque_cap", t.key_torque_cap},
            {"grip_ramp_time", t.grip_ramp_time},
            {"max_torque_command", t.max_torque_command}}}};
}

inline std::string session_hash(const ExperimentConfig& cfg) {
  return hex64(fnv1a64(session_config_json(cfg).dump()));
}

// ---------------------------------------------------------------------------
// Input trace
// ---------------------------------------------------------------------------

struct TraceEvent {
  std::int64_t tick = 0;  // internal steps executed before the frame took effect
  InputFrame frame;
};

struct TraceEnd {
  std::int64_t tick = 0;
  std::string reason;  // finished | expired | closed
};

struct Trace {
  std::string config_hash;
  json config;
  std::vector<TraceEvent> events;
  std::optional<TraceEnd> end;  // missing when the recording was cut short
};

// JSON lines: a header, one line per applied input, then an end record.
inline void write_trace(std::ostream& os, const Trace& t) {
  os << json{{"type", "trace"}, {"version", 1}, {"config_hash", t.config_hash}, {"config", t.config}}.dump() << '\n';
  for (const auto& e : t.events) os << json{{"tick", e.tick}, {"frame", to_json(e.frame)}}.dump() << '\n';
  if (t.end) os << json{{"type", "end"}, {"tick", t.end->tick}, {"reason", t.end->reason}}.dump() << '\n';
}

// A final line that does not parse is treated as a torn write.
inline Trace read_trace(std::istream& is) {
  Trace t;
  std::string line;
  if (!std::getline(is, line)) throw FormatError("empty trace");
  json head;
  try {
    head = json::parse(line);
  } catch (const json::parse_error&) {
    throw FormatError("trace header is not JSON");
  }
  if (!head.is_object() || head.value("type", "") != "trace") throw FormatError("missing trace header");
  t.config_hash = head.at("config_hash").get<std::string>();
  t.config = head.value("config", json::object());
  std::int64_t last_tick = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      if (is.peek() == std::char_traits<char>::eof()) break;
      throw FormatError("corrupt trace line");
    }
    if (t.end) throw FormatError("trace continues after its end record");
    if (j.value("type", "") == "end") {
      t.end = TraceEnd{j.at("tick").get<std::int64_t>(), j.at("reason").get<std::string>()};
      continue;
    }
    TraceEvent e{j.at("tick").get<std::int64_t>(), parse_input(j.at("frame"))};
    if (e.tick < last_tick) throw FormatError("trace ticks go backwards");
    last_tick = e.tick;
    t.events.push_back(std::move(e));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Session core
// ---------------------------------------------------------------------------

enum class Phase { Waiting, Running, Finished };

constexpr std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Waiting: return "waiting";
    case Phase::Running: return "running";
    case Phase::Finished: return "finished";
  }
  return "?";
}

// One human-driven trial, free of networking and wall-clock time. The
// server and offline replay drive the same object, which is what makes a
// recorded trace reproduce the live log.
class Session {
 public:
  explicit Session(const ExperimentConfig& cfg)
      : cfg_(cfg),
        hash_(session_hash(cfg)),
        path_(std::make_shared<const TargetPath>(make_path(cfg.sim))),
        subject_(prepare_subject(cfg.sim, 1)) {
    cfg_.validate();
    if (!SimConfig::divides(cfg_.teleop.broadcast_rate, cfg_.sim.internal_rate)) {
      throw ConfigError("internal rate must be an integer multiple of the broadcast rate");
    }
    steps_per_broadcast_ = static_cast<int>(std::lround(cfg_.sim.internal_rate / cfg_.teleop.broadcast_rate));
    trace_.config_hash = hash_;
    trace_.config = session_config_json(cfg_);
    restart();
    if (cfg_.teleop.autostart) {
      phase_ = Phase::Running;
      started_ = true;
    }
  }

  const std::string& config_hash() const { return hash_; }
  Phase phase() const { return phase_; }
  std::int64_t tick() const { return tick_; }
  int steps_per_broadcast() const { return steps_per_broadcast_; }
  const TrialLog& log() const { return sim_->log(); }
  const Trace& trace() const { return trace_; }
  const TargetPath& path() const { return *path_; }
  const ExperimentConfig& config() const { return cfg_; }

  // Makes `f` the held input from the next internal step on.
  void apply(const InputFrame& f) {
    if (phase_ == Phase::Finished || trace_.end) return;
    trace_.events.push_back({tick_, f});
    if (f.reset) {
      restart();
      phase_ = started_ ? Phase::Running : Phase::Waiting;
    }
    if (f.mode && *f.mode != mode_) {
      mode_ = *f.mode;
      sim_->set_mode(mode_);
    }
    if (f.start && phase_ == Phase::Waiting) phase_ = Phase::Running;
    if (phase_ == Phase::Running) started_ = true;
    held_ = f;
  }

  // One internal step with the held input. No-op unless running.
  void advance() {
    if (phase_ != Phase::Running) return;
    const double dt = cfg_.sim.dt();
    const auto& t = cfg_.teleop;

    double torque = 0.0;
    if (held_.torque) {
      torque = *held_.torque;
      key_torque_ = std::clamp(torque, -t.key_torque_cap, t.key_torque_cap);
    } else {
      const KeyState keys = held_.keys.value_or(KeyState{});
      const double target = t.key_torque_cap * ((keys.left ? 1.0 : 0.0) - (keys.right ? 1.0 : 0.0));
      const double max_step = t.key_torque_rate * dt;
      key_torque_ += std::clamp(target - key_torque_, -max_step, max_step);
      torque = key_torque_;
    }

    double grip = 0.0;
    if (held_.grip) {
      grip = *held_.grip;
      key_grip_ = std::min(grip, 1.0);
    } else {
      const bool held = held_.keys && held_.keys->grip;
      const double step = dt / t.grip_ramp_time;
      key_grip_ = std::clamp(key_grip_ + (held ? step : -step), 0.0, 1.0);
      grip = key_grip_;
    }

    sim_->step(ExternalInput{torque, grip});
    if (sim_->finished()) {
      phase_ = Phase::Finished;
      trace_.end = TraceEnd{tick_, "finished"};
      return;
    }
    ++tick_;
  }

  bool broadcast_due() const { return phase_ == Phase::Running && tick_ > 0 && tick_ % steps_per_broadcast_ == 0; }

  // Stops recording. Unfinished trials end with the truncation flag.
  void end(const std::string& reason) {
    if (trace_.end) return;
    if (!sim_->finished()) {
      sim_->mark_truncated();
      sim_->finish();
    }
    phase_ = Phase::Finished;
    trace_.end = TraceEnd{tick_, reason};
  }

  // Log end for a trace without an end record.
  void truncate() {
    if (!sim_->finished()) {
      sim_->mark_truncated();
      sim_->finish();
    }
    phase_ = Phase::Finished;
  }

  std::optional<TrialMetrics> metrics() const {
    const auto& log = sim_->log();
    if (log.meta.aborted || log.meta.truncated || cfg_.sim.track_kind != TrackKind::DoubleLaneChange) {
      return std::nullopt;
    }
    try {
      return compute_trial_metrics(log, cfg_.sim.track);
    } catch (const InputError&) {
      return std::nullopt;
    }
  }

  json hello() const {
    json cones = json::array();
    for (auto c : cfg_.sim.track.cone_positions) cones.push_back({c.x, c.y});
    json path = json::array();
    for (double s = path_->start(); s <= path_->end(); s += 1.0) {
      const auto p = path_->at(s).position;
      path.push_back({p.x, p.y});
    }
    json modes = json::array();
    for (auto m : kAllModes) modes.push_back(mode_name(m));
    return {{"type", "hello"},
            {"config_hash", hash_},
            {"track",
             {{"lane_width", cfg_.sim.track.lane_width},
              {"lane_count", cfg_.sim.track.lane_count},
              {"lateral_sign", cfg_.sim.track.lateral_sign},
              {"section_stations", cfg_.sim.track.section_stations},
              {"cones", cones},
              {"path", path}}},
            {"rates",
             {{"internal", cfg_.sim.internal_rate},
              {"broadcast", cfg_.teleop.broadcast_rate},
              {"log", cfg_.sim.log_rate}}},
            {"torque_cap", cfg_.sim.guidance.torque_cap},
            {"modes", modes},
            {"mode", mode_name(mode_)},
            {"phase", phase_name(phase_)}};
  }

  json state() const {
    const auto& s = sim_->snapshot();
    const auto q = quantize_sensors(rad_to_deg(s.column.angle), s.column.driver_torque);
    json cones = json::array();
    for (auto c : cfg_.sim.track.cone_positions) {
      if (c.x >= s.vehicle.x - kSnippetBehind && c.x <= s.vehicle.x + kSnippetAhead) cones.push_back({c.x, c.y});
    }
    json path = json::array();
    for (double d = -kSnippetBehind; d <= kSnippetAhead; d += 2.0) {
      const auto p = path_->at(s.station + d).position;
      path.push_back({p.x, p.y});
    }
    return {{"type", "state"},
            {"t", s.t},
            {"step", s.step},
            {"x", s.vehicle.x},
            {"y", s.vehicle.y},
            {"psi", s.vehicle.yaw},
            {"phi_deg", q.angle_deg},
            {"Td", q.torque},
            {"Th", quantize(s.column.haptic_torque, kTorqueResolution)},
            {"Ta", s.column.aligning_torque},
            {"K", s.gain},
            {"r", s.activation},
            {"lane_offset", s.lane_offset},
            {"e_y_near", s.errors.e_y_near},
            {"e_theta_far", s.errors.e_theta_far},
            {"grip", s.grip},
            {"station", s.station},
            {"phase", phase_name(phase_)},
            {"mode", mode_name(mode_)},
            {"cones", cones},
            {"path", path}};
  }

  json summary() const {
    const auto& meta = sim_->log().meta;
    json j{{"type", "summary"},
           {"aborted", meta.aborted},
           {"truncated", meta.truncated},
           {"failure", meta.failure},
           {"mode", mode_name(mode_)},
           {"duration", static_cast<double>(meta.internal_steps) / cfg_.sim.internal_rate}};
    if (auto m = metrics()) j["metrics"] = metrics_json(*m);
    return j;
  }

 private:
  static constexpr double kSnippetBehind = 10.0;  // m
  static constexpr double kSnippetAhead = 60.0;   // m

  void restart() {
    SimConfig sim = cfg_.sim;
    sim.guidance.mode = mode_;
    sim_ = std::make_unique<TrialSimulator>(sim, *path_, subject_, trial_meta(sim, subject_, 1));
    held_ = InputFrame{};
    key_torque_ = 0.0;
    key_grip_ = 0.0;
  }

  ExperimentConfig cfg_;
  std::string hash_;
  std::shared_ptr<const TargetPath> path_;
  SubjectSetup subject_;
  int steps_per_broadcast_ = 20;
  AuthorityMode mode_ = cfg_.sim.guidance.mode;
  std::unique_ptr<TrialSimulator> sim_;
  Phase phase_ = Phase::Waiting;
  bool started_ = false;
  std::int64_t tick_ = 0;
  InputFrame held_;
  double key_torque_ = 0.0;
  double key_grip_ = 0.0;
  Trace trace_;
};

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

struct ReplayResult {
  TrialLog log;
  std::vector<json> states;
  json summary;
  bool truncated = false;
};

// Re-runs a recorded session without pacing.
inline ReplayResult replay(const Trace& trace, const ExperimentConfig& cfg) {
  const std::string hash = session_hash(cfg);
  if (trace.config_hash != hash) {
    throw ReplayRefusedError("trace was recorded with config " + trace.config_hash + ", current config is " + hash);
  }
  Session s(cfg);
  ReplayResult out;
  const auto run_until = [&](std::int64_t tick) {
    while (s.tick() < tick && s.phase() == Phase::Running) {
      s.advance();
      if (s.broadcast_due()) out.states.push_back(s.state());
    }
  };
  for (const auto& e : trace.events) {
    run_until(e.tick);
    s.apply(e.frame);
  }
  if (trace.end) {
    if (trace.end->reason == "finished") {
      while (s.phase() == Phase::Running) {
        s.advance();
        if (s.broadcast_due()) out.states.push_back(s.state());
      }
    } else {
      run_until(trace.end->tick);
      s.end(trace.end->reason);
    }
  } else {
    s.truncate();
    out.truncated = true;
  }
  out.summary = s.summary();
  out.log = s.log();
  return out;
}

}  // namespace shsteer::teleop
