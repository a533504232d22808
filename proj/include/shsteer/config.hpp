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

// Experiment configuration file (TOML). Every key is optional; missing keys
// keep their defaults and unknown keys are rejected. See configs/default.toml
// for the full schema.

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "shsteer/sim_config.hpp"

namespace shsteer {

enum class Ordering { LatinSquare, Fixed };

struct ExperimentPlan {
  int subjects = 10;
  int trials_per_condition = 5;
  std::vector<AuthorityMode> conditions{kAllModes.begin(), kAllModes.end()};
  Ordering ordering = Ordering::LatinSquare;
  std::string output_dir = "results";
  int threads = 0;  // 0 = hardware concurrency
  bool write_logs = true;
  // Run post hoc comparisons even without a significant omnibus F (flagged).
  bool posthoc_always = true;

  void validate() const {
    if (subjects < 1) throw ConfigError("need at least one subject");
    if (trials_per_condition < 1) throw ConfigError("need at least one trial per condition");
    if (conditions.empty()) throw ConfigError("need at least one condition");
    if (ordering == Ordering::LatinSquare && subjects > 2 * static_cast<int>(conditions.size())) {
      throw ConfigError("Latin-square ordering supports at most 2 x conditions subjects");
    }
  }
};

struct TeleopConfig {
  int port = 8765;
  double broadcast_rate = 30.0;     // Hz
  double pace = 1.0;                // wall-clock speed factor
  bool autostart = false;
  double disconnect_timeout = 30.0; // s
  double key_torque_rate = 4.0;     // N m / s
  double key_torque_cap = 6.0;      // N m
  double grip_ramp_time = 1.0;      // s for a held grip key to reach 1.0
  double max_torque_command = 15.0; // N m, accepted input range

  void validate() const {
    if (port < 0 || port > 65535) throw ConfigError("port out of range");
    if (!(broadcast_rate > 0.0 && pace > 0.0 && disconnect_timeout > 0.0)) {
      throw ConfigError("teleop rates must be positive");
    }
    if (!(key_torque_rate > 0.0 && key_torque_cap > 0.0 && grip_ramp_time > 0.0)) {
      throw ConfigError("teleop input mapping must be positive");
    }
  }
};

struct ExperimentConfig {
  SimConfig sim;
  ExperimentPlan plan;
  TeleopConfig teleop;

  void validate() const {
    sim.validate();
    plan.validate();
    teleop.validate();
  }
};

// ---------------------------------------------------------------------------
// JSON view of the simulation config (hashing and session headers)
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const SimConfig& c) {
  using nlohmann::json;
  json cones = json::array();
  for (auto p : c.track.cone_positions) cones.push_back({p.x, p.y});
  const auto& v = c.vehicle;
  return json{
      {"sim",
       {{"internal_rate", c.internal_rate},
        {"log_rate", c.log_rate},
        {"max_duration", c.max_duration},
        {"master_seed", c.master_seed},
        {"corridor", c.corridor},
        {"track_kind", track_kind_name(c.track_kind)},
        {"straight_length", c.straight_length},
        {"driver_enabled", c.driver_enabled},
        {"initial_offset", c.initial_offset},
        {"initial_yaw", c.initial_yaw}}},
      {"track",
       {{"lane_width", c.track.lane_width},
        {"section_stations", c.track.section_stations},
        {"cones", cones},
        {"lane_count", c.track.lane_count},
        {"lateral_sign", c.track.lateral_sign},
        {"path_resolution", c.path_resolution}}},
      {"vehicle",
       {{"mass", v.mass},
        {"yaw_inertia", v.yaw_inertia},
        {"lf", v.lf},
        {"lr", v.lr},
        {"cf", v.cf},
        {"cr", v.cr},
        {"steering_ratio", v.steering_ratio},
        {"target_speed", v.target_speed},
        {"pneumatic_trail", v.pneumatic_trail},
        {"rolling_resistance", v.rolling_resistance},
        {"drag_area", v.drag_area},
        {"air_density", v.air_density},
        {"speed_pid",
         {{"kp", v.speed_pid.kp}, {"ki", v.speed_pid.ki}, {"kd", v.speed_pid.kd}, {"max_force", v.speed_pid.max_force}}}}},
      {"column", {{"inertia", c.column.inertia}, {"damping", c.column.damping}, {"lock_angle", c.column.lock_angle}}},
      {"guidance",
       {{"a1", c.guidance.a1},
        {"a2", c.guidance.a2},
        {"near_time", c.guidance.near_time},
        {"far_time", c.guidance.far_time},
        {"torque_cap", c.guidance.torque_cap},
        {"mode", mode_name(c.guidance.mode)},
        {"gain_smoothing", c.guidance.gain_smoothing}}},
      {"semg",
       {{"sample_rate", c.envelope.sample_rate},
        {"window", c.envelope.window},
        {"source", emg_source_name(c.emg_source)}}},
      {"driver",
       {{"k_near", c.driver.k_near},
        {"k_far", c.driver.k_far},
        {"k_integral", c.driver.k_integral},
        {"lag", c.driver.lag},
        {"delay", c.driver.delay},
        {"torque_limit", c.driver.torque_limit}}},
      {"grip",
       {{"baseline", c.grip.baseline},
        {"sensitivity", c.grip.sensitivity},
        {"threshold", c.grip.threshold},
        {"rate_limit", c.grip.rate_limit}}}};
}

// Stable identifier of everything that influences a trial.
inline std::string config_hash(const SimConfig& c) { return hex64(fnv1a64(to_json(c).dump())); }

// ---------------------------------------------------------------------------
// TOML loading
// ---------------------------------------------------------------------------

namespace detail {

class TomlReader {
 public:
  explicit TomlReader(const toml::table& root) : root_(root) {}

  template <typename T>
  void read(std::string_view path, T& out) {
    const auto node = root_.at_path(path);
    if (!node) return;
    seen_.insert(std::string(path));
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node.value<bool>()) { out = *v; return; }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node.value<std::string>()) { out = *v; return; }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = node.value<double>()) { out = *v; return; }
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = node.value<std::int64_t>()) { out = static_cast<T>(*v); return; }
    }
    throw ConfigError("config key '" + std::string(path) + "' has the wrong type");
  }

  const toml::array* array(std::string_view path) {
    const auto node = root_.at_path(path);
    if (!node) return nullptr;
    seen_.insert(std::string(path));
    if (!node.is_array()) throw ConfigError("config key '" + std::string(path) + "' must be an array");
    return node.as_array();
  }

  // Every leaf key in the file must have been consumed.
  void check_unknown() const {
    std::vector<std::string> unknown;
    collect(root_, "", unknown);
    if (!unknown.empty()) {
      std::string msg = "unknown config key(s):";
      for (const auto& k : unknown) msg += " " + k;
      throw ConfigError(msg);
    }
  }

 private:
  void collect(const toml::table& t, const std::string& prefix, std::vector<std::string>& unknown) const {
    for (const auto& [key, node] : t) {
      const std::string path = prefix.empty() ? std::string(key.str()) : prefix + "." + std::string(key.str());
      if (const auto* sub = node.as_table()) {
        collect(*sub, path, unknown);
      } else if (!seen_.contains(path)) {
        unknown.push_back(path);
      }
    }
  }

  const toml::table& root_;
  std::set<std::string> seen_;
};

inline double array_number(const toml::node& n, std::string_view what) {
  if (auto v = n.value<double>()) return *v;
  throw ConfigError(std::string(what) + " entries must be numbers");
}

}  // namespace detail

inline ExperimentConfig load_config_toml(const toml::table& root) {
  ExperimentConfig cfg;
  detail::TomlReader r(root);
  auto& s = cfg.sim;

  r.read("sim.internal_rate", s.internal_rate);
  r.read("sim.log_rate", s.log_rate);
  r.read("sim.max_duration", s.max_duration);
  r.read("sim.master_seed", s.master_seed);
  r.read("sim.corridor", s.corridor);
  r.read("sim.driver_enabled", s.driver_enabled);
  r.read("sim.initial_offset", s.initial_offset);
  r.read("sim.initial_yaw", s.initial_yaw);
  r.read("sim.straight_length", s.straight_length);
  std::string kind(track_kind_name(s.track_kind));
  r.read("sim.track_kind", kind);
  if (kind == "dlc") s.track_kind = TrackKind::DoubleLaneChange;
  else if (kind == "straight") s.track_kind = TrackKind::Straight;
  else throw ConfigError("sim.track_kind must be 'dlc' or 'straight'");

  r.read("track.lane_width", s.track.lane_width);
  r.read("track.lane_count", s.track.lane_count);
  r.read("track.lateral_sign", s.track.lateral_sign);
  r.read("track.path_resolution", s.path_resolution);
  if (const auto* arr = r.array("track.section_stations")) {
    s.track.section_stations.clear();
    for (const auto& n : *arr) s.track.section_stations.push_back(detail::array_number(n, "track.section_stations"));
  }
  if (const auto* arr = r.array("track.cones")) {
    s.track.cone_positions.clear();
    for (const auto& n : *arr) {
      const auto* pair = n.as_array();
      if (!pair || pair->size() != 2) throw ConfigError("track.cones entries must be [x, y] pairs");
      s.track.cone_positions.push_back(
          {detail::array_number(*pair->get(0), "track.cones"), detail::array_number(*pair->get(1), "track.cones")});
    }
  } else {
    s.track.validate();
    s.track.cone_positions = TrackLayout::default_cones(s.track);
  }

  auto& v = s.vehicle;
  r.read("vehicle.mass", v.mass);
  r.read("vehicle.yaw_inertia", v.yaw_inertia);
  r.read("vehicle.lf", v.lf);
  r.read("vehicle.lr", v.lr);
  r.read("vehicle.cf", v.cf);
  r.read("vehicle.cr", v.cr);
  r.read("vehicle.steering_ratio", v.steering_ratio);
  double speed_kmh = mps_to_kmh(v.target_speed);
  r.read("vehicle.target_speed_kmh", speed_kmh);
  v.target_speed = kmh_to_mps(speed_kmh);
  r.read("vehicle.pneumatic_trail", v.pneumatic_trail);
  r.read("vehicle.rolling_resistance", v.rolling_resistance);
  r.read("vehicle.drag_area", v.drag_area);
  r.read("vehicle.air_density", v.air_density);
  r.read("vehicle.speed_pid.kp", v.speed_pid.kp);
  r.read("vehicle.speed_pid.ki", v.speed_pid.ki);
  r.read("vehicle.speed_pid.kd", v.speed_pid.kd);
  r.read("vehicle.speed_pid.max_force", v.speed_pid.max_force);

  r.read("column.inertia", s.column.inertia);
  r.read("column.damping", s.column.damping);
  double lock_turns = s.column.lock_angle / (2.0 * kPi);
  r.read("column.lock_turns", lock_turns);
  s.column.lock_angle = lock_turns * 2.0 * kPi;

  auto& g = s.guidance;
  r.read("guidance.a1", g.a1);
  r.read("guidance.a2", g.a2);
  r.read("guidance.near_time", g.near_time);
  r.read("guidance.far_time", g.far_time);
  r.read("guidance.torque_cap", g.torque_cap);
  r.read("guidance.gain_smoothing", g.gain_smoothing);
  std::string mode(mode_name(g.mode));
  r.read("guidance.mode", mode);
  if (auto m = parse_mode(mode)) g.mode = *m;
  else throw ConfigError("unknown guidance.mode '" + mode + "'");

  r.read("semg.sample_rate", s.envelope.sample_rate);
  r.read("semg.window", s.envelope.window);
  std::string source(emg_source_name(s.emg_source));
  r.read("semg.source", source);
  if (source == "synthetic") s.emg_source = EmgSource::Synthetic;
  else if (source == "ideal") s.emg_source = EmgSource::Ideal;
  else throw ConfigError("semg.source must be 'synthetic' or 'ideal'");

  r.read("driver.k_near", s.driver.k_near);
  r.read("driver.k_far", s.driver.k_far);
  r.read("driver.k_integral", s.driver.k_integral);
  r.read("driver.lag", s.driver.lag);
  r.read("driver.delay", s.driver.delay);
  r.read("driver.torque_limit", s.driver.torque_limit);

  r.read("grip.baseline", s.grip.baseline);
  r.read("grip.sensitivity", s.grip.sensitivity);
  r.read("grip.threshold", s.grip.threshold);
  r.read("grip.rate_limit", s.grip.rate_limit);

  auto& p = cfg.plan;
  r.read("experiment.subjects", p.subjects);
  r.read("experiment.trials_per_condition", p.trials_per_condition);
  r.read("experiment.output_dir", p.output_dir);
  r.read("experiment.threads", p.threads);
  r.read("experiment.write_logs", p.write_logs);
  r.read("experiment.posthoc_always", p.posthoc_always);
  std::string ordering = p.ordering == Ordering::LatinSquare ? "latin" : "fixed";
  r.read("experiment.ordering", ordering);
  if (ordering == "latin") p.ordering = Ordering::LatinSquare;
  else if (ordering == "fixed") p.ordering = Ordering::Fixed;
  else throw ConfigError("experiment.ordering must be 'latin' or 'fixed'");
  if (const auto* arr = r.array("experiment.conditions")) {
    p.conditions.clear();
    for (const auto& n : *arr) {
      auto name = n.value<std::string>();
      auto m = name ? parse_mode(*name) : std::nullopt;
      if (!m) throw ConfigError("unknown condition in experiment.conditions");
      p.conditions.push_back(*m);
    }
  }

  auto& t = cfg.teleop;
  r.read("teleop.port", t.port);
  r.read("teleop.broadcast_rate", t.broadcast_rate);
  r.read("teleop.pace", t.pace);
  r.read("teleop.autostart", t.autostart);
  r.read("teleop.disconnect_timeout", t.disconnect_timeout);
  r.read("teleop.key_torque_rate", t.key_torque_rate);
  r.read("teleop.key_torque_cap", t.key_torque_cap);
  r.read("teleop.grip_ramp_time", t.grip_ramp_time);
  r.read("teleop.max_torque_command", t.max_torque_command);

  r.check_unknown();
  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config(std::string_view text) {
  try {
    return load_config_toml(toml::parse(text));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error: " << e.description() << " at " << e.source().begin;
    throw ConfigError(msg.str());
  }
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path) {
  try {
    return load_config_toml(toml::parse_file(path.string()));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config parse error in " << path.string() << ": " << e.description() << " at " << e.source().begin;
    throw ConfigError(msg.str());
  }
}

}  // namespace shsteer
