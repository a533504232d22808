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

// JSON messages exchanged with a cockpit client. Every message is one JSON
// object with a string "type":
//
//   client -> server
//     input    {client_time, torque?, axis?, keys?{left,right,grip}, grip?,
//               start?, reset?, mode?}
//   server -> client
//     hello    {config_hash, track{...}, rates{...}, modes[...]}
//     state    {t, step, x, y, psi, phi_deg, Td, Th, Ta, K, r, lane_offset,
//               e_y_near, e_theta_far, grip, station, phase, mode, cones, path}
//     summary  {aborted, failure, metrics?{...}}
//     error    {message}

#pragma once

#include <algorithm>
#include <cmath>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "shsteer/common.hpp"
#include "shsteer/guidance.hpp"
#include "shsteer/metrics.hpp"

namespace shsteer::teleop {

using nlohmann::json;

inline constexpr double kMaxTorqueCommand = 15.0;  // N m

struct KeyState {
  bool left = false;   // steer left: positive torque
  bool right = false;
  bool grip = false;

  friend bool operator==(const KeyState&, const KeyState&) = default;
};

// One client input. Torque and grip each come either as an analog value or
// from held keys; analog wins when both are present.
struct InputFrame {
  double client_time = 0.0;
  std::optional<double> torque;  // N m
  std::optional<KeyState> keys;
  std::optional<double> grip;  // analog, 0..1.2
  bool start = false;
  bool reset = false;
  std::optional<AuthorityMode> mode;

  friend bool operator==(const InputFrame&, const InputFrame&) = default;
};

namespace detail {

inline double number_field(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw FormatError(std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw FormatError(std::string("field '") + key + "' must be finite");
  return d;
}

inline bool bool_field(const json& j, const char* key) {
  if (!j.contains(key)) return false;
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw FormatError(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

}  // namespace detail

// Validates an input message. Throws FormatError for malformed messages and
// InputError for out-of-range commands.
inline InputFrame parse_input(const json& j) {
  if (!j.is_object()) throw FormatError("message must be a JSON object");
  if (!j.contains("type") || j.at("type") != "input") throw FormatError("expected a message of type 'input'");
  for (const auto& [key, value] : j.items()) {
    static constexpr std::string_view known[] = {"type", "client_time", "torque", "axis", "keys",
                                                 "grip", "start",       "reset",  "mode"};
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw FormatError("unknown input field '" + key + "'");
    }
  }
  InputFrame f;
  if (j.contains("client_time")) f.client_time = detail::number_field(j, "client_time");
  // "axis" is a normalized wheel axis in [-1, 1], scaled to the torque range.
  if (j.contains("torque") && j.contains("axis")) throw FormatError("send either 'torque' or 'axis', not both");
  if (j.contains("torque")) f.torque = detail::number_field(j, "torque");
  if (j.contains("axis")) {
    const double a = detail::number_field(j, "axis");
    if (std::abs(a) > 1.0) throw InputError("axis outside [-1, 1]");
    f.torque = a * kMaxTorqueCommand;
  }
  if (f.torque && std::abs(*f.torque) > kMaxTorqueCommand) throw InputError("torque command outside +-15 N m");
  if (j.contains("keys")) {
    const auto& k = j.at("keys");
    if (!k.is_object()) throw FormatError("'keys' must be an object");
    f.keys = KeyState{detail::bool_field(k, "left"), detail::bool_field(k, "right"), detail::bool_field(k, "grip")};
  }
  if (j.contains("grip")) {
    f.grip = detail::number_field(j, "grip");
    if (*f.grip < 0.0 || *f.grip > 1.2) throw InputError("grip outside [0, 1.2]");
  }
  f.start = detail::bool_field(j, "start");
  f.reset = detail::bool_field(j, "reset");
  if (j.contains("mode")) {
    if (!j.at("mode").is_string()) throw FormatError("'mode' must be a string");
    f.mode = parse_mode(j.at("mode").get<std::string>());
    if (!f.mode) throw InputError("unknown mode '" + j.at("mode").get<std::string>() + "'");
  }
  return f;
}

inline InputFrame parse_input(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what());
  }
  return parse_input(j);
}

// Canonical form used in traces; parse_input(to_json(f)) == f.
inline json to_json(const InputFrame& f) {
  json j{{"type", "input"}, {"client_time", f.client_time}};
  if (f.torque) j["torque"] = *f.torque;
  if (f.keys) j["keys"] = {{"left", f.keys->left}, {"right", f.keys->right}, {"grip", f.keys->grip}};
  if (f.grip) j["grip"] = *f.grip;
  if (f.start) j["start"] = true;
  if (f.reset) j["reset"] = true;
  if (f.mode) j["mode"] = mode_name(*f.mode);
  return j;
}

inline json error_message(std::string_view message) { return {{"type", "error"}, {"message", message}}; }

inline json metrics_json(const TrialMetrics& m) {
  json j;
  for (Measure k : kAllMeasures) j[std::string(measure_key(k))] = measure_value(m, k);
  j["lc1_fallback"] = m.lc1_fallback;
  j["lc2_fallback"] = m.lc2_fallback;
  return j;
}

}  // namespace shsteer::teleop
