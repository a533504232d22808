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

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "shsteer/common.hpp"
#include "shsteer/steering_column.hpp"
#include "shsteer/track.hpp"
#include "shsteer/vehicle.hpp"

namespace shsteer {

enum class AuthorityMode { Manual, HGStrong, HGNormal, HGDecrease, HGIncrease };

inline constexpr std::array<AuthorityMode, 5> kAllModes = {AuthorityMode::Manual, AuthorityMode::HGStrong,
                                                           AuthorityMode::HGNormal, AuthorityMode::HGDecrease,
                                                           AuthorityMode::HGIncrease};

// Condition labels as used in reports and on the wire.
constexpr std::string_view mode_name(AuthorityMode m) {
  switch (m) {
    case AuthorityMode::Manual: return "Manual";
    case AuthorityMode::HGStrong: return "HG-Strong";
    case AuthorityMode::HGNormal: return "HG-Normal";
    case AuthorityMode::HGDecrease: return "HG-Decrease";
    case AuthorityMode::HGIncrease: return "HG-Increase";
  }
  return "?";
}

constexpr int mode_index(AuthorityMode m) { return static_cast<int>(m); }

inline std::optional<AuthorityMode> parse_mode(std::string_view text) {
  std::string norm;
  for (char c : text) {
    if (c == '-' || c == '_' || c == ' ') continue;
    norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (norm == "manual") return AuthorityMode::Manual;
  if (norm == "hgstrong" || norm == "strong") return AuthorityMode::HGStrong;
  if (norm == "hgnormal" || norm == "normal") return AuthorityMode::HGNormal;
  if (norm == "hgdecrease" || norm == "hgdec" || norm == "decrease") return AuthorityMode::HGDecrease;
  if (norm == "hgincrease" || norm == "hginc" || norm == "increase") return AuthorityMode::HGIncrease;
  return std::nullopt;
}

constexpr bool is_adaptive(AuthorityMode m) {
  return m == AuthorityMode::HGDecrease || m == AuthorityMode::HGIncrease;
}

struct GuidanceConfig {
  double a1 = 0.19;            // N m per m of near-point lateral error
  double a2 = 3.8;             // N m per rad of far-point heading error
  double near_time = 0.3;      // s
  double far_time = 0.7;       // s
  double torque_cap = kHapticTorqueCap;
  AuthorityMode mode = AuthorityMode::Manual;
  double gain_smoothing = 0.1;  // s, 0 disables

  void validate() const {
    if (!(a1 >= 0.0 && a2 >= 0.0)) throw ConfigError("guidance gains must be non-negative");
    if (!(near_time > 0.0 && far_time > near_time)) throw ConfigError("need 0 < near_time < far_time");
    if (!(torque_cap > 0.0 && torque_cap <= kHapticTorqueCap)) throw ConfigError("torque cap must be in (0, 5]");
    if (!(gain_smoothing >= 0.0)) throw ConfigError("gain smoothing must be non-negative");
  }
};

struct PreviewErrors {
  double e_y_near = 0.0;     // m, positive when the path lies left of the vehicle
  double e_theta_far = 0.0;  // rad, path heading minus vehicle yaw
  double near_distance = 0.0;
  double far_distance = 0.0;
};

// Two-point preview from an existing projection of the vehicle onto the path.
// The near error is measured at the point the vehicle reaches after
// near_time at its current heading; the far error is the heading difference
// at far_time ahead along the path.
inline PreviewErrors preview_errors(const VehicleState& v, const TargetPath& path, const Projection& proj,
                                    const GuidanceConfig& cfg) {
  PreviewErrors e;
  e.near_distance = v.speed * cfg.near_time;
  e.far_distance = v.speed * cfg.far_time;
  const Vec2 dir = heading_vector(v.yaw);
  const Vec2 ahead = v.position() + e.near_distance * dir;
  e.e_y_near = cross(dir, path.at(proj.station + e.near_distance).position - ahead);
  e.e_theta_far = wrap_angle(path.at(proj.station + e.far_distance).heading - v.yaw);
  return e;
}

inline PreviewErrors preview_errors(const VehicleState& v, const TargetPath& path, const GuidanceConfig& cfg,
                                    double corridor = TargetPath::kDefaultCorridor) {
  return preview_errors(v, path, path.project(v.position(), corridor), cfg);
}

// Unclamped guidance torque.
inline double raw_guidance_torque(const PreviewErrors& e, double gain, const GuidanceConfig& cfg) {
  return gain * (cfg.a1 * e.e_y_near + cfg.a2 * e.e_theta_far);
}

inline double guidance_torque(const PreviewErrors& e, double gain, const GuidanceConfig& cfg) {
  require_finite(e.e_y_near, "near lateral error");
  require_finite(e.e_theta_far, "far heading error");
  if (!(gain >= 0.0 && gain <= 1.0)) throw InputError("authority gain outside [0,1]");
  return clamp_abs(raw_guidance_torque(e, gain, cfg), cfg.torque_cap);
}

// Target authority for a normalized activation r, before smoothing.
inline double authority_target(AuthorityMode mode, double r) {
  if (!(r >= 0.0)) throw InputError("normalized activation must be non-negative");
  switch (mode) {
    case AuthorityMode::Manual: return 0.0;
    case AuthorityMode::HGStrong: return 1.0;
    case AuthorityMode::HGNormal: return 0.5;
    case AuthorityMode::HGDecrease: return std::clamp(1.0 - r, 0.0, 1.0);
    case AuthorityMode::HGIncrease: return std::clamp(r, 0.0, 1.0);
  }
  return 0.0;
}

struct AuthorityOutput {
  double gain = 0.0;
  double activation = 0.0;
};

// Authority with optional first-order smoothing; `previous` is the caller's
// smoother state (nullopt on the first call, which starts at the target).
inline AuthorityOutput authority_gain(AuthorityMode mode, double r, std::optional<double> previous, double dt,
                                      double smoothing_time = 0.0) {
  const double target = authority_target(mode, r);
  AuthorityOutput out{target, r};
  if (smoothing_time > 0.0 && previous) {
    const double alpha = 1.0 - std::exp(-dt / smoothing_time);
    out.gain = std::clamp(*previous + alpha * (target - *previous), 0.0, 1.0);
  }
  return out;
}

}  // namespace shsteer
