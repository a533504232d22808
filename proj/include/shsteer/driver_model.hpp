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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "shsteer/common.hpp"
#include "shsteer/guidance.hpp"
#include "shsteer/rng.hpp"

namespace shsteer {

// Simulated driver: two-point visual preview, PI on the near angle, reaction
// delay and a first-order neuromuscular lag.
struct DriverParams {
  double k_near = 2.0;        // N m / rad
  double k_far = 8.0;         // N m / rad
  double k_integral = 0.3;    // N m / (rad s)
  double lag = 0.1;           // s
  double delay = 0.15;        // s
  double torque_limit = 15.0; // N m
  std::uint64_t jitter_seed = 0;

  void validate() const {
    if (!(k_near >= 0.0 && k_far >= 0.0 && k_integral >= 0.0)) throw ConfigError("driver gains must be >= 0");
    if (!(lag > 0.0 && delay >= 0.0 && torque_limit > 0.0)) {
      throw ConfigError("driver lag and torque limit must be positive");
    }
  }

  friend bool operator==(const DriverParams&, const DriverParams&) = default;
};

class DriverModel {
 public:
  DriverModel(const DriverParams& params, double dt)
      : params_(params),
        dt_(dt),
        lag_alpha_(1.0 - std::exp(-dt / params.lag)),
        delay_line_(delay_steps(params, dt), 0.0) {}

  // Visual command before delay and lag.
  double command(const PreviewErrors& e) {
    const double near_angle = std::atan2(e.e_y_near, e.near_distance);
    if (params_.k_integral > 0.0) {
      const double bound = params_.torque_limit / params_.k_integral;
      integral_ = std::clamp(integral_ + near_angle * dt_, -bound, bound);
    }
    return params_.k_near * near_angle + params_.k_far * e.e_theta_far + params_.k_integral * integral_;
  }

  double torque(const PreviewErrors& e) { return apply_dynamics(command(e)); }

  // Delay line then lag then clamp; also usable with an external command.
  double apply_dynamics(double command) {
    require_finite(command, "driver command");
    double delayed = command;
    if (!delay_line_.empty()) {
      delayed = delay_line_[head_];
      delay_line_[head_] = command;
      head_ = (head_ + 1) % delay_line_.size();
    }
    output_ = clamp_abs(output_ + lag_alpha_ * (delayed - output_), params_.torque_limit);
    return output_;
  }

  double output() const { return output_; }
  const DriverParams& params() const { return params_; }

 private:
  static std::size_t delay_steps(const DriverParams& params, double dt) {
    params.validate();
    if (!(dt > 0.0)) throw InputError("dt must be positive");
    return static_cast<std::size_t>(std::lround(params.delay / dt));
  }

  DriverParams params_;
  double dt_;
  double lag_alpha_;
  std::vector<double> delay_line_;
  std::size_t head_ = 0;
  double integral_ = 0.0;
  double output_ = 0.0;
};

struct GripSchedule {
  double baseline = 0.2;
  double sensitivity = 0.0;   // grip per N m of opposing haptic torque; 0 disables
  double threshold = 1.0;     // N m
  double rate_limit = 1.0;    // 1/s

  void validate() const {
    if (!(baseline >= 0.0 && baseline <= 1.0)) throw ConfigError("grip baseline must be in [0,1]");
    if (!(sensitivity >= 0.0 && threshold >= 0.0 && rate_limit > 0.0)) throw ConfigError("invalid grip schedule");
  }
};

inline constexpr double kMaxGrip = 1.2;
inline constexpr double kConflictDeadband = 0.1;  // N m

// Grip tightens when the driver pushes against the guidance torque.
class GripController {
 public:
  explicit GripController(GripSchedule schedule) : schedule_(schedule), grip_(schedule.baseline) {
    schedule_.validate();
  }

  double update(double haptic_torque, double driver_torque, double dt) {
    if (!(dt > 0.0)) throw InputError("dt must be positive");
    if (schedule_.sensitivity == 0.0) return grip_ = schedule_.baseline;
    const bool conflict = std::abs(haptic_torque) > kConflictDeadband &&
                          std::abs(driver_torque) > kConflictDeadband &&
                          std::signbit(haptic_torque) != std::signbit(driver_torque);
    double target = schedule_.baseline;
    if (conflict) {
      target += schedule_.sensitivity * std::max(0.0, std::abs(haptic_torque) - schedule_.threshold);
    }
    target = std::clamp(target, 0.0, kMaxGrip);
    const double step = schedule_.rate_limit * dt;
    grip_ = std::clamp(grip_ + std::clamp(target - grip_, -step, step), 0.0, kMaxGrip);
    return grip_;
  }

  double grip() const { return grip_; }

 private:
  GripSchedule schedule_;
  double grip_;
};

inline constexpr double kGainJitterLow = 0.8;
inline constexpr double kGainJitterHigh = 1.25;
inline constexpr double kTimingJitter = 0.2;

// Virtual participant: log-uniform gain factors in [0.8, 1.25], timing +-20%.
inline DriverParams sample_virtual_subject(const DriverParams& base, std::uint64_t seed) {
  base.validate();
  Rng rng(seed);
  auto gain_factor = [&] { return std::exp(rng.uniform(std::log(kGainJitterLow), std::log(kGainJitterHigh))); };
  DriverParams p = base;
  p.k_near = base.k_near * gain_factor();
  p.k_far = base.k_far * gain_factor();
  p.k_integral = base.k_integral * gain_factor();
  p.lag = base.lag * rng.uniform(1.0 - kTimingJitter, 1.0 + kTimingJitter);
  p.delay = base.delay * rng.uniform(1.0 - kTimingJitter, 1.0 + kTimingJitter);
  p.jitter_seed = seed;
  return p;
}

}  // namespace shsteer
