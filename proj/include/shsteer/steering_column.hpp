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

#include "shsteer/common.hpp"

namespace shsteer {

inline constexpr double kHapticTorqueCap = 5.0;        // N m at the wheel
inline constexpr double kMaxMotorTorque = 5.0;         // N m before reduction
inline constexpr double kMotorReductionRatio = 1.0 / 14.0;
inline constexpr double kMaxWheelTorque = kMaxMotorTorque / kMotorReductionRatio;  // 70 N m
inline constexpr double kAngleResolutionDeg = 0.1;
inline constexpr double kTorqueResolution = 0.005;

struct ColumnParams {
  double inertia = 0.08;             // kg m^2
  double damping = 0.2;              // N m s/rad
  double lock_angle = 2.5 * 2.0 * kPi;  // rad, hard stop
};

struct SteeringColumnState {
  double angle = 0.0;  // rad, positive steers left
  double rate = 0.0;   // rad/s
  double driver_torque = 0.0;
  double haptic_torque = 0.0;
  double aligning_torque = 0.0;

  double total_torque() const { return driver_torque + haptic_torque + aligning_torque; }
  friend bool operator==(const SteeringColumnState&, const SteeringColumnState&) = default;
};

// J * phi'' = Td + Th + Ta - B * phi', semi-implicit Euler, hard stop at the lock.
inline SteeringColumnState step_column(const SteeringColumnState& s, double driver_torque, double haptic_torque,
                                       double aligning_torque, double dt, const ColumnParams& p = {}) {
  require_finite(driver_torque, "driver torque");
  require_finite(haptic_torque, "haptic torque");
  require_finite(aligning_torque, "aligning torque");
  if (!(dt > 0.0)) throw InputError("dt must be positive");
  if (std::abs(haptic_torque) > kHapticTorqueCap) throw InputError("haptic torque above cap");

  SteeringColumnState n;
  n.driver_torque = driver_torque;
  n.haptic_torque = haptic_torque;
  n.aligning_torque = aligning_torque;
  const double accel = (n.total_torque() - p.damping * s.rate) / p.inertia;
  n.rate = s.rate + dt * accel;
  n.angle = s.angle + dt * n.rate;
  if (n.angle > p.lock_angle) {
    n.angle = p.lock_angle;
    n.rate = std::min(n.rate, 0.0);
  } else if (n.angle < -p.lock_angle) {
    n.angle = -p.lock_angle;
    n.rate = std::max(n.rate, 0.0);
  }
  return n;
}

inline double quantize(double value, double resolution) {
  return std::round(value / resolution) * resolution;
}

struct SensorReading {
  double angle_deg = 0.0;
  double torque = 0.0;
};

// Measurement channel only; the integrator never sees quantized values.
inline SensorReading quantize_sensors(double angle_deg, double torque) {
  return {quantize(angle_deg, kAngleResolutionDeg), quantize(torque, kTorqueResolution)};
}

struct ActuatorCommand {
  double current = 0.0;       // A
  double motor_torque = 0.0;  // N m before reduction
  double wheel_torque = 0.0;  // N m after reduction
  bool saturated = false;
};

inline constexpr double kDefaultTorqueConstant = 0.25;  // N m / A

inline ActuatorCommand torque_to_current(double wheel_torque, double torque_constant = kDefaultTorqueConstant) {
  require_finite(wheel_torque, "wheel torque");
  ActuatorCommand cmd;
  cmd.saturated = std::abs(wheel_torque) > kMaxWheelTorque;
  cmd.wheel_torque = clamp_abs(wheel_torque, kMaxWheelTorque);
  cmd.motor_torque = cmd.wheel_torque * kMotorReductionRatio;
  cmd.current = cmd.motor_torque / torque_constant;
  return cmd;
}

}  // namespace shsteer
