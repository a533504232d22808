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

#include "shsteer/common.hpp"

namespace shsteer {

struct SpeedPidGains {
  double kp = 3000.0;       // N per m/s
  double ki = 2500.0;       // N per m
  double kd = 0.0;          // N per m/s^2
  double max_force = 6000.0;  // N, both directions
};

struct VehicleParams {
  double mass = 1500.0;          // kg
  double yaw_inertia = 2500.0;   // kg m^2
  double lf = 1.2;               // m, CG to front axle
  double lr = 1.6;               // m, CG to rear axle
  double cf = 80000.0;           // N/rad
  double cr = 80000.0;           // N/rad
  double steering_ratio = 16.0;
  double target_speed = kmh_to_mps(50.0);
  double pneumatic_trail = 0.012; // m
  double rolling_resistance = 0.015;
  double drag_area = 0.7;         // Cd*A, m^2
  double air_density = 1.2;       // kg/m^3
  SpeedPidGains speed_pid;

  double wheelbase() const { return lf + lr; }

  // Understeer gradient K_us in s^2/m (rad per m/s^2 of lateral acceleration / L).
  double understeer_gradient() const { return mass / wheelbase() * (lr / cf - lf / cr); }

  void validate() const {
    if (!(mass > 0 && yaw_inertia > 0 && lf > 0 && lr > 0 && cf > 0 && cr > 0 && steering_ratio > 0 &&
          target_speed > 0 && pneumatic_trail >= 0)) {
      throw ConfigError("vehicle parameters must be positive");
    }
  }
};

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double lateral_velocity = 0.0;
  double yaw_rate = 0.0;
  double speed = 0.0;  // longitudinal, body frame

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

inline constexpr double kLowSpeedCutoff = 0.5;  // m/s

// Front slip angle in the force-producing sign convention: positive slip
// produces a positive (leftward) lateral force F = C * alpha.
inline double front_slip_angle(const VehicleState& v, double road_wheel_angle, const VehicleParams& p) {
  return road_wheel_angle - (v.lateral_velocity + p.lf * v.yaw_rate) / v.speed;
}

// Aligning torque at the steering wheel. Opposes front slip, so it pulls the
// wheel back toward the direction of travel.
inline double aligning_torque_from_slip(double front_slip, const VehicleParams& p) {
  return -(p.pneumatic_trail * p.cf * front_slip) / p.steering_ratio;
}

inline double aligning_torque(const VehicleState& v, double steering_wheel_angle, const VehicleParams& p) {
  if (v.speed < kLowSpeedCutoff) return 0.0;
  return aligning_torque_from_slip(front_slip_angle(v, steering_wheel_angle / p.steering_ratio, p), p);
}

inline double resistance_force(double speed, const VehicleParams& p) {
  constexpr double kGravity = 9.81;
  if (speed <= 0.0) return 0.0;
  return p.rolling_resistance * p.mass * kGravity + 0.5 * p.air_density * p.drag_area * speed * speed;
}

// Linear single-track model. Body velocities advance first; the pose is then
// integrated with the updated velocities (semi-implicit Euler).
inline VehicleState step_vehicle(const VehicleState& s, double steering_wheel_angle, const VehicleParams& p,
                                 double dt, double drive_force = 0.0) {
  require_finite(steering_wheel_angle, "steering wheel angle");
  require_finite(drive_force, "drive force");
  if (!(dt > 0.0)) throw InputError("dt must be positive");

  VehicleState n = s;
  double vy_dot = 0.0;
  double r_dot = 0.0;
  if (s.speed >= kLowSpeedCutoff) {
    const double delta = steering_wheel_angle / p.steering_ratio;
    const double alpha_f = front_slip_angle(s, delta, p);
    const double alpha_r = -(s.lateral_velocity - p.lr * s.yaw_rate) / s.speed;
    const double fyf = p.cf * alpha_f;
    const double fyr = p.cr * alpha_r;
    vy_dot = (fyf + fyr) / p.mass - s.speed * s.yaw_rate;
    r_dot = (p.lf * fyf - p.lr * fyr) / p.yaw_inertia;
  } else {
    n.lateral_velocity = 0.0;
    n.yaw_rate = s.speed * std::tan(steering_wheel_angle / p.steering_ratio) / p.wheelbase();
  }
  const double v_dot = (drive_force - resistance_force(s.speed, p)) / p.mass;

  if (s.speed >= kLowSpeedCutoff) {
    n.lateral_velocity = s.lateral_velocity + dt * vy_dot;
    n.yaw_rate = s.yaw_rate + dt * r_dot;
  }
  n.speed = std::max(0.0, s.speed + dt * v_dot);
  n.yaw = wrap_angle(s.yaw + dt * n.yaw_rate);
  const double c = std::cos(n.yaw);
  const double sn = std::sin(n.yaw);
  n.x = s.x + dt * (n.speed * c - n.lateral_velocity * sn);
  n.y = s.y + dt * (n.speed * sn + n.lateral_velocity * c);

  require_finite(n.x, "vehicle x");
  require_finite(n.y, "vehicle y");
  require_finite(n.yaw_rate, "vehicle yaw rate");
  require_finite(n.lateral_velocity, "vehicle lateral velocity");
  return n;
}

// Closed-form steady-state yaw rate of the linear model: v*delta/(L + K_us v^2).
inline double steady_state_yaw_rate(double speed, double road_wheel_angle, const VehicleParams& p) {
  return speed * road_wheel_angle / (p.wheelbase() + p.understeer_gradient() * speed * speed);
}

// PID speed hold with a clamped integrator.
class SpeedController {
 public:
  explicit SpeedController(SpeedPidGains gains = {}) : gains_(gains) {}

  // Starts the integrator at the value that balances `trim_force`.
  void trim(double trim_force) {
    integrator_ = gains_.ki > 0.0 ? std::clamp(trim_force / gains_.ki, -limit(), limit()) : 0.0;
  }

  double integrator() const { return integrator_; }

  double update(double speed, double target, double dt) {
    if (speed < 0.0) throw InputError("speed must be non-negative");
    const double error = target - speed;
    const double derivative = has_prev_ ? (error - prev_error_) / dt : 0.0;
    prev_error_ = error;
    has_prev_ = true;
    integrator_ = std::clamp(integrator_ + error * dt, -limit(), limit());
    const double force = gains_.kp * error + gains_.ki * integrator_ + gains_.kd * derivative;
    return std::clamp(force, -gains_.max_force, gains_.max_force);
  }

 private:
  double limit() const { return gains_.ki > 0.0 ? gains_.max_force / gains_.ki : 0.0; }

  SpeedPidGains gains_;
  double integrator_ = 0.0;
  double prev_error_ = 0.0;
  bool has_prev_ = false;
};

}  // namespace shsteer
