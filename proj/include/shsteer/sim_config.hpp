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
#include <string_view>

#include "shsteer/driver_model.hpp"
#include "shsteer/guidance.hpp"
#include "shsteer/semg.hpp"
#include "shsteer/steering_column.hpp"
#include "shsteer/track.hpp"
#include "shsteer/vehicle.hpp"

namespace shsteer {

// Where the normalized activation r comes from.
//   Synthetic: grip -> simulated 8-channel sEMG -> RMS envelope -> r.
//   Ideal:     r equals the grip command (noise-free sensor).
enum class EmgSource { Synthetic, Ideal };

enum class TrackKind { DoubleLaneChange, Straight };

constexpr std::string_view emg_source_name(EmgSource s) { return s == EmgSource::Ideal ? "ideal" : "synthetic"; }
constexpr std::string_view track_kind_name(TrackKind k) { return k == TrackKind::Straight ? "straight" : "dlc"; }

struct SimConfig {
  double internal_rate = 600.0;  // Hz
  double log_rate = 120.0;       // Hz, vehicle record stream
  double max_duration = 60.0;    // s
  std::uint64_t master_seed = 1;
  double corridor = TargetPath::kDefaultCorridor;

  TrackKind track_kind = TrackKind::DoubleLaneChange;
  TrackLayout track = TrackLayout::make_default();
  double straight_length = 300.0;
  double path_resolution = 0.05;

  VehicleParams vehicle;
  ColumnParams column;
  GuidanceConfig guidance;
  EnvelopeConfig envelope;  // sample_rate doubles as the sEMG tick rate
  EmgSource emg_source = EmgSource::Synthetic;
  DriverParams driver;
  GripSchedule grip;
  bool driver_enabled = true;

  double initial_offset = 0.0;  // m, left of the path start
  double initial_yaw = 0.0;     // rad, relative to the path start heading

  double dt() const { return 1.0 / internal_rate; }

  static bool divides(double rate, double base) {
    const double ratio = base / rate;
    return std::abs(ratio - std::round(ratio)) < 1e-9 && std::round(ratio) >= 1.0;
  }

  int steps_per_log() const { return static_cast<int>(std::lround(internal_rate / log_rate)); }
  int steps_per_emg() const { return static_cast<int>(std::lround(internal_rate / envelope.sample_rate)); }

  void validate() const {
    if (!(internal_rate > 0.0 && log_rate > 0.0 && envelope.sample_rate > 0.0)) {
      throw ConfigError("rates must be positive");
    }
    if (!divides(log_rate, internal_rate) || !divides(envelope.sample_rate, internal_rate)) {
      throw ConfigError("internal rate must be an integer multiple of the log and sEMG rates");
    }
    if (!(max_duration > 0.0)) throw ConfigError("max_duration must be positive");
    if (!(corridor > 0.0)) throw ConfigError("corridor must be positive");
    track.validate();
    vehicle.validate();
    guidance.validate();
    envelope.validate();
    driver.validate();
    grip.validate();
  }
};

}  // namespace shsteer
