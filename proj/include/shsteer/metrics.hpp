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
#include <cmath>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "shsteer/common.hpp"
#include "shsteer/track.hpp"
#include "shsteer/trial_log.hpp"

namespace shsteer {

struct TrialMetrics {
  double rms_driver_torque = 0.0;    // N m
  double rms_swa = 0.0;              // deg
  double max_pos_swa = 0.0;          // deg
  double min_neg_swa = 0.0;          // deg
  double lateral_error_lc1 = 0.0;    // m
  double lateral_error_lc2 = 0.0;    // m
  double rms_normalized_semg = 0.0;  // %
  bool lc1_fallback = false;
  bool lc2_fallback = false;

  friend bool operator==(const TrialMetrics&, const TrialMetrics&) = default;
};

// The dependent measures in report order.
enum class Measure {
  RmsDriverTorque,
  RmsSwa,
  MaxPosSwa,
  MinNegSwa,
  LateralErrorLc1,
  LateralErrorLc2,
  RmsNormalizedSemg
};

inline constexpr std::array<Measure, 7> kAllMeasures = {Measure::RmsDriverTorque, Measure::RmsSwa,
                                                        Measure::MaxPosSwa,       Measure::MinNegSwa,
                                                        Measure::LateralErrorLc1, Measure::LateralErrorLc2,
                                                        Measure::RmsNormalizedSemg};

constexpr std::string_view measure_key(Measure m) {
  switch (m) {
    case Measure::RmsDriverTorque: return "rms_driver_torque";
    case Measure::RmsSwa: return "rms_swa";
    case Measure::MaxPosSwa: return "max_pos_swa";
    case Measure::MinNegSwa: return "min_neg_swa";
    case Measure::LateralErrorLc1: return "lateral_error_lc1";
    case Measure::LateralErrorLc2: return "lateral_error_lc2";
    case Measure::RmsNormalizedSemg: return "rms_normalized_semg";
  }
  return "?";
}

constexpr std::string_view measure_label(Measure m) {
  switch (m) {
    case Measure::RmsDriverTorque: return "RMS of driver input torque (N m)";
    case Measure::RmsSwa: return "RMS of steering wheel angle (deg)";
    case Measure::MaxPosSwa: return "Max positive steering wheel angle (deg)";
    case Measure::MinNegSwa: return "Min negative steering wheel angle (deg)";
    case Measure::LateralErrorLc1: return "Lateral error at 1st lane change (m)";
    case Measure::LateralErrorLc2: return "Lateral error at 2nd lane change (m)";
    case Measure::RmsNormalizedSemg: return "RMS of normalized sEMG (%)";
  }
  return "?";
}

constexpr double measure_value(const TrialMetrics& t, Measure m) {
  switch (m) {
    case Measure::RmsDriverTorque: return t.rms_driver_torque;
    case Measure::RmsSwa: return t.rms_swa;
    case Measure::MaxPosSwa: return t.max_pos_swa;
    case Measure::MinNegSwa: return t.min_neg_swa;
    case Measure::LateralErrorLc1: return t.lateral_error_lc1;
    case Measure::LateralErrorLc2: return t.lateral_error_lc2;
    case Measure::RmsNormalizedSemg: return t.rms_normalized_semg;
  }
  return 0.0;
}

// Vehicle counts as parallel to the lane within this yaw tolerance.
inline constexpr double kParallelToleranceDeg = 0.5;

namespace detail {

struct LaneChangeEnd {
  double error = 0.0;
  bool fallback = false;
};

// Lateral error after a lane change, measured from `lane_center`. `entered`
// tests whether a record lies beyond the lane boundary; the first parallel
// instant after that crossing gives the error. Without one, the first record
// at or past `section_end` is used instead.
template <typename Entered>
LaneChangeEnd lane_change_end(std::span<const StepRecord> rows, std::size_t from, Entered entered,
                              double lane_center, double section_end, double search_limit) {
  const double tol = deg_to_rad(kParallelToleranceDeg);
  std::size_t i = from;
  while (i < rows.size() && !entered(rows[i])) ++i;
  for (std::size_t j = i; j < rows.size() && rows[j].x < search_limit; ++j) {
    if (std::abs(wrap_angle(rows[j].psi)) < tol) return {std::abs(rows[j].y - lane_center), false};
  }
  for (std::size_t j = from; j < rows.size(); ++j) {
    if (rows[j].x >= section_end) return {std::abs(rows[j].y - lane_center), true};
  }
  return {std::abs(rows.back().y - lane_center), true};
}

inline double rms(std::span<const StepRecord> rows, double StepRecord::*field, double scale = 1.0) {
  double sum = 0.0;
  for (const auto& r : rows) {
    const double v = r.*field * scale;
    sum += v * v;
  }
  return std::sqrt(sum / static_cast<double>(rows.size()));
}

}  // namespace detail

// Records whose x lies inside the layout's maneuver window, in log order.
inline std::vector<StepRecord> window_records(std::span<const StepRecord> records, const TrackLayout& layout) {
  const auto [lo, hi] = layout.maneuver_window();
  std::vector<StepRecord> out;
  for (const auto& r : records) {
    if (r.x >= lo && r.x <= hi) out.push_back(r);
  }
  return out;
}

// The road runs along +x, so lane heading is zero.
inline TrialMetrics compute_trial_metrics(std::span<const StepRecord> records, const TrackLayout& layout) {
  const auto rows = window_records(records, layout);
  if (rows.empty()) throw InputError("no log records inside the maneuver window");

  TrialMetrics m;
  m.rms_driver_torque = detail::rms(rows, &StepRecord::driver_torque);
  m.rms_swa = detail::rms(rows, &StepRecord::phi_deg);
  m.rms_normalized_semg = detail::rms(rows, &StepRecord::activation, 100.0);
  const auto [lo, hi] = std::minmax_element(rows.begin(), rows.end(), [](const StepRecord& a, const StepRecord& b) {
    return a.phi_deg < b.phi_deg;
  });
  m.max_pos_swa = hi->phi_deg;
  m.min_neg_swa = lo->phi_deg;

  const double sign = layout.lateral_sign;
  const double boundary = 0.5 * layout.lane_width;
  const auto lc1 = detail::lane_change_end(
      rows, 0, [&](const StepRecord& r) { return sign * r.y >= boundary; }, layout.lane_center(1), layout.lc1_end(),
      layout.lc2_begin());
  m.lateral_error_lc1 = lc1.error;
  m.lc1_fallback = lc1.fallback;

  std::size_t start = 0;
  while (start < rows.size() && rows[start].x < layout.lc1_end()) ++start;
  const auto lc2 = detail::lane_change_end(
      rows, start, [&](const StepRecord& r) { return sign * r.y <= boundary; }, layout.lane_center(0),
      layout.lc2_end(), std::numeric_limits<double>::infinity());
  m.lateral_error_lc2 = lc2.error;
  m.lc2_fallback = lc2.fallback;
  return m;
}

inline TrialMetrics compute_trial_metrics(const TrialLog& log, const TrackLayout& layout) {
  if (log.meta.aborted) throw InputError("metrics need a completed trial: " + log.meta.failure);
  return compute_trial_metrics(log.records, layout);
}

}  // namespace shsteer
