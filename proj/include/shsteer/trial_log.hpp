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

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shsteer/common.hpp"
#include "shsteer/driver_model.hpp"
#include "shsteer/guidance.hpp"
#include "shsteer/semg.hpp"

namespace shsteer {

// One 120 Hz row. Angle and torques that pass through the sensors are
// stored quantized; everything else is the simulator's own value.
struct StepRecord {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double phi_deg = 0.0;
  double driver_torque = 0.0;
  double haptic_torque = 0.0;
  double aligning_torque = 0.0;
  double gain = 0.0;
  double activation = 0.0;  // normalized, r
  double e_y_near = 0.0;
  double e_theta_far = 0.0;
  double lane_offset = 0.0;  // signed offset from the target path, + left
  double grip = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

inline constexpr std::string_view kTrialCsvHeader = "t,x,y,psi,phi_deg,Td,Th,Ta,K,r,e_y_near,e_th_far,lane_offset,grip";

struct TrialMeta {
  int subject = 0;
  AuthorityMode condition = AuthorityMode::Manual;
  int trial = 0;
  std::uint64_t driver_seed = 0;
  std::uint64_t emg_seed = 0;
  std::string config_hash;
  double semg_ref = 0.0;
  DriverParams driver;
  bool aborted = false;
  bool truncated = false;
  std::string failure;
  std::int64_t internal_steps = 0;
  std::int64_t emg_ticks = 0;
};

struct TrialLog {
  TrialMeta meta;
  std::vector<StepRecord> records;
  std::vector<EnvelopeRecord> emg_records;
};

inline nlohmann::json meta_to_json(const TrialMeta& m) {
  return {{"subject", m.subject},
          {"condition", mode_name(m.condition)},
          {"trial", m.trial},
          {"driver_seed", m.driver_seed},
          {"emg_seed", m.emg_seed},
          {"config_hash", m.config_hash},
          {"semg_ref", m.semg_ref},
          {"driver",
           {{"k_near", m.driver.k_near},
            {"k_far", m.driver.k_far},
            {"k_integral", m.driver.k_integral},
            {"lag", m.driver.lag},
            {"delay", m.driver.delay},
            {"torque_limit", m.driver.torque_limit}}},
          {"aborted", m.aborted},
          {"truncated", m.truncated},
          {"failure", m.failure},
          {"internal_steps", m.internal_steps},
          {"emg_ticks", m.emg_ticks}};
}

inline void write_records_csv(std::ostream& os, const std::vector<StepRecord>& records) {
  os << kTrialCsvHeader << '\n';
  for (const auto& r : records) {
    const std::array<double, 14> row = {r.t,  r.x,        r.y,        r.psi,         r.phi_deg,
                                        r.driver_torque, r.haptic_torque, r.aligning_torque, r.gain,
                                        r.activation,    r.e_y_near,      r.e_theta_far,     r.lane_offset,
                                        r.grip};
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) os << ',';
      os << format_double(row[i]);
    }
    os << '\n';
  }
}

inline std::vector<StepRecord> read_records_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTrialCsvHeader) throw FormatError("unexpected trial CSV header");
  std::vector<StepRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<double, 14> v{};
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      if (n >= v.size()) throw FormatError("trial CSV row has too many columns");
      v[n++] = parse_double(cell);
    }
    if (n != v.size()) throw FormatError("trial CSV row has too few columns");
    out.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10], v[11], v[12], v[13]});
  }
  return out;
}

// Whole-log text: metadata block, 120 Hz records, then the sEMG stream.
inline std::string serialize(const TrialLog& log) {
  std::ostringstream os;
  os << meta_to_json(log.meta).dump(2) << '\n';
  write_records_csv(os, log.records);
  write_envelope_csv(os, log.emg_records);
  return os.str();
}

inline std::string records_text(const TrialLog& log) {
  std::ostringstream os;
  write_records_csv(os, log.records);
  return os.str();
}

// Writes <stem>.csv, <stem>.meta.json and <stem>.emg.csv.
inline void write_trial_files(const std::filesystem::path& dir, const std::string& stem, const TrialLog& log) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / (stem + ".csv"), std::ios::binary);
    write_records_csv(os, log.records);
  }
  {
    std::ofstream os(dir / (stem + ".meta.json"), std::ios::binary);
    os << meta_to_json(log.meta).dump(2) << '\n';
  }
  {
    std::ofstream os(dir / (stem + ".emg.csv"), std::ios::binary);
    write_envelope_csv(os, log.emg_records);
  }
}

}  // namespace shsteer
