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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "shsteer/common.hpp"
#include "shsteer/rng.hpp"

namespace shsteer {

inline constexpr std::size_t kEmgChannels = 8;

struct EmgFrame {
  double t = 0.0;
  std::array<double, kEmgChannels> channels{};

  static EmgFrame from_values(double t, std::span<const double> values) {
    if (values.size() != kEmgChannels) {
      throw FormatError("sEMG frame needs 8 channels, got " + std::to_string(values.size()));
    }
    EmgFrame f{t, {}};
    for (std::size_t i = 0; i < kEmgChannels; ++i) {
      require_finite(values[i], "sEMG sample");
      f.channels[i] = values[i];
    }
    return f;
  }
};

using EmgRecording = std::vector<EmgFrame>;

struct EnvelopeConfig {
  double sample_rate = 200.0;  // Hz
  double window = 0.15;        // s

  std::size_t window_samples() const { return static_cast<std::size_t>(std::lround(window * sample_rate)); }

  void validate() const {
    if (!(sample_rate > 0.0)) throw ConfigError("sEMG sample rate must be positive");
    if (window_samples() < 2) throw ConfigError("RMS window must span at least 2 samples");
  }
};

// Per-channel noise model of one virtual forearm: sigma_i = base_i + grip * gain_i.
struct EmgSubjectModel {
  std::array<double, kEmgChannels> base{};
  std::array<double, kEmgChannels> gain{};

  static EmgSubjectModel sample(std::uint64_t seed) {
    Rng rng(seed);
    EmgSubjectModel m;
    for (std::size_t i = 0; i < kEmgChannels; ++i) {
      m.base[i] = rng.uniform(0.01, 0.03);
      m.gain[i] = rng.uniform(0.15, 0.6);
    }
    return m;
  }

  // Expected aggregate activation at a given grip (mean of channel sigmas).
  double expected_activation(double grip) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < kEmgChannels; ++i) sum += base[i] + grip * gain[i];
    return sum / kEmgChannels;
  }
};

// Seeded sEMG-like generator standing in for the armband.
class EmgSynthesizer {
 public:
  EmgSynthesizer(EmgSubjectModel model, std::uint64_t seed) : model_(model), rng_(seed) {}

  EmgFrame next(double grip, double t) {
    if (!(grip >= 0.0)) throw InputError("grip must be non-negative");
    EmgFrame f;
    f.t = t;
    for (std::size_t i = 0; i < kEmgChannels; ++i) {
      f.channels[i] = (model_.base[i] + grip * model_.gain[i]) * rng_.normal();
    }
    return f;
  }

  const EmgSubjectModel& model() const { return model_; }

 private:
  EmgSubjectModel model_;
  Rng rng_;
};

struct EnvelopeSample {
  double t = 0.0;
  std::array<double, kEmgChannels> channel_rms{};
  double activation = 0.0;  // mean of the channel RMS values
};

// Moving-window RMS per channel; the first window uses the samples available.
class EnvelopeFilter {
 public:
  explicit EnvelopeFilter(EnvelopeConfig cfg = {}) : cfg_(cfg), window_(cfg.window_samples()) {
    cfg_.validate();
    for (auto& ring : rings_) ring.assign(window_, 0.0);
  }

  EnvelopeSample push(const EmgFrame& frame) {
    for (std::size_t c = 0; c < kEmgChannels; ++c) {
      require_finite(frame.channels[c], "sEMG sample");
      rings_[c][head_] = frame.channels[c];
    }
    head_ = (head_ + 1) % window_;
    count_ = std::min(count_ + 1, window_);

    EnvelopeSample out;
    out.t = frame.t;
    double sum_rms = 0.0;
    for (std::size_t c = 0; c < kEmgChannels; ++c) {
      // Recomputed from the window each time so zero input gives exactly zero.
      double ss = 0.0;
      for (std::size_t k = 0; k < count_; ++k) {
        const double v = rings_[c][(head_ + window_ - 1 - k) % window_];
        ss += v * v;
      }
      out.channel_rms[c] = std::sqrt(ss / static_cast<double>(count_));
      sum_rms += out.channel_rms[c];
    }
    out.activation = sum_rms / kEmgChannels;
    return out;
  }

  void reset() {
    for (auto& ring : rings_) std::fill(ring.begin(), ring.end(), 0.0);
    head_ = 0;
    count_ = 0;
  }

 private:
  EnvelopeConfig cfg_;
  std::size_t window_;
  std::array<std::vector<double>, kEmgChannels> rings_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
};

inline std::vector<EnvelopeSample> rms_envelope(std::span<const EmgFrame> frames, const EnvelopeConfig& cfg = {}) {
  EnvelopeFilter filter(cfg);
  std::vector<EnvelopeSample> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (i > 0 && !(frames[i].t > frames[i - 1].t)) throw FormatError("sEMG frames must be time ordered");
    out.push_back(filter.push(frames[i]));
  }
  return out;
}

struct Calibration {
  double reference = 0.0;  // sEMG_REF
  std::array<double, 3> reps{};
};

inline constexpr std::size_t kMvcRepetitions = 3;
inline constexpr double kMvcRepDuration = 2.0;     // s at maximum grip
inline constexpr double kMvcRestDuration = 10.0;   // s between repetitions
inline constexpr double kMvcCentralSpan = 1.5;     // s averaged per repetition
inline constexpr double kNoiseFloorFactor = 1.5;   // floor = factor * rest activation

namespace detail {

// Mean with a compensated sum and a residual-corrected division, so that
// e.g. the mean of 0.7, 0.8 and 0.9 is the double nearest 0.8.
template <std::size_t N>
double compensated_mean(const std::array<double, N>& v) {
  double sum = 0.0;
  double carry = 0.0;
  for (double x : v) {
    const double t = sum + x;
    carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  const double n = static_cast<double>(N);
  const double m = sum / n;
  return m + (std::fma(-m, n, sum) + carry) / n;
}

}  // namespace detail

inline Calibration calibration_from_reps(const std::array<double, 3>& reps, double noise_floor = 0.0) {
  for (double r : reps) {
    require_finite(r, "calibration repetition");
    if (!(r > noise_floor) || !(r > 0.0)) {
      throw CalibrationError("calibration failed: repetition activation " + format_double(r) +
                             " not above noise floor " + format_double(noise_floor));
    }
  }
  Calibration cal;
  cal.reps = reps;
  cal.reference = detail::compensated_mean(reps);
  return cal;
}

// Mean aggregate envelope over the central span of one recording.
inline double repetition_activation(const EmgRecording& rec, const EnvelopeConfig& cfg) {
  const auto env = rms_envelope(rec, cfg);
  const double dt = 1.0 / cfg.sample_rate;
  const double t0 = rec.front().t;
  const double mid = t0 + 0.5 * static_cast<double>(rec.size()) * dt;
  const double half = 0.5 * kMvcCentralSpan;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : env) {
    if (e.t >= mid - half && e.t < mid + half) {
      sum += e.activation;
      ++n;
    }
  }
  if (n == 0) throw CalibrationError("recording too short for the central averaging span");
  return sum / static_cast<double>(n);
}

inline Calibration calibrate(std::span<const EmgRecording> recordings, const EnvelopeConfig& cfg = {},
                             double noise_floor = 0.0) {
  if (recordings.size() != kMvcRepetitions) throw CalibrationError("calibration needs exactly 3 recordings");
  std::array<double, 3> reps{};
  for (std::size_t i = 0; i < kMvcRepetitions; ++i) {
    const auto& rec = recordings[i];
    const double duration = static_cast<double>(rec.size()) / cfg.sample_rate;
    if (rec.empty() || duration < kMvcRepDuration - 1e-9) {
      throw CalibrationError("each calibration recording must last at least 2 s");
    }
    reps[i] = repetition_activation(rec, cfg);
  }
  return calibration_from_reps(reps, noise_floor);
}

// Full protocol: three 2 s maximum grips separated by 10 s rests. The rest
// periods set the noise floor a repetition must clear.
struct MvcSession {
  std::vector<EmgRecording> reps;
  std::vector<EmgRecording> rests;
  double noise_floor = 0.0;
  Calibration calibration;
};

inline MvcSession run_mvc_protocol(EmgSynthesizer& synth, const EnvelopeConfig& cfg = {}, double max_grip = 1.0) {
  MvcSession s;
  const double dt = 1.0 / cfg.sample_rate;
  std::size_t tick = 0;
  auto record = [&](double grip, double duration) {
    EmgRecording rec;
    const auto n = static_cast<std::size_t>(std::lround(duration * cfg.sample_rate));
    for (std::size_t i = 0; i < n; ++i, ++tick) rec.push_back(synth.next(grip, static_cast<double>(tick) * dt));
    return rec;
  };
  for (std::size_t i = 0; i < kMvcRepetitions; ++i) {
    s.reps.push_back(record(max_grip, kMvcRepDuration));
    if (i + 1 < kMvcRepetitions) s.rests.push_back(record(0.0, kMvcRestDuration));
  }
  double rest_sum = 0.0;
  for (const auto& rest : s.rests) rest_sum += repetition_activation(rest, cfg);
  s.noise_floor = kNoiseFloorFactor * rest_sum / static_cast<double>(s.rests.size());
  s.calibration = calibrate(s.reps, cfg, s.noise_floor);
  return s;
}

// r = activation / sEMG_REF, deliberately unclamped.
inline double normalize(double activation, const Calibration& cal) {
  if (!(cal.reference > 0.0)) throw CalibrationError("invalid calibration: sEMG_REF must be positive");
  return activation / cal.reference;
}

// Envelope stream CSV: t, ch1..ch8 RMS, aggregate, r.
struct EnvelopeRecord {
  EnvelopeSample sample;
  double r = 0.0;
};

inline void write_envelope_csv(std::ostream& os, std::span<const EnvelopeRecord> records) {
  os << "t,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8,aggregate,r\n";
  for (const auto& rec : records) {
    os << format_double(rec.sample.t);
    for (double v : rec.sample.channel_rms) os << ',' << format_double(v);
    os << ',' << format_double(rec.sample.activation) << ',' << format_double(rec.r) << '\n';
  }
}

inline std::vector<EnvelopeRecord> read_envelope_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("t,ch1", 0) != 0) throw FormatError("missing envelope CSV header");
  std::vector<EnvelopeRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(parse_double(cell));
    if (cells.size() != 11) throw FormatError("envelope CSV row needs 11 columns");
    EnvelopeRecord rec;
    rec.sample.t = cells[0];
    for (std::size_t i = 0; i < kEmgChannels; ++i) rec.sample.channel_rms[i] = cells[1 + i];
    rec.sample.activation = cells[9];
    rec.r = cells[10];
    out.push_back(rec);
  }
  return out;
}

}  // namespace shsteer
