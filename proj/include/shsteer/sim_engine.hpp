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

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "shsteer/config.hpp"
#include "shsteer/driver_model.hpp"
#include "shsteer/guidance.hpp"
#include "shsteer/rng.hpp"
#include "shsteer/semg.hpp"
#include "shsteer/sim_config.hpp"
#include "shsteer/steering_column.hpp"
#include "shsteer/track.hpp"
#include "shsteer/trial_log.hpp"
#include "shsteer/vehicle.hpp"

namespace shsteer {

inline TargetPath make_path(const SimConfig& cfg) {
  if (cfg.track_kind == TrackKind::Straight) return build_straight_path(cfg.straight_length, cfg.path_resolution);
  return build_dlc_path(cfg.track, cfg.path_resolution);
}

// Everything that belongs to one virtual participant.
struct SubjectSetup {
  int id = 0;
  DriverParams driver;
  std::uint64_t driver_seed = 0;
  EmgSubjectModel emg;
  Calibration calibration;
  double noise_floor = 0.0;
};

// Seed streams derived from the master seed.
enum class SeedStream : std::uint64_t { Driver = 1, EmgModel = 2, Mvc = 3, TrialEmg = 4 };

inline std::uint64_t stream_seed(std::uint64_t master, SeedStream stream, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t s = derive_seed(master, {static_cast<std::uint64_t>(stream)});
  for (auto id : ids) s = mix_seed(s ^ mix_seed(id + 1));
  return s;
}

// Samples the participant and runs the MVC calibration protocol.
inline SubjectSetup prepare_subject(const SimConfig& cfg, int id) {
  SubjectSetup s;
  s.id = id;
  const auto uid = static_cast<std::uint64_t>(id);
  s.driver_seed = stream_seed(cfg.master_seed, SeedStream::Driver, {uid});
  s.driver = sample_virtual_subject(cfg.driver, s.driver_seed);
  s.emg = EmgSubjectModel::sample(stream_seed(cfg.master_seed, SeedStream::EmgModel, {uid}));
  EmgSynthesizer synth(s.emg, stream_seed(cfg.master_seed, SeedStream::Mvc, {uid}));
  auto session = run_mvc_protocol(synth, cfg.envelope);
  s.calibration = session.calibration;
  s.noise_floor = session.noise_floor;
  return s;
}

// Subject with the unjittered base driver and a unit calibration.
inline SubjectSetup nominal_subject(const SimConfig& cfg) {
  SubjectSetup s;
  s.driver = cfg.driver;
  s.emg = EmgSubjectModel::sample(0);
  s.calibration = calibration_from_reps({1.0, 1.0, 1.0});
  return s;
}

// Operator input replacing the simulated driver for one step.
struct ExternalInput {
  double torque = 0.0;
  double grip = 0.0;
};

// Full-rate values of the most recent step.
struct StepSnapshot {
  double t = 0.0;
  std::int64_t step = 0;
  VehicleState vehicle;
  SteeringColumnState column;
  PreviewErrors errors;
  double station = 0.0;
  double lane_offset = 0.0;
  double gain = 0.0;
  double activation = 0.0;
  double grip = 0.0;
  double motor_current = 0.0;
};

// Fixed-step orchestrator for one trial. Internal steps run at
// cfg.internal_rate; vehicle records and the sEMG stream are decimated from
// it by exact integer factors.
class TrialSimulator {
 public:
  TrialSimulator(const SimConfig& cfg, const TargetPath& path, const SubjectSetup& subject, TrialMeta meta)
      : cfg_(cfg),
        path_(path),
        driver_(subject.driver, cfg.dt()),
        grip_(cfg.grip),
        synth_(subject.emg, meta.emg_seed),
        envelope_(cfg.envelope),
        calibration_(subject.calibration),
        speed_(cfg.vehicle.speed_pid),
        steps_per_log_(cfg.steps_per_log()),
        steps_per_emg_(cfg.steps_per_emg()) {
    cfg_.validate();
    if (cfg_.emg_source == EmgSource::Synthetic || is_adaptive(cfg_.guidance.mode)) {
      if (!(calibration_.reference > 0.0)) throw CalibrationError("trial needs a valid sEMG calibration");
    }
    log_.meta = std::move(meta);
    log_.meta.condition = cfg_.guidance.mode;
    log_.meta.config_hash = config_hash(cfg_);
    log_.meta.semg_ref = calibration_.reference;
    log_.meta.driver = subject.driver;
    log_.meta.driver_seed = subject.driver_seed;

    const auto start = path_.at(path_.start());
    const Vec2 normal = heading_vector(start.heading + 0.5 * kPi);
    const Vec2 p = start.position + cfg_.initial_offset * normal;
    vehicle_.x = p.x;
    vehicle_.y = p.y;
    vehicle_.yaw = wrap_angle(start.heading + cfg_.initial_yaw);
    vehicle_.speed = cfg_.vehicle.target_speed;
    speed_.trim(resistance_force(vehicle_.speed, cfg_.vehicle));
  }

  bool finished() const { return finished_; }
  const TrialLog& log() const { return log_; }
  TrialLog take_log() { return std::move(log_); }
  const StepSnapshot& snapshot() const { return snapshot_; }
  std::int64_t step_index() const { return step_; }
  double time() const { return static_cast<double>(step_) / cfg_.internal_rate; }
  const SimConfig& config() const { return cfg_; }
  const TargetPath& path() const { return path_; }

  // Switches the authority condition mid-session (operator mode select).
  void set_mode(AuthorityMode mode) {
    cfg_.guidance.mode = mode;
    log_.meta.condition = mode;
  }

  void mark_truncated() { log_.meta.truncated = true; }

  void finish() {
    finished_ = true;
    log_.meta.internal_steps = step_;
  }

  // Advances one internal step. With `input` the simulated driver and grip
  // schedule are bypassed.
  void step(std::optional<ExternalInput> input = std::nullopt) {
    if (finished_) return;
    try {
      advance(input);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(step_));
    }
  }

  void run() {
    while (!finished_) step();
  }

 private:
  void advance(std::optional<ExternalInput> input) {
    const double dt = cfg_.dt();
    const double t = time();

    Projection proj;
    try {
      proj = path_.project(vehicle_.position(), cfg_.corridor);
    } catch (const OutOfCorridorError& e) {
      log_.meta.aborted = true;
      log_.meta.failure = std::string(e.what()) + " at t=" + format_double(t);
      finish();
      return;
    }
    if (proj.station >= path_.end() || t >= cfg_.max_duration) {
      finish();
      return;
    }

    const double grip = input ? input->grip : grip_.update(haptic_, driver_torque_, dt);
    if (step_ % steps_per_emg_ == 0) sample_emg(grip, t);

    const auto auth = authority_gain(cfg_.guidance.mode, activation_, gain_, dt, cfg_.guidance.gain_smoothing);
    gain_ = auth.gain;

    const PreviewErrors errors = preview_errors(vehicle_, path_, proj, cfg_.guidance);
    haptic_ = guidance_torque(errors, *gain_, cfg_.guidance);
    if (input) {
      driver_torque_ = input->torque;
    } else {
      driver_torque_ = cfg_.driver_enabled ? driver_.torque(errors) : 0.0;
    }
    const double aligning = aligning_torque(vehicle_, column_.angle, cfg_.vehicle);

    snapshot_ = {t,      step_,        vehicle_,   column_, errors, proj.station, proj.offset,
                 *gain_, activation_, grip, torque_to_current(haptic_).current};
    snapshot_.column.driver_torque = driver_torque_;
    snapshot_.column.haptic_torque = haptic_;
    snapshot_.column.aligning_torque = aligning;

    if (step_ % steps_per_log_ == 0) {
      const auto q = quantize_sensors(rad_to_deg(column_.angle), driver_torque_);
      StepRecord rec;
      rec.t = static_cast<double>(step_) / cfg_.internal_rate;
      rec.x = vehicle_.x;
      rec.y = vehicle_.y;
      rec.psi = vehicle_.yaw;
      rec.phi_deg = q.angle_deg;
      rec.driver_torque = q.torque;
      rec.haptic_torque = quantize(haptic_, kTorqueResolution);
      rec.aligning_torque = aligning;
      rec.gain = *gain_;
      rec.activation = activation_;
      rec.e_y_near = errors.e_y_near;
      rec.e_theta_far = errors.e_theta_far;
      rec.lane_offset = proj.offset;
      rec.grip = grip;
      log_.records.push_back(rec);
    }

    column_ = step_column(column_, driver_torque_, haptic_, aligning, dt, cfg_.column);
    const double force = speed_.update(vehicle_.speed, cfg_.vehicle.target_speed, dt);
    vehicle_ = step_vehicle(vehicle_, column_.angle, cfg_.vehicle, dt, force);
    ++step_;
  }

  void sample_emg(double grip, double t) {
    EnvelopeSample env;
    env.t = t;
    if (cfg_.emg_source == EmgSource::Synthetic) {
      env = envelope_.push(synth_.next(grip, t));
      activation_ = normalize(env.activation, calibration_);
    } else {
      activation_ = grip;
      env.activation = grip * calibration_.reference;
      env.channel_rms.fill(env.activation);
    }
    log_.emg_records.push_back({env, activation_});
    ++log_.meta.emg_ticks;
  }

  SimConfig cfg_;
  const TargetPath& path_;
  DriverModel driver_;
  GripController grip_;
  EmgSynthesizer synth_;
  EnvelopeFilter envelope_;
  Calibration calibration_;
  SpeedController speed_;
  int steps_per_log_;
  int steps_per_emg_;

  VehicleState vehicle_;
  SteeringColumnState column_;
  std::optional<double> gain_;
  double activation_ = 0.0;
  double haptic_ = 0.0;
  double driver_torque_ = 0.0;
  std::int64_t step_ = 0;
  bool finished_ = false;
  StepSnapshot snapshot_;
  TrialLog log_;
};

inline TrialMeta trial_meta(const SimConfig& cfg, const SubjectSetup& subject, int trial) {
  TrialMeta m;
  m.subject = subject.id;
  m.trial = trial;
  m.condition = cfg.guidance.mode;
  m.emg_seed = stream_seed(cfg.master_seed, SeedStream::TrialEmg,
                           {static_cast<std::uint64_t>(subject.id),
                            static_cast<std::uint64_t>(mode_index(cfg.guidance.mode)),
                            static_cast<std::uint64_t>(trial)});
  return m;
}

inline TrialLog run_trial(const SimConfig& cfg, const TargetPath& path, const SubjectSetup& subject, int trial = 0) {
  TrialSimulator sim(cfg, path, subject, trial_meta(cfg, subject, trial));
  sim.run();
  return sim.take_log();
}

inline TrialLog run_trial(const SimConfig& cfg, const SubjectSetup& subject, int trial = 0) {
  const TargetPath path = make_path(cfg);
  return run_trial(cfg, path, subject, trial);
}

// Only the guidance torque steers: driver silent, K fixed at 1.
inline SimConfig guidance_only_config(SimConfig cfg, double initial_offset) {
  cfg.driver_enabled = false;
  cfg.guidance.mode = AuthorityMode::HGStrong;
  cfg.guidance.gain_smoothing = 0.0;
  cfg.emg_source = EmgSource::Ideal;
  cfg.grip.baseline = 0.0;
  cfg.grip.sensitivity = 0.0;
  cfg.initial_offset = initial_offset;
  return cfg;
}

inline TrialLog run_guidance_only(const SimConfig& cfg, double initial_offset) {
  const SimConfig g = guidance_only_config(cfg, initial_offset);
  return run_trial(g, nominal_subject(g));
}

}  // namespace shsteer
