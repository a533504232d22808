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


#include <cmath>
#include <string>

#include <gtest/gtest.h>

#include "shsteer/sim_engine.hpp"

namespace shsteer {
namespace {

std::string envelope_text(const TrialLog& log) {
  std::ostringstream os;
  write_envelope_csv(os, log.emg_records);
  return os.str();
}

// Degenerate-mode setup: ideal sensor, no smoothing, no conflict response.
SimConfig pinned(AuthorityMode mode, double grip) {
  SimConfig cfg;
  cfg.emg_source = EmgSource::Ideal;
  cfg.guidance.gain_smoothing = 0.0;
  cfg.guidance.mode = mode;
  cfg.grip.sensitivity = 0.0;
  cfg.grip.baseline = grip;
  return cfg;
}

TEST(SimEngine, Deterministic) {
  SimConfig cfg;
  cfg.guidance.mode = AuthorityMode::HGDecrease;
  const TargetPath path = make_path(cfg);
  const auto subject = prepare_subject(cfg, 2);
  EXPECT_EQ(serialize(run_trial(cfg, path, subject, 3)), serialize(run_trial(cfg, path, subject, 3)));
}

TEST(SimEngine, ExactTickCounts) {
  SimConfig cfg;
  cfg.guidance.mode = AuthorityMode::HGNormal;
  const auto log = run_trial(cfg, prepare_subject(cfg, 1), 1);
  ASSERT_FALSE(log.meta.aborted);
  const auto n = log.meta.internal_steps;
  EXPECT_EQ(static_cast<std::int64_t>(log.records.size()), (n + 4) / 5);
  EXPECT_EQ(log.meta.emg_ticks, (n + 2) / 3);
  EXPECT_EQ(static_cast<std::int64_t>(log.emg_records.size()), log.meta.emg_ticks);
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    ASSERT_EQ(log.records[i].t, static_cast<double>(5 * i) / 600.0);
  }
  for (std::size_t i = 0; i < log.emg_records.size(); ++i) {
    ASSERT_EQ(log.emg_records[i].sample.t, static_cast<double>(3 * i) / 600.0);
  }
  // Record count is duration times the log rate, within one.
  EXPECT_LE(std::abs(static_cast<double>(log.records.size()) - static_cast<double>(n) / 600.0 * 120.0), 1.0);
}

TEST(SimEngine, ConfigHashInMeta) {
  SimConfig cfg;
  const auto log = run_trial(cfg, nominal_subject(cfg));
  EXPECT_EQ(log.meta.config_hash, config_hash(cfg));
}

TEST(SimEngine, UnforcedStraightRun) {
  SimConfig cfg;
  cfg.track_kind = TrackKind::Straight;
  cfg.guidance.mode = AuthorityMode::Manual;
  cfg.driver_enabled = false;
  const auto log = run_trial(cfg, nominal_subject(cfg));
  ASSERT_FALSE(log.meta.aborted);
  for (const auto& r : log.records) {
    ASSERT_EQ(r.haptic_torque, 0.0);
    ASSERT_EQ(r.driver_torque, 0.0);
    ASSERT_EQ(r.lane_offset, 0.0);
  }
}

TEST(SimEngine, ModeEquivalenceQuadruple) {
  struct Pair {
    AuthorityMode adaptive;
    double grip;
    AuthorityMode fixed;
  };
  const Pair pairs[] = {{AuthorityMode::HGDecrease, 1.0, AuthorityMode::Manual},
                        {AuthorityMode::HGDecrease, 0.0, AuthorityMode::HGStrong},
                        {AuthorityMode::HGIncrease, 0.0, AuthorityMode::Manual},
                        {AuthorityMode::HGIncrease, 1.0, AuthorityMode::HGStrong}};
  const TargetPath path = make_path(SimConfig{});
  for (const auto& p : pairs) {
    const SimConfig a = pinned(p.adaptive, p.grip);
    const SimConfig b = pinned(p.fixed, p.grip);
    const auto subject = prepare_subject(a, 4);
    const auto la = run_trial(a, path, subject, 1);
    const auto lb = run_trial(b, path, subject, 1);
    ASSERT_FALSE(la.meta.aborted);
    EXPECT_EQ(records_text(la), records_text(lb)) << mode_name(p.adaptive) << " grip " << p.grip;
    EXPECT_EQ(envelope_text(la), envelope_text(lb));
    EXPECT_EQ(la.meta.internal_steps, lb.meta.internal_steps);
  }
}

TEST(SimEngine, PinnedDecreaseTrajectoryMatchesManual) {
  const SimConfig a = pinned(AuthorityMode::HGDecrease, 1.0);
  const SimConfig b = pinned(AuthorityMode::Manual, 1.0);
  const auto subject = prepare_subject(a, 7);
  const auto la = run_trial(a, subject, 2);
  const auto lb = run_trial(b, subject, 2);
  ASSERT_EQ(la.records.size(), lb.records.size());
  for (std::size_t i = 0; i < la.records.size(); ++i) {
    ASSERT_EQ(la.records[i], lb.records[i]);
    ASSERT_EQ(la.records[i].gain, 0.0);
  }
}

TEST(GuidanceOnly, ConvergesFromHalfMetre) {
  SimConfig cfg;
  cfg.track_kind = TrackKind::Straight;
  const auto log = run_guidance_only(cfg, 0.5);
  ASSERT_FALSE(log.meta.aborted);
  ASSERT_NEAR(log.records.front().lane_offset, 0.5, 1e-12);
  double reached = -1.0;
  for (const auto& r : log.records) {
    if (std::abs(r.lane_offset) < 0.05) {
      reached = r.t;
      break;
    }
  }
  ASSERT_GE(reached, 0.0);
  EXPECT_LE(reached, 10.0);
  // And it stays there.
  for (const auto& r : log.records) {
    if (r.t >= reached + 5.0) {
      ASSERT_LT(std::abs(r.lane_offset), 0.05) << r.t;
    }
  }
}

TEST(GuidanceOnly, MirroredStart) {
  SimConfig cfg;
  cfg.track_kind = TrackKind::Straight;
  const auto up = run_guidance_only(cfg, 0.5);
  const auto down = run_guidance_only(cfg, -0.5);
  ASSERT_EQ(up.records.size(), down.records.size());
  for (std::size_t i = 0; i < up.records.size(); ++i) {
    const auto& a = up.records[i];
    const auto& b = down.records[i];
    ASSERT_NEAR(a.x, b.x, 1e-9);
    ASSERT_NEAR(a.y, -b.y, 1e-9);
    ASSERT_NEAR(a.psi, -b.psi, 1e-9);
    ASSERT_NEAR(a.lane_offset, -b.lane_offset, 1e-9);
    ASSERT_NEAR(a.haptic_torque, -b.haptic_torque, 1e-9);
  }
}

TEST(GuidanceOnly, CenteredStartStaysCentered) {
  SimConfig cfg;
  cfg.track_kind = TrackKind::Straight;
  const auto log = run_guidance_only(cfg, 0.0);
  for (const auto& r : log.records) {
    ASSERT_EQ(r.lane_offset, 0.0);
    ASSERT_EQ(r.haptic_torque, 0.0);
  }
}

TEST(SimEngine, MirroredTrackMirrorsTrial) {
  SimConfig cfg;
  cfg.guidance.mode = AuthorityMode::HGIncrease;
  SimConfig mirror = cfg;
  mirror.track = cfg.track.mirrored();
  const auto subject = prepare_subject(cfg, 3);
  const auto a = run_trial(cfg, subject, 1);
  const auto b = run_trial(mirror, subject, 1);
  ASSERT_FALSE(a.meta.aborted);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    ASSERT_NEAR(a.records[i].x, b.records[i].x, 1e-9);
    ASSERT_NEAR(a.records[i].y, -b.records[i].y, 1e-9);
    ASSERT_NEAR(a.records[i].lane_offset, -b.records[i].lane_offset, 1e-9);
    ASSERT_NEAR(a.records[i].driver_torque, -b.records[i].driver_torque, 1e-9);
    ASSERT_NEAR(a.records[i].gain, b.records[i].gain, 1e-9);
  }
}

TEST(SimEngine, HapticTorqueNeverExceedsCap) {
  SimConfig cfg;
  cfg.guidance.mode = AuthorityMode::HGStrong;
  cfg.initial_offset = 1.5;
  cfg.initial_yaw = 0.1;
  const auto log = run_trial(cfg, prepare_subject(cfg, 5), 1);
  double worst = 0.0;
  for (const auto& r : log.records) worst = std::max(worst, std::abs(r.haptic_torque));
  EXPECT_LE(worst, 5.0);
}

TEST(SimEngine, OutOfCorridorAborts) {
  SimConfig cfg;
  cfg.track_kind = TrackKind::Straight;
  cfg.driver_enabled = false;
  cfg.guidance.mode = AuthorityMode::Manual;
  cfg.initial_yaw = 0.5;
  const auto log = run_trial(cfg, nominal_subject(cfg));
  EXPECT_TRUE(log.meta.aborted);
  EXPECT_NE(log.meta.failure.find("corridor"), std::string::npos) << log.meta.failure;
  EXPECT_FALSE(log.records.empty());
}

TEST(SimEngine, AdaptiveModeNeedsCalibration) {
  SimConfig cfg;
  cfg.guidance.mode = AuthorityMode::HGDecrease;
  SubjectSetup s = nominal_subject(cfg);
  s.calibration = Calibration{};
  EXPECT_THROW(run_trial(cfg, s), CalibrationError);
}

}  // namespace
}  // namespace shsteer
