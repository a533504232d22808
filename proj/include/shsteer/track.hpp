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
#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shsteer/common.hpp"

namespace shsteer {

// ---------------------------------------------------------------------------
// Quintic Bezier
// ---------------------------------------------------------------------------

struct QuinticBezier {
  std::array<Vec2, 6> control_points{};
};

struct CurvePoint {
  Vec2 position;
  double heading = 0.0;
};

namespace detail {

// Bernstein basis of degree n at u, n <= 5.
template <std::size_t N>
constexpr std::array<double, N + 1> bernstein(double u) {
  constexpr std::array<double, 6> kBinom5 = {1, 5, 10, 10, 5, 1};
  constexpr std::array<double, 5> kBinom4 = {1, 4, 6, 4, 1};
  constexpr std::array<double, 4> kBinom3 = {1, 3, 3, 1};
  static_assert(N >= 3 && N <= 5);
  std::array<double, N + 1> b{};
  const double v = 1.0 - u;
  for (std::size_t i = 0; i <= N; ++i) {
    double c = 0.0;
    if constexpr (N == 5) c = kBinom5[i];
    if constexpr (N == 4) c = kBinom4[i];
    if constexpr (N == 3) c = kBinom3[i];
    double term = c;
    for (std::size_t k = 0; k < i; ++k) term *= u;
    for (std::size_t k = i; k < N; ++k) term *= v;
    b[i] = term;
  }
  return b;
}

}  // namespace detail

inline Vec2 bezier_position(const QuinticBezier& curve, double u) {
  const auto b = detail::bernstein<5>(u);
  Vec2 p{};
  for (std::size_t i = 0; i < 6; ++i) p = p + b[i] * curve.control_points[i];
  return p;
}

// First derivative d/du, from the degree-4 hodograph.
inline Vec2 bezier_derivative(const QuinticBezier& curve, double u) {
  const auto b = detail::bernstein<4>(u);
  const auto& p = curve.control_points;
  Vec2 d{};
  for (std::size_t i = 0; i < 5; ++i) d = d + (5.0 * b[i]) * (p[i + 1] - p[i]);
  return d;
}

inline Vec2 bezier_second_derivative(const QuinticBezier& curve, double u) {
  const auto b = detail::bernstein<3>(u);
  const auto& p = curve.control_points;
  Vec2 d{};
  for (std::size_t i = 0; i < 4; ++i) d = d + (20.0 * b[i]) * (p[i + 2] - 2.0 * p[i + 1] + p[i]);
  return d;
}

// Position and tangent heading at u in [0, 1].
inline CurvePoint eval_bezier(const QuinticBezier& curve, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("bezier parameter outside [0,1]");
  const auto& p = curve.control_points;
  CurvePoint out;
  // Exact endpoint interpolation.
  out.position = u == 0.0 ? p[0] : (u == 1.0 ? p[5] : bezier_position(curve, u));
  Vec2 d = bezier_derivative(curve, u);
  if (norm(d) < 1e-12) d = p[5] - p[0];  // degenerate hodograph: chord direction
  out.heading = std::atan2(d.y, d.x);
  return out;
}

// Lane-change curve from `start` moving along +x by `length` and shifting
// laterally by `offset`, with zero lateral first and second derivative at
// both ends.
inline QuinticBezier lane_change_bezier(Vec2 start, double length, double offset) {
  QuinticBezier c;
  for (std::size_t i = 0; i < 6; ++i) {
    const double lateral = i < 3 ? 0.0 : offset;
    c.control_points[i] = {start.x + length * static_cast<double>(i) / 5.0, start.y + lateral};
  }
  return c;
}

// ---------------------------------------------------------------------------
// Track layout
// ---------------------------------------------------------------------------

struct TrackLayout {
  double lane_width = 3.6;
  // Boundaries of straight-in, first lane change, center straight, second
  // lane change and straight-out, measured along the road axis (x).
  std::vector<double> section_stations = {0.0, 50.0, 80.0, 105.0, 135.0, 185.0};
  std::vector<Vec2> cone_positions;
  int lane_count = 2;
  // +1 when the first lane change goes to the left (+y), -1 to the right.
  int lateral_sign = 1;

  double start_station() const { return section_stations.front(); }
  double end_station() const { return section_stations.back(); }
  double lc1_begin() const { return section_stations.at(1); }
  double lc1_end() const { return section_stations.at(2); }
  double lc2_begin() const { return section_stations.at(3); }
  double lc2_end() const { return section_stations.at(4); }

  // Lateral position of the start lane (0) and the passing lane (1).
  double lane_center(int lane) const { return lane == 0 ? 0.0 : lateral_sign * lane_width; }

  // Maneuver window along x: first to last cone, whole track when no cones.
  std::pair<double, double> maneuver_window() const {
    if (cone_positions.empty()) return {start_station(), end_station()};
    auto [lo, hi] = std::minmax_element(cone_positions.begin(), cone_positions.end(),
                                        [](Vec2 a, Vec2 b) { return a.x < b.x; });
    return {lo->x, hi->x};
  }

  void validate() const {
    if (!(lane_width > 0.0)) throw ConstructionError("lane_width must be positive");
    if (section_stations.size() != 6) {
      throw ConstructionError("section_stations needs 6 boundaries (5 sections)");
    }
    for (std::size_t i = 1; i < section_stations.size(); ++i) {
      if (!(section_stations[i] > section_stations[i - 1])) {
        throw ConstructionError("section_stations must be strictly increasing");
      }
    }
    if (lateral_sign != 1 && lateral_sign != -1) throw ConstructionError("lateral_sign must be +1 or -1");
  }

  // Cone gates on both edges of the occupied lane at the maneuver boundaries,
  // plus an exit gate 25 m after the second lane change.
  static std::vector<Vec2> default_cones(const TrackLayout& t) {
    const double half = 0.5 * t.lane_width;
    const std::array<std::pair<double, int>, 5> gates = {{{t.lc1_begin(), 0},
                                                          {t.lc1_end(), 1},
                                                          {t.lc2_begin(), 1},
                                                          {t.lc2_end(), 0},
                                                          {std::min(t.lc2_end() + 25.0, t.end_station()), 0}}};
    std::vector<Vec2> cones;
    for (auto [x, lane] : gates) {
      const double c = t.lane_center(lane);
      cones.push_back({x, c - half});
      cones.push_back({x, c + half});
    }
    return cones;
  }

  static TrackLayout make_default() {
    TrackLayout t;
    t.cone_positions = default_cones(t);
    return t;
  }

  // Left-right mirror image.
  TrackLayout mirrored() const {
    TrackLayout m = *this;
    m.lateral_sign = -lateral_sign;
    for (auto& c : m.cone_positions) c.y = -c.y;
    return m;
  }
};

// ---------------------------------------------------------------------------
// Target path
// ---------------------------------------------------------------------------

struct PathSample {
  double s = 0.0;
  Vec2 position;
  double heading = 0.0;
};

struct Projection {
  double station = 0.0;
  double offset = 0.0;  // positive to the left of the path tangent
  double heading = 0.0;
};

// Dense arc-length table with linear interpolation between samples and
// straight-line extrapolation past both ends.
class TargetPath {
 public:
  static constexpr double kDefaultCorridor = 20.0;

  TargetPath() = default;

  TargetPath(std::vector<PathSample> samples, double resolution)
      : samples_(std::move(samples)), resolution_(resolution) {
    if (samples_.size() < 2) throw ConstructionError("path needs at least two samples");
    x_monotone_ = true;
    for (std::size_t i = 1; i < samples_.size(); ++i) {
      if (!(samples_[i].s > samples_[i - 1].s)) throw ConstructionError("path stations must increase");
      if (!(samples_[i].position.x > samples_[i - 1].position.x)) x_monotone_ = false;
      // Keep headings continuous.
      samples_[i].heading =
          samples_[i - 1].heading + wrap_angle(samples_[i].heading - samples_[i - 1].heading);
    }
  }

  std::span<const PathSample> samples() const { return samples_; }
  double resolution() const { return resolution_; }
  double start() const { return samples_.front().s; }
  double end() const { return samples_.back().s; }
  double length() const { return end() - start(); }

  PathSample at(double s) const {
    if (s <= start()) return extrapolate(samples_.front(), s - start());
    if (s >= end()) return extrapolate(samples_.back(), s - end());
    auto it = std::upper_bound(samples_.begin(), samples_.end(), s,
                               [](double v, const PathSample& p) { return v < p.s; });
    const auto& b = *it;
    const auto& a = *(it - 1);
    const double t = (s - a.s) / (b.s - a.s);
    return {s, a.position + t * (b.position - a.position), a.heading + t * (b.heading - a.heading)};
  }

  Projection project(Vec2 point, double corridor = kDefaultCorridor) const {
    const std::size_t n = samples_.size();
    std::size_t i = x_monotone_ ? seed_by_x(point.x) : nearest_linear(point);
    // Hill-climb to the locally nearest sample.
    auto d2 = [&](std::size_t k) {
      const Vec2 d = point - samples_[k].position;
      return dot(d, d);
    };
    while (i + 1 < n && d2(i + 1) < d2(i)) ++i;
    while (i > 0 && d2(i - 1) < d2(i)) --i;

    Projection best{};
    double best_d2 = INFINITY;
    auto try_segment = [&](std::size_t a, bool open_before, bool open_after) {
      const auto& pa = samples_[a];
      const auto& pb = samples_[a + 1];
      const Vec2 seg = pb.position - pa.position;
      const double len2 = dot(seg, seg);
      double t = dot(point - pa.position, seg) / len2;
      if (!open_before) t = std::max(t, 0.0);
      if (!open_after) t = std::min(t, 1.0);
      const Vec2 foot = pa.position + t * seg;
      const Vec2 d = point - foot;
      const double dd = dot(d, d);
      if (dd < best_d2) {
        best_d2 = dd;
        const double len = std::sqrt(len2);
        best.station = pa.s + t * (pb.s - pa.s);
        best.offset = cross((1.0 / len) * seg, d);
        best.heading = wrap_angle(pa.heading + std::clamp(t, 0.0, 1.0) * (pb.heading - pa.heading));
      }
    };
    if (i > 0) try_segment(i - 1, i - 1 == 0, false);
    if (i + 1 < n) try_segment(i, i == 0, i + 2 == n);

    if (std::abs(best.offset) > corridor || best.station < start() - corridor ||
        best.station > end() + corridor) {
      throw OutOfCorridorError("point outside path corridor (offset " + format_double(best.offset) + " m)",
                               best.offset);
    }
    return best;
  }

  void write_csv(std::ostream& os) const {
    os << "s,x,y,heading\n";
    for (const auto& p : samples_) {
      os << format_double(p.s) << ',' << format_double(p.position.x) << ','
         << format_double(p.position.y) << ',' << format_double(p.heading) << '\n';
    }
  }

 private:
  static PathSample extrapolate(const PathSample& p, double ds) {
    return {p.s + ds, p.position + ds * heading_vector(p.heading), p.heading};
  }

  std::size_t seed_by_x(double x) const {
    auto it = std::lower_bound(samples_.begin(), samples_.end(), x,
                               [](const PathSample& p, double v) { return p.position.x < v; });
    if (it == samples_.end()) return samples_.size() - 1;
    return static_cast<std::size_t>(it - samples_.begin());
  }

  std::size_t nearest_linear(Vec2 point) const {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < samples_.size(); ++k) {
      const Vec2 d = point - samples_[k].position;
      if (dot(d, d) < best_d) {
        best_d = dot(d, d);
        best = k;
      }
    }
    return best;
  }

  std::vector<PathSample> samples_;
  double resolution_ = 0.05;
  bool x_monotone_ = false;
};

namespace detail {

// One geometric piece of the centerline, parameterized by u in [0, 1].
struct PathPiece {
  bool is_curve = false;
  Vec2 start;
  double length_x = 0.0;  // straight pieces: length along +x
  QuinticBezier curve;

  CurvePoint point(double u) const {
    if (!is_curve) return {{start.x + u * length_x, start.y}, 0.0};
    return eval_bezier(curve, std::clamp(u, 0.0, 1.0));
  }
  double speed(double u) const {
    if (!is_curve) return length_x;
    return norm(bezier_derivative(curve, std::clamp(u, 0.0, 1.0)));
  }
};

// Cumulative arc length on a uniform u grid, composite Simpson per cell.
inline std::vector<double> arc_length_table(const PathPiece& piece, std::size_t cells) {
  std::vector<double> cum(cells + 1, 0.0);
  const double h = 1.0 / static_cast<double>(cells);
  for (std::size_t j = 0; j < cells; ++j) {
    const double u0 = h * static_cast<double>(j);
    const double seg = h / 6.0 * (piece.speed(u0) + 4.0 * piece.speed(u0 + 0.5 * h) + piece.speed(u0 + h));
    cum[j + 1] = cum[j] + seg;
  }
  return cum;
}

}  // namespace detail

// Straight sections along +x joined by quintic Bezier lane changes.
inline TargetPath build_dlc_path(const TrackLayout& layout, double resolution = 0.05) {
  layout.validate();
  if (!(resolution > 0.0)) throw ConstructionError("path resolution must be positive");
  const auto& st = layout.section_stations;
  const double shift = layout.lateral_sign * layout.lane_width;

  std::vector<detail::PathPiece> pieces;
  double y = 0.0;
  for (std::size_t k = 0; k + 1 < st.size(); ++k) {
    detail::PathPiece piece;
    piece.start = {st[k], y};
    piece.length_x = st[k + 1] - st[k];
    if (k == 1 || k == 3) {
      const double dy = k == 1 ? shift : -shift;
      piece.is_curve = true;
      piece.curve = lane_change_bezier(piece.start, piece.length_x, dy);
      y += dy;
    }
    pieces.push_back(piece);
  }

  constexpr std::size_t kCells = 4000;
  std::vector<std::vector<double>> tables;
  std::vector<double> piece_begin;
  double total = 0.0;
  for (const auto& piece : pieces) {
    tables.push_back(detail::arc_length_table(piece, kCells));
    piece_begin.push_back(total);
    total += tables.back().back();
  }

  auto sample_at = [&](double s) -> PathSample {
    std::size_t k = static_cast<std::size_t>(
        std::upper_bound(piece_begin.begin(), piece_begin.end(), s) - piece_begin.begin() - 1);
    const auto& piece = pieces[k];
    const auto& cum = tables[k];
    const double local = std::clamp(s - piece_begin[k], 0.0, cum.back());
    // Invert arc length: bracket in the table, then Newton on s(u).
    std::size_t j = static_cast<std::size_t>(std::lower_bound(cum.begin(), cum.end(), local) - cum.begin());
    j = std::clamp<std::size_t>(j, 1, kCells);
    const double u0 = static_cast<double>(j - 1) / kCells;
    double u = u0 + (local - cum[j - 1]) / (cum[j] - cum[j - 1]) / kCells;
    for (int iter = 0; iter < 3; ++iter) {
      const double h = u - u0;
      const double len =
          cum[j - 1] + h / 6.0 * (piece.speed(u0) + 4.0 * piece.speed(u0 + 0.5 * h) + piece.speed(u));
      u = std::clamp(u - (len - local) / piece.speed(u), 0.0, 1.0);
    }
    const auto cp = piece.point(u);
    return {s, cp.position, cp.heading};
  };

  std::vector<PathSample> samples;
  for (std::size_t i = 0;; ++i) {
    const double s = static_cast<double>(i) * resolution;
    if (s > total - 1e-9) break;
    samples.push_back(sample_at(s));
  }
  const auto tail = pieces.back().point(1.0);
  samples.push_back({total, tail.position, tail.heading});
  return TargetPath(std::move(samples), resolution);
}

// Straight path along +x starting at the origin.
inline TargetPath build_straight_path(double length, double resolution = 0.05) {
  if (!(length > 0.0) || !(resolution > 0.0)) throw ConstructionError("invalid straight path");
  std::vector<PathSample> samples;
  const auto n = static_cast<std::size_t>(std::ceil(length / resolution));
  for (std::size_t i = 0; i <= n; ++i) {
    const double s = std::min(static_cast<double>(i) * resolution, length);
    samples.push_back({s, {s, 0.0}, 0.0});
  }
  return TargetPath(std::move(samples), resolution);
}

}  // namespace shsteer
