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

#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace shsteer {

// Error hierarchy. Every library failure derives from Error so callers that
// only care about "something went wrong" can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error { using Error::Error; };
class ConstructionError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class InputError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class CalibrationError : public Error { using Error::Error; };
class IncompleteDesignError : public Error { using Error::Error; };
class ProcedureError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class ReplayRefusedError : public Error { using Error::Error; };

class OutOfCorridorError : public Error {
 public:
  OutOfCorridorError(const std::string& what, double offset)
      : Error(what), offset_(offset) {}
  double offset() const noexcept { return offset_; }

 private:
  double offset_;
};

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDegPerRad = 180.0 / kPi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
// z-component of a x b; positive when b points to the left of a.
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 heading_vector(double heading) { return {std::cos(heading), std::sin(heading)}; }

// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  if (a > -kPi && a <= kPi) return a;
  double w = std::remainder(a, 2.0 * kPi);
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

constexpr double deg_to_rad(double d) { return d / kDegPerRad; }
constexpr double rad_to_deg(double r) { return r * kDegPerRad; }
constexpr double kmh_to_mps(double v) { return v / 3.6; }
constexpr double mps_to_kmh(double v) { return v * 3.6; }

template <typename T>
constexpr T clamp_abs(T v, T limit) {
  return v > limit ? limit : (v < -limit ? -limit : v);
}

inline void require_finite(double v, std::string_view what) {
  if (!std::isfinite(v)) throw NumericError("non-finite value: " + std::string(what));
}

// Shortest decimal text that round-trips to the same double. Output is
// platform independent, which the byte-identical log contract relies on.
inline std::string format_double(double v) {
  if (v == 0.0) return "0";  // folds -0 into 0
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw FormatError("cannot format double");
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view text) {
  double v = 0.0;
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r' || text.back() == '\t')) {
    text.remove_suffix(1);
  }
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw FormatError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x00000100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace shsteer
