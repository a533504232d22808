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
#include <cstdint>
#include <limits>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "shsteer/common.hpp"

namespace shsteer {

// Rows are subjects, columns are conditions.
using Matrix = std::vector<std::vector<double>>;

struct AnovaResult {
  int n = 0;  // subjects
  int k = 0;  // conditions
  double ss_total = 0.0;
  double ss_condition = 0.0;
  double ss_subject = 0.0;
  double ss_error = 0.0;
  int df_condition = 0;
  int df_error = 0;
  double ms_condition = 0.0;
  double ms_error = 0.0;
  double f = 0.0;
  double p = 1.0;
  std::vector<double> means;  // per condition
};

inline void check_design(const Matrix& data) {
  if (data.size() < 2) throw IncompleteDesignError("need at least two subjects");
  const std::size_t k = data.front().size();
  if (k < 2) throw IncompleteDesignError("need at least two conditions");
  for (const auto& row : data) {
    if (row.size() != k) throw IncompleteDesignError("ragged subject x condition matrix");
    for (double v : row) {
      if (!std::isfinite(v)) throw IncompleteDesignError("missing cell in subject x condition matrix");
    }
  }
}

// One-way repeated-measures ANOVA without sphericity correction.
inline AnovaResult rm_anova(const Matrix& data) {
  check_design(data);
  AnovaResult r;
  r.n = static_cast<int>(data.size());
  r.k = static_cast<int>(data.front().size());
  const double n = r.n;
  const double k = r.k;

  double grand = 0.0;
  for (const auto& row : data)
    for (double v : row) grand += v;
  grand /= n * k;

  r.means.assign(r.k, 0.0);
  std::vector<double> subject_means(r.n, 0.0);
  for (int i = 0; i < r.n; ++i) {
    for (int j = 0; j < r.k; ++j) {
      r.means[j] += data[i][j];
      subject_means[i] += data[i][j];
    }
  }
  for (auto& m : r.means) m /= n;
  for (auto& m : subject_means) m /= k;

  for (int i = 0; i < r.n; ++i) {
    for (int j = 0; j < r.k; ++j) {
      const double d = data[i][j] - grand;
      r.ss_total += d * d;
      const double e = data[i][j] - r.means[j] - subject_means[i] + grand;
      r.ss_error += e * e;
    }
  }
  for (double m : r.means) r.ss_condition += n * (m - grand) * (m - grand);
  for (double m : subject_means) r.ss_subject += k * (m - grand) * (m - grand);

  r.df_condition = r.k - 1;
  r.df_error = (r.k - 1) * (r.n - 1);
  r.ms_condition = r.ss_condition / r.df_condition;
  r.ms_error = r.ss_error / r.df_error;

  // Relative tolerance keeps shifted copies of the same data on the same
  // branch despite rounding in the sums of squares.
  const double scale = std::max(r.ss_total, std::numeric_limits<double>::min());
  const bool no_effect = r.ss_condition <= 1e-13 * scale;
  const bool no_error = r.ss_error <= 1e-13 * scale;
  if (no_effect) {
    r.f = 0.0;
    r.p = 1.0;
  } else if (no_error) {
    r.f = std::numeric_limits<double>::infinity();
    r.p = 0.0;
  } else {
    r.f = r.ms_condition / r.ms_error;
    boost::math::fisher_f dist(r.df_condition, r.df_error);
    r.p = boost::math::cdf(boost::math::complement(dist, r.f));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Studentized range distribution
// ---------------------------------------------------------------------------

namespace detail {

// P(range of `groups` iid standard normals <= w).
inline double normal_range_cdf(double w, int groups) {
  if (!(w > 0.0)) return 0.0;
  const boost::math::normal_distribution<double> std_normal;
  const auto integrand = [&](double z) {
    const double inner = boost::math::cdf(std_normal, z) - boost::math::cdf(std_normal, z - w);
    return boost::math::pdf(std_normal, z) * std::pow(inner, groups - 1);
  };
  // The normal density is below 1e-18 outside [-9, 9 + w].
  using boost::math::quadrature::gauss_kronrod;
  const double v = gauss_kronrod<double, 31>::integrate(integrand, -9.0, 9.0 + w, 10, 1e-11);
  return std::clamp(groups * v, 0.0, 1.0);
}

}  // namespace detail

// CDF of the studentized range Q with `groups` means and `df` error degrees
// of freedom (df = +inf gives the normal range).
inline double studentized_range_cdf(double q, int groups, double df) {
  if (groups < 2) throw DomainError("studentized range needs at least two groups");
  if (!(df > 0.0)) throw DomainError("studentized range needs positive df");
  if (!(q > 0.0)) return 0.0;
  if (std::isinf(q)) return 1.0;
  if (std::isinf(df)) return detail::normal_range_cdf(q, groups);

  // Density of s = sqrt(chi2_df / df).
  const double log_norm = 0.5 * df * std::log(df) - boost::math::lgamma(0.5 * df) - (0.5 * df - 1.0) * std::log(2.0);
  const auto integrand = [&](double s) {
    if (!(s > 0.0)) return 0.0;
    const double log_density = log_norm + (df - 1.0) * std::log(s) - 0.5 * df * s * s;
    return std::exp(log_density) * detail::normal_range_cdf(q * s, groups);
  };
  // The chi density is concentrated near s = 1 with width ~ 1/sqrt(2 df);
  // twelve widths either side leaves negligible mass.
  using boost::math::quadrature::gauss_kronrod;
  const double width = 1.0 / std::sqrt(2.0 * df);
  const double lo = std::max(0.0, 1.0 - 12.0 * width);
  const double hi = 1.0 + 12.0 * width;
  const double v = gauss_kronrod<double, 31>::integrate(integrand, lo, hi, 10, 1e-10);
  return std::clamp(v, 0.0, 1.0);
}

inline double studentized_range_sf(double q, int groups, double df) {
  return 1.0 - studentized_range_cdf(q, groups, df);
}

// Upper-alpha critical value: P(Q > q) = alpha.
inline double studentized_range_quantile(double alpha, int groups, double df) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0,1)");
  const auto f = [&](double q) { return studentized_range_sf(q, groups, df) - alpha; };
  double lo = 1e-6;
  double hi = 10.0;
  while (f(hi) > 0.0) hi *= 2.0;
  std::uintmax_t iters = 100;
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(40), iters);
  return 0.5 * (a + b);
}

// ---------------------------------------------------------------------------
// Post hoc
// ---------------------------------------------------------------------------

// Significance tiers: "ns", "+" (p < 0.1), "*" (< 0.05), "**" (< 0.01),
// "***" (< 0.001).
constexpr std::string_view significance_tier(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  if (p < 0.1) return "+";
  return "ns";
}

struct PairwiseComparison {
  int a = 0;
  int b = 0;
  double mean_difference = 0.0;  // mean_a - mean_b
  double q = 0.0;
  double p = 1.0;
  std::string_view tier = "ns";
};

struct PosthocResult {
  std::vector<PairwiseComparison> pairs;  // (0,1), (0,2), ..., (k-2,k-1)
  // Second stage is only valid after a significant omnibus test.
  bool omnibus_significant = false;
  double alpha = 0.05;

  const PairwiseComparison& pair(int a, int b) const {
    if (a > b) std::swap(a, b);
    for (const auto& c : pairs) {
      if (c.a == a && c.b == b) return c;
    }
    throw InputError("no such pair");
  }
};

// Fisher-Hayter: pairwise q against the studentized range with k-1 means.
inline PosthocResult fisher_hayter(const AnovaResult& anova, int n, double alpha = 0.05) {
  if (anova.k < 3) throw ProcedureError("Fisher-Hayter needs at least three conditions");
  if (n < 2) throw ProcedureError("Fisher-Hayter needs at least two subjects");
  PosthocResult out;
  out.alpha = alpha;
  out.omnibus_significant = anova.p < alpha;
  const double se = std::sqrt(anova.ms_error / n);
  for (int a = 0; a < anova.k; ++a) {
    for (int b = a + 1; b < anova.k; ++b) {
      PairwiseComparison c;
      c.a = a;
      c.b = b;
      c.mean_difference = anova.means[a] - anova.means[b];
      const double diff = std::abs(c.mean_difference);
      // Same relative floor as rm_anova so degenerate data stays degenerate.
      const double floor = 1e-12 * std::max({std::abs(anova.means[a]), std::abs(anova.means[b]), 1e-300});
      if (diff <= floor) {
        c.q = 0.0;
        c.p = 1.0;
      } else if (!(se > 0.0) || anova.ss_error <= 1e-13 * std::max(anova.ss_total, 1e-300)) {
        c.q = std::numeric_limits<double>::infinity();
        c.p = 0.0;
      } else {
        c.q = diff / se;
        c.p = studentized_range_sf(c.q, anova.k - 1, anova.df_error);
      }
      c.tier = significance_tier(c.p);
      out.pairs.push_back(c);
    }
  }
  return out;
}

// Sample standard deviation (n - 1).
inline double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace shsteer
