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
#include <string>
#include <utility>
#include <vector>

#include "shsteer/common.hpp"

namespace shsteer {

using ConditionOrder = std::vector<int>;

// Row i of the cyclic k x k square: (i + j) mod k.
inline ConditionOrder cyclic_row(int k, int i) {
  ConditionOrder row(k);
  for (int j = 0; j < k; ++j) row[j] = (i + j) % k;
  return row;
}

// Orders for n subjects: subjects 0..k-1 take the rows of the cyclic square,
// subjects k..2k-1 the rows of its row-reversed mirror.
inline std::vector<ConditionOrder> latin_squares(int k, int n) {
  if (k < 1) throw InputError("need at least one condition");
  if (n < 0) throw InputError("subject count must be non-negative");
  if (n > 2 * k) throw InputError("two Latin squares of order " + std::to_string(k) + " cover at most " +
                                  std::to_string(2 * k) + " subjects");
  std::vector<ConditionOrder> orders;
  for (int s = 0; s < n; ++s) {
    auto row = cyclic_row(k, s % k);
    if (s >= k) std::reverse(row.begin(), row.end());
    orders.push_back(std::move(row));
  }
  return orders;
}

inline bool is_latin(const std::vector<ConditionOrder>& square) {
  const auto k = square.size();
  for (std::size_t i = 0; i < k; ++i) {
    if (square[i].size() != k) return false;
    std::vector<int> row_seen(k, 0);
    std::vector<int> col_seen(k, 0);
    for (std::size_t j = 0; j < k; ++j) {
      const int r = square[i][j];
      const int c = square[j][i];
      if (r < 0 || c < 0 || static_cast<std::size_t>(r) >= k || static_cast<std::size_t>(c) >= k) return false;
      if (row_seen[r]++ || col_seen[c]++) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// NASA-TLX
// ---------------------------------------------------------------------------

inline constexpr int kTlxScales = 6;
inline constexpr int kTlxPairs = 15;

inline constexpr std::array<const char*, kTlxScales> kTlxScaleNames = {
    "mental", "physical", "temporal", "performance", "effort", "frustration"};

struct TlxSheet {
  std::array<double, kTlxScales> scales{};  // 0..100
  std::array<int, kTlxScales> weights{};    // 0..5, sum 15
};

// The 15 scale pairs (a < b) in lexicographic order.
inline std::array<std::pair<int, int>, kTlxPairs> tlx_pairs() {
  std::array<std::pair<int, int>, kTlxPairs> out{};
  int n = 0;
  for (int a = 0; a < kTlxScales; ++a)
    for (int b = a + 1; b < kTlxScales; ++b) out[n++] = {a, b};
  return out;
}

// `winners[i]` is the scale chosen in pair i of tlx_pairs().
inline std::array<int, kTlxScales> tlx_weights(const std::array<int, kTlxPairs>& winners) {
  std::array<int, kTlxScales> w{};
  const auto pairs = tlx_pairs();
  for (int i = 0; i < kTlxPairs; ++i) {
    const auto [a, b] = pairs[i];
    if (winners[i] != a && winners[i] != b) {
      throw FormatError("TLX choice " + std::to_string(i) + " names a scale outside its pair");
    }
    ++w[winners[i]];
  }
  return w;
}

inline TlxSheet make_tlx_sheet(const std::array<double, kTlxScales>& scales,
                               const std::array<int, kTlxPairs>& winners) {
  return {scales, tlx_weights(winners)};
}

inline double tlx_score(const TlxSheet& sheet) {
  int total = 0;
  for (int w : sheet.weights) {
    if (w < 0 || w > 5) throw FormatError("TLX weight outside 0..5");
    total += w;
  }
  if (total != kTlxPairs) throw FormatError("TLX weights must sum to 15");
  double score = 0.0;
  for (int i = 0; i < kTlxScales; ++i) {
    if (!(sheet.scales[i] >= 0.0 && sheet.scales[i] <= 100.0)) throw FormatError("TLX scale outside 0..100");
    score += sheet.weights[i] * sheet.scales[i];
  }
  return score / kTlxPairs;
}

}  // namespace shsteer
