/* Copyright 2026 The segbert Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <limits>

#include "segbert/random.hpp"
#include "segbert/tensor.hpp"

namespace segbert::testing {

inline double frame_distance(const Tensor& a, std::size_t i, const Tensor& b, std::size_t j) {
  double d = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) d += (a(i, c) - b(j, c)) * (a(i, c) - b(j, c));
  return d;
}

// Walks every monotone path from (0,0) to the far corner and keeps the
// cheapest total. Exponential; only for short inputs.
inline double brute_force_dtw_cost(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), m = b.rows();
  double best = std::numeric_limits<double>::infinity();
  auto walk = [&](auto& self, std::size_t i, std::size_t j, double acc) -> void {
    acc += frame_distance(a, i, b, j);
    if (acc > best) return;
    if (i + 1 == n && j + 1 == m) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < n && j + 1 < m) self(self, i + 1, j + 1, acc);
    if (i + 1 < n) self(self, i + 1, j, acc);
    if (j + 1 < m) self(self, i, j + 1, acc);
  };
  walk(walk, 0, 0, 0.0);
  return best;
}

// Small integers keep every partial sum exact, so costs compare with ==.
inline Tensor integer_segment(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.values()) v = static_cast<double>(static_cast<int>(rng.index(9)) - 4);
  return t;
}

// Duplicate the template until it covers K frames, then cut.
inline Tensor duplicate_then_truncate(const Tensor& tmpl, std::size_t k) {
  Tensor out(0, tmpl.cols());
  while (out.rows() < k)
    for (std::size_t r = 0; r < tmpl.rows(); ++r) out.append_row(tmpl.row(r));
  return out.slice_rows(0, k);
}

}  // namespace segbert::testing
