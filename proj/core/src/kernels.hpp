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

#include <cstddef>

namespace segbert::kernels {

// C(n x m) += A(n x k) * B(k x m)
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t n,
                    std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* ci = c + i * m;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C(n x m) += A(n x k) * B(m x k)^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t n,
                    std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * m + j] += acc;
    }
  }
}

// C(n x m) += A(k x n)^T * B(k x m)
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t n,
                    std::size_t k, std::size_t m) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * n;
    const double* bp = b + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double api = ap[i];
      double* ci = c + i * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += api * bp[j];
    }
  }
}

}  // namespace segbert::kernels
