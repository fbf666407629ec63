/*
 * Copyright 2026 The LSTR Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lstr/simd.hpp"

namespace lstr::simd::scalar {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      axpy(av, b + p * n, crow, n);
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[p * m + i];
      if (av == 0.0) continue;
      axpy(av, brow, c + i * n, n);
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{dot, axpy, gemm_nn, gemm_tn, gemm_nt};
  return t;
}

}  // namespace lstr::simd::scalar
