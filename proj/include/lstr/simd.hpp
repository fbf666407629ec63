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

#pragma once

// Data-parallel inner loops shared by every dense layer. Each kernel has a
// portable scalar reference and an AVX2+FMA variant; the active variant is
// chosen once at startup from the CPU feature bits (override with the
// environment variable LSTR_SIMD=scalar).
//
// All matrices are row-major. The gemm kernels accumulate into C.

#include <cstddef>
#include <span>
#include <string_view>

namespace lstr::simd {

enum class Backend { kScalar, kAvx2 };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
};

namespace scalar {
const KernelTable& table();
}
namespace avx2 {
// Null entries when the binary was built without x86-64 support.
const KernelTable* table();
}

bool avx2_supported();
Backend active_backend();
std::string_view backend_name(Backend backend);
// Throws std::runtime_error when the requested backend is not supported here.
void set_backend(Backend backend);
const KernelTable& kernels();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return kernels().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}
inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  kernels().gemm_nn(m, n, k, a, b, c);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  kernels().gemm_tn(m, n, k, a, b, c);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  kernels().gemm_nt(m, n, k, a, b, c);
}

}  // namespace lstr::simd
