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


#include <cstdlib>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "lstr/simd.hpp"

namespace lstr::simd {
namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Reduction order differs between backends, so agreement is to a few ulps of
// the accumulated magnitude rather than bitwise.
double tolerance(std::size_t terms) { return 1e-13 * static_cast<double>(terms + 1); }

class BackendGuard {
 public:
  BackendGuard() : saved_(active_backend()) {}
  ~BackendGuard() { set_backend(saved_); }

 private:
  Backend saved_;
};

TEST(Simd, ScalarAlwaysAvailable) {
  BackendGuard guard;
  EXPECT_NO_THROW(set_backend(Backend::kScalar));
  EXPECT_EQ(active_backend(), Backend::kScalar);
  EXPECT_EQ(backend_name(Backend::kScalar), "scalar");
}

TEST(Simd, UnsupportedBackendIsRejected) {
  BackendGuard guard;
  if (avx2_supported()) {
    EXPECT_NO_THROW(set_backend(Backend::kAvx2));
    EXPECT_EQ(active_backend(), Backend::kAvx2);
  } else {
    EXPECT_THROW(set_backend(Backend::kAvx2), std::runtime_error);
  }
}

TEST(Simd, EnvironmentOverrideSelectsScalar) {
  // The variable is read once at start-up; ctest runs this binary a second
  // time with LSTR_SIMD=scalar.
  const char* env = std::getenv("LSTR_SIMD");
  if (env != nullptr && std::string(env) == "scalar") {
    EXPECT_EQ(active_backend(), Backend::kScalar);
  } else if (avx2_supported()) {
    EXPECT_EQ(active_backend(), Backend::kAvx2);
  } else {
    GTEST_SKIP() << "no AVX2 on this machine";
  }
}

class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!avx2_supported() || avx2::table() == nullptr) GTEST_SKIP() << "no AVX2 on this machine";
    fast_ = avx2::table();
  }
  const KernelTable& ref_ = scalar::table();
  const KernelTable* fast_ = nullptr;
  std::mt19937_64 rng_{42};
};

TEST_F(SimdEquivalence, DotAndAxpyAllLengths) {
  for (std::size_t n = 0; n <= 67; ++n) {
    auto a = random_vec(n, rng_), b = random_vec(n, rng_);
    EXPECT_NEAR(ref_.dot(a.data(), b.data(), n), fast_->dot(a.data(), b.data(), n), tolerance(n)) << n;
    auto y1 = b, y2 = b;
    ref_.axpy(0.75, a.data(), y1.data(), n);
    fast_->axpy(0.75, a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], 1e-15) << n;
  }
}

TEST_F(SimdEquivalence, GemmVariantsRaggedShapes) {
  for (std::size_t m : {1u, 3u, 4u, 7u, 9u}) {
    for (std::size_t n : {1u, 2u, 5u, 8u, 13u}) {
      for (std::size_t k : {1u, 4u, 6u, 17u}) {
        const auto a = random_vec(m * k, rng_), b = random_vec(k * n, rng_), bt = random_vec(n * k, rng_);
        const auto c0 = random_vec(m * n, rng_);
        using Gemm = void (*)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
        const std::pair<Gemm, Gemm> variants[] = {{ref_.gemm_nn, fast_->gemm_nn},
                                                  {ref_.gemm_tn, fast_->gemm_tn},
                                                  {ref_.gemm_nt, fast_->gemm_nt}};
        for (std::size_t v = 0; v < 3; ++v) {
          const double* rhs = v == 2 ? bt.data() : b.data();
          auto c1 = c0, c2 = c0;
          variants[v].first(m, n, k, a.data(), rhs, c1.data());
          variants[v].second(m, n, k, a.data(), rhs, c2.data());
          for (std::size_t i = 0; i < c1.size(); ++i) {
            EXPECT_NEAR(c1[i], c2[i], tolerance(k)) << "variant " << v << " m" << m << " n" << n << " k" << k;
          }
        }
      }
    }
  }
}

TEST(Simd, ScalarGemmMatchesDefinition) {
  const KernelTable& ref_ = scalar::table();
  std::mt19937_64 rng_{7};
  const std::size_t m = 3, n = 4, k = 5;
  const auto a = random_vec(m * k, rng_), b = random_vec(k * n, rng_);
  std::vector<double> c(m * n, 1.0);
  ref_.gemm_nn(m, n, k, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 1.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], s, 1e-14);
    }
  }
}

}  // namespace
}  // namespace lstr::simd
