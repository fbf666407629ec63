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
#include <stdexcept>
#include <string>

#include "lstr/simd.hpp"

namespace lstr::simd {
namespace {

Backend detect() {
  if (const char* env = std::getenv("LSTR_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return Backend::kScalar;
  }
  return avx2_supported() ? Backend::kAvx2 : Backend::kScalar;
}

struct State {
  Backend backend = detect();
  const KernelTable* table =
      backend == Backend::kAvx2 ? avx2::table() : &scalar::table();
};

State& state() {
  static State s;
  return s;
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  if (avx2::table() == nullptr) return false;
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return state().backend; }

std::string_view backend_name(Backend backend) {
  return backend == Backend::kAvx2 ? "avx2" : "scalar";
}

void set_backend(Backend backend) {
  if (backend == Backend::kAvx2 && !avx2_supported()) {
    throw std::runtime_error("simd: avx2 backend not supported on this CPU");
  }
  state().backend = backend;
  state().table = backend == Backend::kAvx2 ? avx2::table() : &scalar::table();
}

const KernelTable& kernels() { return *state().table; }

}  // namespace lstr::simd
