// Copyright 2026 The wsnad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "wsnad/kernels.hpp"

namespace wsnad::kernels {

namespace {

constexpr KernelTable kScalar{Isa::scalar,   scalar::gemm, scalar::gemm_nt, scalar::gemm_tn,
                              scalar::dot,   scalar::axpy, scalar::scale_add};
constexpr KernelTable kAvx2{Isa::avx2,   avx2::gemm, avx2::gemm_nt, avx2::gemm_tn,
                            avx2::dot,   avx2::axpy, avx2::scale_add};

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* detect() {
  const char* env = std::getenv("WSNAD_KERNELS");
  if (env != nullptr) {
    const std::string want(env);
    if (want == "scalar") return &kScalar;
    if (want == "avx2" && available(Isa::avx2)) return &kAvx2;
  }
  return available(Isa::avx2) ? &kAvx2 : &kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{detect()};
  return ptr;
}

}  // namespace

bool available(Isa isa) {
  if (isa == Isa::scalar) return true;
  static const bool ok = avx2::compiled() && cpu_has_avx2();
  return ok;
}

const KernelTable& table(Isa isa) {
  if (!available(isa)) throw std::runtime_error("kernel set not available: " + std::string(name(isa)));
  return isa == Isa::avx2 ? kAvx2 : kScalar;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void select(Isa isa) { current().store(&table(isa), std::memory_order_relaxed); }

std::string_view name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace wsnad::kernels
