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

#pragma once

#include <cstddef>
#include <string_view>

// Dense inner-loop kernels. Every routine has a portable scalar reference and
// an AVX2+FMA variant; the variant is chosen once at startup from CPUID and
// may be forced with WSNAD_KERNELS=scalar|avx2. All matrices are contiguous
// row-major and every routine accumulates into its output.

namespace wsnad::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  // C(m×n) += A(m×k)·B(k×n)
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c);
  // C(m×n) += A(m×k)·B(n×k)ᵀ
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C(m×n) += A(k×m)ᵀ·B(k×n)
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha·x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // y = alpha·y + x
  void (*scale_add)(std::size_t n, double alpha, const double* x, double* y);
};

const KernelTable& active();
const KernelTable& table(Isa isa);
bool available(Isa isa);
/// Overrides the runtime choice. Throws if the ISA is not supported here.
void select(Isa isa);
std::string_view name(Isa isa);

namespace scalar {
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
double dot(std::size_t n, const double* x, const double* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void scale_add(std::size_t n, double alpha, const double* x, double* y);
}  // namespace scalar

namespace avx2 {
bool compiled();
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
double dot(std::size_t n, const double* x, const double* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
void scale_add(std::size_t n, double alpha, const double* x, double* y);
}  // namespace avx2

}  // namespace wsnad::kernels
