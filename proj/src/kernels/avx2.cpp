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

#include "wsnad/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define WSNAD_HAVE_AVX2 1
#else
#define WSNAD_HAVE_AVX2 0
#endif

namespace wsnad::kernels::avx2 {

#if WSNAD_HAVE_AVX2

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// y[0:n] += alpha * x[0:n]
inline void axpy_row(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d y0 = _mm256_loadu_pd(y + j);
    __m256d y1 = _mm256_loadu_pd(y + j + 4);
    y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), y0);
    y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j + 4), y1);
    _mm256_storeu_pd(y + j, y0);
    _mm256_storeu_pd(y + j + 4, y1);
  }
  for (; j + 4 <= n; j += 4) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  }
  for (; j < n; ++j) y[j] += alpha * x[j];
}

}  // namespace

bool compiled() { return true; }

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c) {
  if (n < 4) {
    scalar::gemm(m, n, k, a, b, c);
    return;
  }
  std::size_t i = 0;
  // Two output rows per pass so each B row load feeds two FMAs.
  for (; i + 2 <= m; i += 2) {
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    const double* a0 = a + i * k;
    const double* a1 = a0 + k;
    for (std::size_t p = 0; p < k; ++p) {
      const __m256d v0 = _mm256_set1_pd(a0[p]);
      const __m256d v1 = _mm256_set1_pd(a1[p]);
      const double* bp = b + p * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const __m256d bj = _mm256_loadu_pd(bp + j);
        _mm256_storeu_pd(c0 + j, _mm256_fmadd_pd(v0, bj, _mm256_loadu_pd(c0 + j)));
        _mm256_storeu_pd(c1 + j, _mm256_fmadd_pd(v1, bj, _mm256_loadu_pd(c1 + j)));
      }
      for (; j < n; ++j) {
        c0[j] += a0[p] * bp[j];
        c1[j] += a1[p] * bp[j];
      }
    }
  }
  for (; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) axpy_row(n, ai[p], b + p * n, c + i * n);
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  if (k < 4) {
    scalar::gemm_nt(m, n, k, a, b, c);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(k, ai, b + j * k);
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  if (n < 4) {
    scalar::gemm_tn(m, n, k, a, b, c);
    return;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) axpy_row(n, ap[i], bp, c + i * n);
  }
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) { axpy_row(n, alpha, x, y); }

void scale_add(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = alpha * y[i] + x[i];
}

#else  // !WSNAD_HAVE_AVX2

bool compiled() { return false; }
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c) {
  scalar::gemm(m, n, k, a, b, c);
}
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  scalar::gemm_nt(m, n, k, a, b, c);
}
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  scalar::gemm_tn(m, n, k, a, b, c);
}
double dot(std::size_t n, const double* x, const double* y) { return scalar::dot(n, x, y); }
void axpy(std::size_t n, double alpha, const double* x, double* y) {
  scalar::axpy(n, alpha, x, y);
}
void scale_add(std::size_t n, double alpha, const double* x, double* y) {
  scalar::scale_add(n, alpha, x, y);
}

#endif

}  // namespace wsnad::kernels::avx2
