#include "mfdag/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define MFDAG_HAVE_AVX2 1
#endif

namespace mfdag::kernels::avx2 {

#ifdef MFDAG_HAVE_AVX2

namespace {

inline double hsum(__m256d v) {
  // lanes (0,1,2,3) -> (0+2) + (1+3), matching the scalar reference order
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d pair = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(pair) + _mm_cvtsd_f64(_mm_unpackhi_pd(pair, pair));
}

}  // namespace

bool available() noexcept {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

double dot(const double* x, const double* y, std::size_t n) noexcept {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i] * y[i];
  return hsum(acc) + tail;
}

double sum_squares(const double* x, std::size_t n) noexcept { return dot(x, x, n); }

double squared_distance(const double* x, const double* y, std::size_t n) noexcept {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    tail += d * d;
  }
  return hsum(acc) + tail;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

#else

bool available() noexcept { return false; }
double dot(const double* x, const double* y, std::size_t n) noexcept {
  return scalar::dot(x, y, n);
}
double sum_squares(const double* x, std::size_t n) noexcept { return scalar::sum_squares(x, n); }
double squared_distance(const double* x, const double* y, std::size_t n) noexcept {
  return scalar::squared_distance(x, y, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  scalar::axpy(alpha, x, y, n);
}

#endif

}  // namespace mfdag::kernels::avx2
