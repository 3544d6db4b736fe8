#include "mfdag/kernels.hpp"

namespace mfdag::kernels::scalar {

// Four independent accumulators, summed pairwise at the end. The AVX2 path
// uses the same lane structure, so both variants agree to a few ulps.

double dot(const double* x, const double* y, std::size_t n) noexcept {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int k = 0; k < 4; ++k) acc[k] += x[i + k] * y[i + k];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i] * y[i];
  return ((acc[0] + acc[2]) + (acc[1] + acc[3])) + tail;
}

double sum_squares(const double* x, std::size_t n) noexcept {
  return dot(x, x, n);
}

double squared_distance(const double* x, const double* y, std::size_t n) noexcept {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int k = 0; k < 4; ++k) {
      const double d = x[i + k] - y[i + k];
      acc[k] += d * d;
    }
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    tail += d * d;
  }
  return ((acc[0] + acc[2]) + (acc[1] + acc[3])) + tail;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace mfdag::kernels::scalar
