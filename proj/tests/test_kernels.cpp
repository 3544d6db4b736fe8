#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "mfdag/kernels.hpp"

namespace k = mfdag::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

// Summation order differs between variants, so compare relative to the
// magnitude of the terms.
double tolerance(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] * y[i]);
  return 1e-14 * (s + 1.0);
}

struct IsaGuard {
  k::Isa saved = k::active_isa();
  ~IsaGuard() { k::set_isa(saved); }
};

}  // namespace

TEST_CASE("scalar kernels match naive loops") {
  std::mt19937_64 rng(1);
  const auto x = random_vector(37, rng);
  const auto y = random_vector(37, rng);
  double dot = 0.0, ss = 0.0, sd = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    ss += x[i] * x[i];
    sd += (x[i] - y[i]) * (x[i] - y[i]);
  }
  CHECK(k::scalar::dot(x.data(), y.data(), x.size()) == doctest::Approx(dot).epsilon(1e-14));
  CHECK(k::scalar::sum_squares(x.data(), x.size()) == doctest::Approx(ss).epsilon(1e-14));
  CHECK(k::scalar::squared_distance(x.data(), y.data(), x.size()) == doctest::Approx(sd).epsilon(1e-14));
  auto z = y;
  k::scalar::axpy(0.5, x.data(), z.data(), z.size());
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == y[i] + 0.5 * x[i]);
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
  if (!k::avx2::available()) {
    MESSAGE("AVX2 not available on this CPU; equivalence check skipped");
    return;
  }
  std::mt19937_64 rng(2);
  for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 17u, 31u, 64u, 100u, 1001u}) {
    CAPTURE(n);
    const auto x = random_vector(n, rng);
    const auto y = random_vector(n, rng);
    const double tol = tolerance(x, y) + tolerance(x, x) + tolerance(y, y);
    CHECK(std::abs(k::avx2::dot(x.data(), y.data(), n) - k::scalar::dot(x.data(), y.data(), n)) <= tol);
    CHECK(std::abs(k::avx2::sum_squares(x.data(), n) - k::scalar::sum_squares(x.data(), n)) <= tol);
    CHECK(std::abs(k::avx2::squared_distance(x.data(), y.data(), n) -
                   k::scalar::squared_distance(x.data(), y.data(), n)) <= 4.0 * tol);
    auto a = y, b = y;
    k::avx2::axpy(-1.25, x.data(), a.data(), n);
    k::scalar::axpy(-1.25, x.data(), b.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-15 * (std::abs(b[i]) + 1.0));
  }
}

TEST_CASE("dispatch follows set_isa") {
  IsaGuard guard;
  std::mt19937_64 rng(3);
  const auto x = random_vector(203, rng);
  const auto y = random_vector(203, rng);

  k::set_isa(k::Isa::kScalar);
  CHECK(k::active_isa() == k::Isa::kScalar);
  CHECK(k::dot(x, y) == k::scalar::dot(x.data(), y.data(), x.size()));
  CHECK(k::sum_squares(x) == k::scalar::sum_squares(x.data(), x.size()));

  k::set_isa(k::Isa::kAvx2);
  if (k::avx2::available()) {
    CHECK(k::active_isa() == k::Isa::kAvx2);
    CHECK(k::dot(x, y) == k::avx2::dot(x.data(), y.data(), x.size()));
    CHECK(k::squared_distance(x, y) == k::avx2::squared_distance(x.data(), y.data(), x.size()));
  } else {
    CHECK(k::active_isa() == k::Isa::kScalar);
  }
  CHECK(k::isa_name(k::Isa::kScalar) != k::isa_name(k::Isa::kAvx2));
}

TEST_CASE("span entry points reject mismatched lengths") {
  std::vector<double> a(3, 1.0), b(4, 1.0);
  CHECK_THROWS(k::dot(a, b));
  CHECK_THROWS(k::squared_distance(a, b));
  CHECK_THROWS(k::axpy(1.0, a, b));
}
