#include <atomic>
#include <cstdlib>
#include <cstring>

#include "mfdag/errors.hpp"
#include "mfdag/kernels.hpp"

namespace mfdag::kernels {

namespace {

Isa initial_isa() noexcept {
  if (const char* env = std::getenv("MFDAG_FORCE_SCALAR"); env && std::strcmp(env, "0") != 0) {
    return Isa::kScalar;
  }
  return detect_isa();
}

std::atomic<Isa>& current() noexcept {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

void require_same_size(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("kernel operands differ in length");
}

}  // namespace

Isa detect_isa() noexcept { return avx2::available() ? Isa::kAvx2 : Isa::kScalar; }

Isa active_isa() noexcept { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) noexcept {
  if (isa == Isa::kAvx2 && !avx2::available()) isa = Isa::kScalar;
  current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) noexcept { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

double dot(std::span<const double> x, std::span<const double> y) {
  require_same_size(x.size(), y.size());
  return active_isa() == Isa::kAvx2 ? avx2::dot(x.data(), y.data(), x.size())
                                    : scalar::dot(x.data(), y.data(), x.size());
}

double sum_squares(std::span<const double> x) {
  return active_isa() == Isa::kAvx2 ? avx2::sum_squares(x.data(), x.size())
                                    : scalar::sum_squares(x.data(), x.size());
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
  require_same_size(x.size(), y.size());
  return active_isa() == Isa::kAvx2 ? avx2::squared_distance(x.data(), y.data(), x.size())
                                    : scalar::squared_distance(x.data(), y.data(), x.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_size(x.size(), y.size());
  if (active_isa() == Isa::kAvx2) {
    avx2::axpy(alpha, x.data(), y.data(), x.size());
  } else {
    scalar::axpy(alpha, x.data(), y.data(), x.size());
  }
}

}  // namespace mfdag::kernels
