#pragma once

#include <span>
#include <string_view>

// Reduction kernels used in the residual, norm and distance computations.
// Each routine has a portable scalar reference and, on x86-64, an AVX2/FMA
// variant. The active variant is chosen once at startup from CPUID and can be
// overridden (tests pin each variant to check they agree).

namespace mfdag::kernels {

enum class Isa { kScalar, kAvx2 };

/// Best variant supported by the running CPU.
Isa detect_isa() noexcept;
/// Variant currently used by the dispatching entry points.
Isa active_isa() noexcept;
/// Forces a variant. Requesting kAvx2 on a CPU without it falls back to scalar.
void set_isa(Isa isa) noexcept;
std::string_view isa_name(Isa isa) noexcept;

double dot(std::span<const double> x, std::span<const double> y);
double sum_squares(std::span<const double> x);
double squared_distance(std::span<const double> x, std::span<const double> y);
/// y <- y + alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace scalar {
double dot(const double* x, const double* y, std::size_t n) noexcept;
double sum_squares(const double* x, std::size_t n) noexcept;
double squared_distance(const double* x, const double* y, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
}  // namespace scalar

namespace avx2 {
bool available() noexcept;
double dot(const double* x, const double* y, std::size_t n) noexcept;
double sum_squares(const double* x, std::size_t n) noexcept;
double squared_distance(const double* x, const double* y, std::size_t n) noexcept;
void axpy(double alpha, const double* x, double* y, std::size_t n) noexcept;
}  // namespace avx2

}  // namespace mfdag::kernels
