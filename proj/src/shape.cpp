#include "mfdag/shape.hpp"

#include <numeric>
#include <string>

#include "mfdag/errors.hpp"

namespace mfdag {

ProblemShape ProblemShape::uniform(std::size_t P, std::size_t L0, std::size_t K0, std::size_t T,
                                   std::size_t N) {
  ProblemShape s;
  s.P = P;
  s.L.assign(P, L0);
  s.K.assign(P, K0);
  s.T = T;
  s.N = N;
  return s;
}

void ProblemShape::validate() const {
  if (P < 1) throw InputError("P must be >= 1");
  if (L.size() != P) throw InputError("L must have P entries");
  if (K.size() != P) throw InputError("K must have P entries");
  if (T < 1) throw InputError("T must be >= 1");
  if (N < 1) throw InputError("N must be >= 1");
  for (std::size_t j = 0; j < P; ++j) {
    if (L[j] < 1) throw InputError("L[" + std::to_string(j) + "] must be >= 1");
    if (K[j] < 1) throw InputError("K[" + std::to_string(j) + "] must be >= 1");
  }
}

void ProblemShape::validate_strict() const {
  validate();
  for (std::size_t j = 0; j < P; ++j) {
    if (K[j] >= T) {
      throw InputError("K[" + std::to_string(j) + "] must be smaller than T");
    }
  }
}

std::size_t ProblemShape::latent_dim() const {
  std::size_t m = 0;
  for (std::size_t j = 0; j < P; ++j) m += L[j] * K[j];
  return m;
}

std::size_t ProblemShape::obs_dim() const { return total_functions() * T; }

std::size_t ProblemShape::total_functions() const {
  return std::accumulate(L.begin(), L.end(), std::size_t{0});
}

std::size_t ProblemShape::latent_offset(std::size_t j) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < j; ++i) off += L[i] * K[i];
  return off;
}

std::size_t ProblemShape::obs_offset(std::size_t j) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < j; ++i) off += L[i];
  return off * T;
}

std::size_t ProblemShape::function_index(std::size_t j, std::size_t l) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < j; ++i) off += L[i];
  return off + l;
}

}  // namespace mfdag
