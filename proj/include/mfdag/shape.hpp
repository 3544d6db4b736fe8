#pragma once

#include <cstddef>
#include <vector>

namespace mfdag {

/// Dimensions of a multivariate functional DAG problem.
///
/// The stacked latent vector is laid out node-major, then function-major,
/// then coefficient: entry `i` (0-based) of node j's block is coefficient
/// `i % K[j]` of function `i / K[j]`. Observations use the same ordering
/// with the T grid points in place of the K coefficients.
struct ProblemShape {
  std::size_t P = 0;
  std::vector<std::size_t> L;  ///< functions per node
  std::vector<std::size_t> K;  ///< basis functions per node
  std::size_t T = 0;           ///< grid length
  std::size_t N = 0;           ///< sample count

  static ProblemShape uniform(std::size_t P, std::size_t L0, std::size_t K0, std::size_t T,
                              std::size_t N);

  /// Throws InputError unless all counts are positive and sizes agree.
  void validate() const;
  /// Additionally requires K[j] < T for every node.
  void validate_strict() const;

  /// Latent dimension, sum of L[j] * K[j].
  std::size_t latent_dim() const;
  /// Observation dimension per sample, sum of L[j] * T.
  std::size_t obs_dim() const;
  std::size_t total_functions() const;

  std::size_t node_dim(std::size_t j) const { return L[j] * K[j]; }
  /// First latent index of node j.
  std::size_t latent_offset(std::size_t j) const;
  /// First latent index of function l of node j.
  std::size_t latent_offset(std::size_t j, std::size_t l) const {
    return latent_offset(j) + l * K[j];
  }
  std::size_t obs_offset(std::size_t j) const;
  std::size_t obs_offset(std::size_t j, std::size_t l) const { return obs_offset(j) + l * T; }
  /// Flat index of (j, l) in per-function lists such as r2.
  std::size_t function_index(std::size_t j, std::size_t l) const;

  bool operator==(const ProblemShape&) const = default;
};

}  // namespace mfdag
