#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mfdag/dataset.hpp"
#include "mfdag/params.hpp"

namespace mfdag {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct SynthConfig {
  ProblemShape shape;  ///< uniform L and K are expected but not required
  double edge_prob = 0.4;
  double coef_low = 0.5;
  double coef_high = 2.0;
  double omega2_true = 1.0;
  double r2_true = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruth {
  ModelParams params_true;  ///< CK blocks normalized to unit Frobenius norm
  ModelParams params_raw;   ///< CL = c * ones(L, L), CK = I_K as generated
  BoolMatrix adjacency;
  std::vector<std::size_t> order;
  Eigen::MatrixXd latents;  ///< N x M coefficient draws behind the observations
};

struct DagSample {
  BoolMatrix adjacency;
  std::vector<std::size_t> order;
};

/// Erdos-Renyi DAG: a uniform random permutation fixes the causal order and
/// every forward pair becomes an edge with probability edge_prob.
DagSample sample_er_dag(std::size_t P, double edge_prob, std::mt19937_64& rng);

/// Unnormalized Fourier functions on `grid`: 1, cos(2 pi t), sin(2 pi t), cos(4 pi t), ...
Eigen::MatrixXd fourier_design(const Eigen::VectorXd& grid, std::size_t K);

/// Fourier design on the uniform T-point grid, orthonormalized by QR with a
/// positive R diagonal. Requires K < T.
Eigen::MatrixXd fourier_basis(std::size_t T, std::size_t K);

/// Draws a graph, Kronecker transition blocks, latents and noisy observations.
std::pair<FunctionalDataset, GroundTruth> generate_dataset(const SynthConfig& cfg);

}  // namespace mfdag
