#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mfdag/dataset.hpp"
#include "mfdag/mstep.hpp"
#include "mfdag/params.hpp"

namespace mfdag {

enum class EStepMethod { kDirect, kFfbs };

struct FitConfig {
  SolverConfig solver;
  double eps0 = 1e-4;
  int max_em_iter = 200;
  std::uint64_t seed = 0;
  EStepMethod estep = EStepMethod::kDirect;
  /// Basis sizes per node; empty means use the dataset's shape.
  std::vector<std::size_t> K;
  /// Allowed edges; unset means every off-diagonal edge.
  std::optional<EdgeMask> mask;
  /// Warm start. Replaces the FPCA initialization when set.
  std::optional<ModelParams> init;

  void validate() const;
};

struct FitReport {
  ModelParams params;
  BlockAdjacency W;
  int iterations = 0;
  std::vector<double> d_history;
  double h_final = 0.0;
  /// Penalized objective Q_n(theta_s; theta_s) - lambda ||C_s|| at the start of each iteration.
  std::vector<double> q_start_history;
  /// Penalized objective Q_n(theta_{s+1}; theta_s) - lambda ||C_{s+1}|| after each iteration.
  std::vector<double> q_history;
  bool converged = false;
  int rejected_c_steps = 0;
  bool inner_converged = true;
};

/// Orthonormal T x K basis from the top eigenvectors of a T x T Gram matrix.
/// Directions with (near) zero eigenvalue are replaced by orthonormalized
/// Gaussian columns from `rng`; `padded` reports whether that happened.
struct PrincipalBasis {
  Eigen::MatrixXd basis;
  bool padded = false;
};
PrincipalBasis principal_basis(const Eigen::MatrixXd& gram, std::size_t K, std::mt19937_64& rng);

/// Gram matrix sum over samples and functions of Y_jl^T Y_jl for node j (T x T).
Eigen::MatrixXd node_gram(const FunctionalDataset& data, std::size_t j);

/// FPCA start: per-node principal bases, C = 0, omega2 = 1, r2 equal to the
/// mean squared projection residual.
ModelParams initialize(const FunctionalDataset& data, const ProblemShape& shape, const FitConfig& cfg);

/// Q_n(params; post) - lambda * group_norm, with Q_n the per-sample
/// expected complete-data log-likelihood.
double penalized_q(const FunctionalDataset& data, const ModelParams& params,
                   const PosteriorSummary& post, double lambda);

/// E-step with the configured method. The FFBS path prunes the weakest
/// edges until the support is acyclic before running.
PosteriorSummary run_estep(const FunctionalDataset& data, const ModelParams& params, EStepMethod method);

/// Regularized EM.
FitReport fit(const FunctionalDataset& data, const FitConfig& cfg);

}  // namespace mfdag
