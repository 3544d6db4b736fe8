#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mfdag/dataset.hpp"
#include "mfdag/em.hpp"

namespace mfdag {

enum class FpcaMode { kPerNode, kShared };

struct FpcaResult {
  ProblemShape shape;                  ///< dataset shape with the requested K
  Eigen::MatrixXd scores;              ///< N x M projections in the latent layout
  std::vector<Eigen::MatrixXd> basis;  ///< one T x K_j basis per node
  std::vector<double> r2;              ///< mean squared projection residual per (j, l)
  bool padded = false;                 ///< some basis needed random completion
};

/// Functional PCA scores. Per-node mode takes node j's principal directions
/// from its own series; shared mode pools every node and needs equal K_j.
FpcaResult fpca_scores(const FunctionalDataset& data, const std::vector<std::size_t>& K, FpcaMode mode,
                       std::uint64_t seed);

/// Two-stage baseline: per-node FPCA, then one solve_C on the scores with a
/// zero posterior covariance.
FitReport fit_mfgm(const FunctionalDataset& data, const FitConfig& cfg);

/// Scalar baseline: shared-basis scores, an unstructured NOTEARS fit with
/// each score as its own variable, then a node-level W from the Frobenius
/// norm of each score sub-block. The returned params hold the nearest
/// Kronecker-product approximation of each block; report.W is the merged W.
FitReport fit_scalar_notears(const FunctionalDataset& data, const FitConfig& cfg);


}  // namespace mfdag
