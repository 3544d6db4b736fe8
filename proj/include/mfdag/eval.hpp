#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mfdag/dataset.hpp"
#include "mfdag/params.hpp"
#include "mfdag/synth.hpp"

namespace mfdag {

struct EdgeMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int shd = 0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
};

/// Directed-edge confusion counts and derived scores. Precision (recall) is
/// 1 when nothing is predicted (nothing is true). F1 is 0 when precision and
/// recall are both 0. SHD counts unordered pairs whose edge state differs.
EdgeMetrics edge_metrics(const BoolMatrix& estimated, const BoolMatrix& truth);

/// Per node, the orthogonal Q minimizing ||B_est Q - B_true||_F.
std::vector<Eigen::MatrixXd> procrustes_align(const std::vector<Eigen::MatrixXd>& B_est,
                                              const std::vector<Eigen::MatrixXd>& B_true);

/// ||C_aligned - C_true||_F^2 with C_aligned block (i, j) = CL kron (Q_i^T CK Q_j).
double aligned_c_error(const ModelParams& est, const ModelParams& truth);

struct MseDiagnostics {
  double mse_est = 0.0;
  std::optional<double> mse_true;
  std::optional<double> delta;  ///< |mse_est - mse_true|
};

/// mse_est is the posterior expectation of ||Y - B x||^2 / (N L T) under the
/// fitted model; mse_true uses the true bases and latents when `truth` has them.
MseDiagnostics mse_diagnostics(const FunctionalDataset& data, const ModelParams& est,
                               const GroundTruth* truth);

}  // namespace mfdag
