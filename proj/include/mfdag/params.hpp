#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mfdag/shape.hpp"

namespace mfdag {

/// P x P matrix of allowed directed edges (i -> j). The diagonal is never allowed.
class EdgeMask {
 public:
  EdgeMask() = default;
  /// All off-diagonal edges allowed.
  explicit EdgeMask(std::size_t P);
  static EdgeMask none(std::size_t P);

  std::size_t size() const { return P_; }
  bool allowed(std::size_t i, std::size_t j) const { return bits_[i * P_ + j] != 0; }
  /// Setting a diagonal entry is ignored.
  void set(std::size_t i, std::size_t j, bool allowed);

  bool operator==(const EdgeMask&) const = default;

 private:
  std::size_t P_ = 0;
  std::vector<unsigned char> bits_;
};

/// Learnable state of the EM algorithm.
///
/// Block (i, j) of the transition matrix is CL(i, j) kron CK(i, j) and acts
/// in row convention: x = x * C + xi, so a nonzero block is an edge i -> j.
struct ModelParams {
  ProblemShape shape;
  std::vector<Eigen::MatrixXd> cl;  ///< P*P blocks, index i*P + j, L[i] x L[j]
  std::vector<Eigen::MatrixXd> ck;  ///< P*P blocks, index i*P + j, K[i] x K[j]
  std::vector<Eigen::MatrixXd> basis;  ///< per node, T x K[j] with orthonormal columns
  std::vector<double> r2;              ///< per (j, l), flat in function_index order
  double omega2 = 1.0;
  EdgeMask mask;

  /// Zero transition blocks, zero bases, unit variances, unrestricted mask.
  static ModelParams zeros(const ProblemShape& shape);

  Eigen::MatrixXd& CL(std::size_t i, std::size_t j) { return cl[i * shape.P + j]; }
  const Eigen::MatrixXd& CL(std::size_t i, std::size_t j) const { return cl[i * shape.P + j]; }
  Eigen::MatrixXd& CK(std::size_t i, std::size_t j) { return ck[i * shape.P + j]; }
  const Eigen::MatrixXd& CK(std::size_t i, std::size_t j) const { return ck[i * shape.P + j]; }
  double r2_of(std::size_t j, std::size_t l) const { return r2[shape.function_index(j, l)]; }

  /// Throws ShapeError if any block or basis is mis-sized.
  void check_consistent() const;
};

/// Adjacency summary: W(i, j) = ||CL(i, j)||_F * ||CK(i, j)||_F.
struct BlockAdjacency {
  Eigen::MatrixXd W;
  EdgeMask mask;
};

/// Gaussian posterior of the latent coefficients given the observations.
struct PosteriorSummary {
  Eigen::MatrixXd u_hat;      ///< N x M posterior means, one row per sample
  Eigen::MatrixXd sigma_hat;  ///< M x M covariance shared by all samples
};

/// Full M x M transition matrix. Blocks where `mask` forbids an edge are zero.
Eigen::MatrixXd assemble_C(const ModelParams& params, const EdgeMask& mask);
inline Eigen::MatrixXd assemble_C(const ModelParams& params) {
  return assemble_C(params, params.mask);
}

BlockAdjacency compute_W(const ModelParams& params);

/// sqrt(||dC||_F^2 + ||dB||_F^2 + ||dr||^2 + (d omega2)^2) with C assembled.
double param_distance(const ModelParams& a, const ModelParams& b);

/// Rescales every nonzero CK block to unit Frobenius norm and folds the scale
/// into CL. Zero CK blocks force the matching CL block to zero. The
/// assembled transition matrix is unchanged.
void normalize_ck(ModelParams& params);

/// Sum over blocks of ||CL (x) CK||_F.
double group_norm(const ModelParams& params);

// ---- graph helpers on P x P supports --------------------------------------

/// Support of W: entries with |W(i, j)| > threshold (diagonal ignored).
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support(const Eigen::MatrixXd& W,
                                                             double threshold);

/// Depth-first cycle check on a directed graph given as adjacency.
bool is_acyclic(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adj);

/// A topological order of an acyclic adjacency, or an empty vector if cyclic.
std::vector<std::size_t> topological_order(
    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adj);

}  // namespace mfdag
