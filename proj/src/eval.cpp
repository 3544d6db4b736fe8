#include "mfdag/eval.hpp"

#include <cmath>

#include "mfdag/errors.hpp"
#include "mfdag/inference.hpp"

namespace mfdag {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

}  // namespace

EdgeMetrics edge_metrics(const BoolMatrix& estimated, const BoolMatrix& truth) {
  if (estimated.rows() != truth.rows() || estimated.cols() != truth.cols() ||
      truth.rows() != truth.cols()) {
    throw ShapeError("edge_metrics: adjacency sizes differ");
  }
  EdgeMetrics m;
  const Index P = truth.rows();
  for (Index i = 0; i < P; ++i) {
    for (Index j = 0; j < P; ++j) {
      if (i == j) continue;
      const bool e = estimated(i, j), t = truth(i, j);
      if (e && t) ++m.tp;
      if (e && !t) ++m.fp;
      if (!e && t) ++m.fn;
    }
    for (Index j = i + 1; j < P; ++j) {
      if (estimated(i, j) != truth(i, j) || estimated(j, i) != truth(j, i)) ++m.shd;
    }
  }
  m.precision = (m.tp + m.fp) == 0 ? 1.0 : static_cast<double>(m.tp) / (m.tp + m.fp);
  m.recall = (m.tp + m.fn) == 0 ? 1.0 : static_cast<double>(m.tp) / (m.tp + m.fn);
  const double denom = m.precision + m.recall;
  m.f1 = denom == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / denom;
  return m;
}

std::vector<MatrixXd> procrustes_align(const std::vector<MatrixXd>& B_est,
                                       const std::vector<MatrixXd>& B_true) {
  if (B_est.size() != B_true.size()) throw ShapeError("procrustes_align: node counts differ");
  std::vector<MatrixXd> Q;
  Q.reserve(B_est.size());
  for (std::size_t j = 0; j < B_est.size(); ++j) {
    if (B_est[j].rows() != B_true[j].rows() || B_est[j].cols() != B_true[j].cols()) {
      throw ShapeError("procrustes_align: basis " + std::to_string(j) + " shapes differ");
    }
    Eigen::JacobiSVD<MatrixXd> svd(B_est[j].transpose() * B_true[j], Eigen::ComputeFullU | Eigen::ComputeFullV);
    Q.push_back(svd.matrixU() * svd.matrixV().transpose());
  }
  return Q;
}

double aligned_c_error(const ModelParams& est, const ModelParams& truth) {
  est.check_consistent();
  truth.check_consistent();
  const auto& a = est.shape;
  const auto& b = truth.shape;
  if (a.P != b.P || a.L != b.L || a.K != b.K || a.T != b.T) throw ShapeError("aligned_c_error: shapes differ");
  const auto Q = procrustes_align(est.basis, truth.basis);
  ModelParams rotated = est;
  for (std::size_t i = 0; i < a.P; ++i) {
    for (std::size_t j = 0; j < a.P; ++j) rotated.CK(i, j) = Q[i].transpose() * est.CK(i, j) * Q[j];
  }
  return (assemble_C(rotated) - assemble_C(truth)).squaredNorm();
}

MseDiagnostics mse_diagnostics(const FunctionalDataset& data, const ModelParams& est, const GroundTruth* truth) {
  const auto& s = data.shape;
  const double denom = static_cast<double>(s.N) * static_cast<double>(s.total_functions()) * static_cast<double>(s.T);
  MseDiagnostics out;
  const PosteriorSummary post = posterior_direct(data, est);
  double total = 0.0;
  for (std::size_t j = 0; j < s.P; ++j) {
    for (std::size_t l = 0; l < s.L[j]; ++l) total += expected_residual_energy(data, est.basis[j], post, j, l);
  }
  out.mse_est = total / denom;

  if (truth != nullptr && truth->latents.size() > 0) {
    const auto& ts = truth->params_true.shape;
    if (truth->latents.rows() != data.values.rows() || truth->latents.cols() != idx(ts.latent_dim())) {
      throw ShapeError("ground-truth latents do not match the dataset");
    }
    double resid = 0.0;
    for (std::size_t j = 0; j < s.P; ++j) {
      for (std::size_t l = 0; l < s.L[j]; ++l) {
        const MatrixXd fitted = truth->latents.middleCols(idx(ts.latent_offset(j, l)), idx(ts.K[j])) *
                                truth->params_true.basis[j].transpose();
        resid += (data.series(j, l) - fitted).squaredNorm();
      }
    }
    out.mse_true = resid / denom;
    out.delta = std::abs(out.mse_est - *out.mse_true);
  }
  return out;
}

}  // namespace mfdag
