#include "mfdag/inference.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mfdag/errors.hpp"
#include "mfdag/kernels.hpp"

namespace mfdag {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

constexpr double kSingularRcond = 1e-13;

Eigen::PartialPivLU<MatrixXd> factor_i_minus_c(const MatrixXd& C) {
  const MatrixXd A = MatrixXd::Identity(C.rows(), C.cols()) - C;
  Eigen::PartialPivLU<MatrixXd> lu(A);
  if (!(lu.rcond() > kSingularRcond)) {
    throw NumericalError("cyclic or degenerate transition matrix: I - C is singular");
  }
  return lu;
}

MatrixXd symmetrized(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

double floored_r2(const ModelParams& p, std::size_t j, std::size_t l) {
  return std::max(p.r2_of(j, l), kR2Floor);
}

void check_data(const FunctionalDataset& data, const ModelParams& params) {
  params.check_consistent();
  const auto& a = data.shape;
  const auto& b = params.shape;
  if (a.P != b.P || a.L != b.L || a.T != b.T) throw ShapeError("data and model shapes differ");
  if (data.values.rows() != idx(a.N) || data.values.cols() != idx(a.obs_dim())) {
    throw ShapeError("dataset values have the wrong size");
  }
}

/// Noise representation of one latent block: mean + G * xi + H * eps.
struct NoiseRep {
  MatrixXd mean;  // N x d
  MatrixXd G;     // d x M
  MatrixXd H;     // d x E
};

}  // namespace

MatrixXd prior_covariance(const MatrixXd& C, double omega2) {
  if (C.rows() != C.cols()) throw ShapeError("transition matrix must be square");
  const auto lu = factor_i_minus_c(C);
  const MatrixXd inv = lu.inverse();
  return symmetrized(std::max(omega2, kOmega2Floor) * inv.transpose() * inv);
}

PosteriorSummary posterior_direct(const FunctionalDataset& data, const ModelParams& params) {
  return posterior_direct(data, params, assemble_C(params));
}

PosteriorSummary posterior_direct(const FunctionalDataset& data, const ModelParams& params,
                                  const MatrixXd& C) {
  check_data(data, params);
  const auto& s = params.shape;
  const Index M = idx(s.latent_dim());
  if (C.rows() != M || C.cols() != M) throw ShapeError("C must be M x M");
  factor_i_minus_c(C);

  const double omega2 = std::max(params.omega2, kOmega2Floor);
  const MatrixXd A = MatrixXd::Identity(M, M) - C;
  MatrixXd precision = (A * A.transpose()) / omega2;

  MatrixXd scores(data.values.rows(), M);
  for (std::size_t j = 0; j < s.P; ++j) {
    const MatrixXd& B = params.basis[j];
    const MatrixXd gram = B.transpose() * B;
    for (std::size_t l = 0; l < s.L[j]; ++l) {
      const double r2 = floored_r2(params, j, l);
      const Index o = idx(s.latent_offset(j, l));
      const Index k = idx(s.K[j]);
      precision.block(o, o, k, k) += gram / r2;
      scores.middleCols(o, k).noalias() = data.series(j, l) * B / r2;
    }
  }

  Eigen::LLT<MatrixXd> llt(symmetrized(precision));
  if (llt.info() != Eigen::Success) {
    throw NumericalError("posterior precision is not positive definite");
  }
  PosteriorSummary post;
  post.sigma_hat = symmetrized(llt.solve(MatrixXd::Identity(M, M)));
  post.u_hat.noalias() = scores * post.sigma_hat;
  return post;
}

PosteriorSummary ffbs_posterior(const FunctionalDataset& data, const ModelParams& params,
                                std::span<const std::size_t> order) {
  check_data(data, params);
  const auto& s = params.shape;
  const std::size_t P = s.P;
  const Index M = idx(s.latent_dim());
  const Index E = idx(s.obs_dim());
  const Index N = data.values.rows();
  const Index T = idx(s.T);

  // Order must be a permutation consistent with every nonzero block.
  if (order.size() != P) throw InputError("not a valid topological order: wrong length");
  std::vector<std::size_t> pos(P, P);
  for (std::size_t t = 0; t < P; ++t) {
    if (order[t] >= P || pos[order[t]] != P) {
      throw InputError("not a valid topological order: not a permutation");
    }
    pos[order[t]] = t;
  }
  const auto W = compute_W(params).W;
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) {
      if (i != j && W(idx(i), idx(j)) > 0.0 && pos[i] >= pos[j]) {
        throw InputError("not a valid topological order: edge " + std::to_string(i) + " -> " +
                         std::to_string(j) + " points backwards");
      }
    }
  }

  const MatrixXd C = assemble_C(params);
  const double omega2 = std::max(params.omega2, kOmega2Floor);
  VectorXd rd(E);
  for (std::size_t j = 0; j < P; ++j) {
    for (std::size_t l = 0; l < s.L[j]; ++l) {
      rd.segment(idx(s.obs_offset(j, l)), T).setConstant(floored_r2(params, j, l));
    }
  }
  auto cross_cov = [&](const MatrixXd& Ga, const MatrixXd& Ha, const MatrixXd& Gb,
                       const MatrixXd& Hb) -> MatrixXd {
    return omega2 * Ga * Gb.transpose() + Ha * rd.asDiagonal() * Hb.transpose();
  };

  // Prior prediction of node j from the current representations of its parents.
  auto propagate = [&](std::size_t j, const std::vector<NoiseRep>& reps,
                       const std::vector<bool>& have) {
    const Index d = idx(s.node_dim(j));
    const Index oj = idx(s.latent_offset(j));
    NoiseRep rep{MatrixXd::Zero(N, d), MatrixXd::Zero(d, M), MatrixXd::Zero(d, E)};
    rep.G.middleCols(oj, d).setIdentity();
    for (std::size_t k = 0; k < P; ++k) {
      if (k == j || !have[k] || W(idx(k), idx(j)) <= 0.0) continue;
      const auto block = C.block(idx(s.latent_offset(k)), oj, idx(s.node_dim(k)), d);
      rep.mean.noalias() += reps[k].mean * block;
      rep.G.noalias() += block.transpose() * reps[k].G;
      rep.H.noalias() += block.transpose() * reps[k].H;
    }
    return rep;
  };

  std::vector<NoiseRep> work(P);
  std::vector<bool> visited(P, false);
  std::vector<NoiseRep> filtered(P);                 // indexed by node
  std::vector<std::vector<NoiseRep>> predicted(P);   // [position t] -> nodes at t+1..P-1

  for (std::size_t t = 0; t < P; ++t) {
    const std::size_t j = order[t];
    work[j] = propagate(j, work, visited);
    visited[j] = true;

    // Observation of node j: Y_j = (I_L kron B_j) x_j + eps_j.
    const Index rows = idx(s.L[j]) * T;
    const Index kj = idx(s.K[j]);
    const MatrixXd& B = params.basis[j];
    MatrixXd yg(rows, M), yh(rows, E), innov(N, rows);
    for (std::size_t l = 0; l < s.L[j]; ++l) {
      const Index r0 = idx(l) * T;
      const Index c0 = idx(l) * kj;
      yg.middleRows(r0, T).noalias() = B * work[j].G.middleRows(c0, kj);
      yh.middleRows(r0, T).noalias() = B * work[j].H.middleRows(c0, kj);
      yh.block(r0, idx(s.obs_offset(j, l)), T, T) += MatrixXd::Identity(T, T);
      innov.middleCols(r0, T) = data.series(j, l) - work[j].mean.middleCols(c0, kj) * B.transpose();
    }
    Eigen::LLT<MatrixXd> vy(symmetrized(cross_cov(yg, yh, yg, yh)));
    if (vy.info() != Eigen::Success) throw NumericalError("observation covariance is singular");

    for (std::size_t u = 0; u <= t; ++u) {
      NoiseRep& rep = work[order[u]];
      const MatrixXd gain = vy.solve(cross_cov(rep.G, rep.H, yg, yh).transpose()).transpose();
      rep.mean.noalias() += innov * gain.transpose();
      rep.G.noalias() -= gain * yg;
      rep.H.noalias() -= gain * yh;
    }
    filtered[j] = work[j];

    // Joint prediction of every later node given the observations so far.
    std::vector<NoiseRep> ahead = work;
    std::vector<bool> have = visited;
    for (std::size_t v = t + 1; v < P; ++v) {
      const std::size_t node = order[v];
      ahead[node] = propagate(node, ahead, have);
      have[node] = true;
      predicted[t].push_back(ahead[node]);
    }
  }

  // Backward smoothing in reverse order.
  std::vector<NoiseRep> smoothed = filtered;
  for (std::size_t t = P; t-- > 0;) {
    if (t + 1 == P) continue;
    const std::size_t k = order[t];
    Index dS = 0;
    for (std::size_t v = t + 1; v < P; ++v) dS += idx(s.node_dim(order[v]));
    MatrixXd pm(N, dS), pg(dS, M), ph(dS, E), sm(N, dS), sg(dS, M), sh(dS, E);
    Index off = 0;
    for (std::size_t v = t + 1; v < P; ++v) {
      const std::size_t node = order[v];
      const Index d = idx(s.node_dim(node));
      const NoiseRep& pr = predicted[t][v - t - 1];
      pm.middleCols(off, d) = pr.mean;
      pg.middleRows(off, d) = pr.G;
      ph.middleRows(off, d) = pr.H;
      sm.middleCols(off, d) = smoothed[node].mean;
      sg.middleRows(off, d) = smoothed[node].G;
      sh.middleRows(off, d) = smoothed[node].H;
      off += d;
    }
    Eigen::LLT<MatrixXd> pred_cov(symmetrized(cross_cov(pg, ph, pg, ph)));
    if (pred_cov.info() != Eigen::Success) throw NumericalError("prediction covariance is singular");
    const NoiseRep& f = filtered[k];
    const MatrixXd J = pred_cov.solve(cross_cov(f.G, f.H, pg, ph).transpose()).transpose();
    NoiseRep& out = smoothed[k];
    out.mean = f.mean + (sm - pm) * J.transpose();
    out.G = f.G + J * (sg - pg);
    out.H = f.H + J * (sh - ph);
  }

  MatrixXd G(M, M), H(M, E);
  PosteriorSummary post;
  post.u_hat.resize(N, M);
  for (std::size_t j = 0; j < P; ++j) {
    const Index o = idx(s.latent_offset(j));
    const Index d = idx(s.node_dim(j));
    post.u_hat.middleCols(o, d) = smoothed[j].mean;
    G.middleRows(o, d) = smoothed[j].G;
    H.middleRows(o, d) = smoothed[j].H;
  }
  post.sigma_hat = symmetrized(cross_cov(G, H, G, H));
  return post;
}

double expected_residual_energy(const FunctionalDataset& data, const MatrixXd& basis,
                                const PosteriorSummary& post, std::size_t j, std::size_t l) {
  const auto& s = data.shape;
  const Index o = idx(s.latent_offset(j, l));
  const Index k = idx(s.K[j]);
  if (basis.rows() != idx(s.T) || basis.cols() != k) throw ShapeError("basis must be T x K");
  const MatrixXd fitted = post.u_hat.middleCols(o, k) * basis.transpose();
  const MatrixXd observed = data.series(j, l);
  const double resid = kernels::squared_distance(
      std::span<const double>(observed.data(), static_cast<std::size_t>(observed.size())),
      std::span<const double>(fitted.data(), static_cast<std::size_t>(fitted.size())));
  const double trace =
      (basis * post.sigma_hat.block(o, o, k, k) * basis.transpose()).trace();
  return resid + static_cast<double>(post.u_hat.rows()) * trace;
}

double expected_transition_energy(const PosteriorSummary& post, const MatrixXd& C) {
  const Index M = C.rows();
  if (post.u_hat.cols() != M || post.sigma_hat.rows() != M) {
    throw ShapeError("posterior and C dimensions differ");
  }
  const MatrixXd A = MatrixXd::Identity(M, M) - C;
  const MatrixXd resid = post.u_hat * A;
  const double fit =
      kernels::sum_squares(std::span<const double>(resid.data(), static_cast<std::size_t>(resid.size())));
  const double trace = (A.transpose() * post.sigma_hat * A).trace();
  return fit + static_cast<double>(post.u_hat.rows()) * trace;
}

double expected_complete_loglik(const FunctionalDataset& data, const ModelParams& params,
                                const PosteriorSummary& post) {
  check_data(data, params);
  const auto& s = params.shape;
  const double N = static_cast<double>(post.u_hat.rows());
  if (post.u_hat.rows() != data.values.rows()) throw ShapeError("posterior has wrong N");
  double total = 0.0;
  for (std::size_t j = 0; j < s.P; ++j) {
    for (std::size_t l = 0; l < s.L[j]; ++l) {
      const double r2 = floored_r2(params, j, l);
      total += expected_residual_energy(data, params.basis[j], post, j, l) / r2 +
               N * static_cast<double>(s.T) * std::log(r2);
    }
  }
  const double omega2 = std::max(params.omega2, kOmega2Floor);
  total += expected_transition_energy(post, assemble_C(params)) / omega2 +
           N * static_cast<double>(s.latent_dim()) * std::log(omega2);
  return -0.5 * total;
}

}  // namespace mfdag
