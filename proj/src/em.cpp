#include "mfdag/em.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "mfdag/errors.hpp"
#include "mfdag/inference.hpp"

namespace mfdag {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

ProblemShape fit_shape(const FunctionalDataset& data, const FitConfig& cfg) {
  ProblemShape shape = data.shape;
  if (!cfg.K.empty()) {
    if (cfg.K.size() != shape.P) throw InputError("K: expected one entry per node");
    shape.K = cfg.K;
  }
  shape.validate_strict();
  return shape;
}

// Copy of `params` whose support (nonzero W) is acyclic, obtained by deleting
// the weakest edges first, plus a topological order of what remains.
std::pair<ModelParams, std::vector<std::size_t>> acyclic_projection(const ModelParams& params) {
  ModelParams out = params;
  const MatrixXd W = compute_W(params).W;
  auto adj = support(W, 0.0);
  std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
  for (Index i = 0; i < W.rows(); ++i) {
    for (Index j = 0; j < W.cols(); ++j) {
      if (adj(i, j)) edges.emplace_back(W(i, j), static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
  }
  std::sort(edges.begin(), edges.end());
  for (const auto& [w, i, j] : edges) {
    if (is_acyclic(adj)) break;
    adj(idx(i), idx(j)) = false;
    out.CL(i, j).setZero();
  }
  return {out, topological_order(adj)};
}

}  // namespace

void FitConfig::validate() const {
  solver.validate();
  if (!(eps0 > 0.0)) throw InputError("eps0 must be > 0");
  if (max_em_iter < 1) throw InputError("max_em_iter must be >= 1");
}

PrincipalBasis principal_basis(const MatrixXd& gram, std::size_t K, std::mt19937_64& rng) {
  const Index T = gram.rows();
  if (gram.cols() != T) throw ShapeError("Gram matrix must be square");
  if (idx(K) > T) throw InputError("K must not exceed T");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (gram + gram.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  const auto& values = eig.eigenvalues();
  const double top = std::max(values.size() > 0 ? values(T - 1) : 0.0, 0.0);

  PrincipalBasis out;
  out.basis = MatrixXd::Zero(T, idx(K));
  Index kept = 0;
  for (Index c = 0; c < idx(K); ++c) {
    const Index src = T - 1 - c;
    if (!(values(src) > 1e-12 * std::max(1.0, top))) break;
    auto col = out.basis.col(c);
    col = eig.eigenvectors().col(src);
    // Sign convention: the largest-magnitude entry is positive.
    Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0.0) col = -col;
    ++kept;
  }
  if (kept < idx(K)) {
    out.padded = true;
    std::normal_distribution<double> normal;
    for (Index c = kept; c < idx(K); ++c) {
      for (int attempt = 0;; ++attempt) {
        Eigen::VectorXd v(T);
        for (Index t = 0; t < T; ++t) v(t) = normal(rng);
        for (Index p = 0; p < c; ++p) v -= out.basis.col(p).dot(v) * out.basis.col(p);
        for (Index p = 0; p < c; ++p) v -= out.basis.col(p).dot(v) * out.basis.col(p);
        const double n = v.norm();
        if (n > 1e-8) {
          out.basis.col(c) = v / n;
          break;
        }
        if (attempt > 100) throw NumericalError("could not complete an orthonormal basis");
      }
    }
  }
  return out;
}

MatrixXd node_gram(const FunctionalDataset& data, std::size_t j) {
  const Index T = idx(data.shape.T);
  MatrixXd gram = MatrixXd::Zero(T, T);
  for (std::size_t l = 0; l < data.shape.L[j]; ++l) {
    gram.noalias() += data.series(j, l).transpose() * data.series(j, l);
  }
  return gram;
}

ModelParams initialize(const FunctionalDataset& data, const ProblemShape& shape, const FitConfig& cfg) {
  data.validate();
  shape.validate_strict();
  if (shape.P != data.shape.P || shape.L != data.shape.L || shape.T != data.shape.T) {
    throw ShapeError("initialization shape does not match the dataset");
  }
  ProblemShape s = shape;
  s.N = data.shape.N;
  ModelParams params = ModelParams::zeros(s);
  if (cfg.mask) {
    if (cfg.mask->size() != s.P) throw InputError("mask: size differs from P");
    params.mask = *cfg.mask;
  }
  const double scale = 1.0 / (static_cast<double>(data.values.rows()) * static_cast<double>(s.T));
  for (std::size_t j = 0; j < s.P; ++j) {
    std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(j)};
    std::mt19937_64 rng(seq);
    params.basis[j] = principal_basis(node_gram(data, j), s.K[j], rng).basis;
    const MatrixXd& B = params.basis[j];
    for (std::size_t l = 0; l < s.L[j]; ++l) {
      const MatrixXd Y = data.series(j, l);
      const MatrixXd resid = Y - (Y * B) * B.transpose();
      params.r2[s.function_index(j, l)] = scale * resid.squaredNorm();
    }
  }
  return params;
}

double penalized_q(const FunctionalDataset& data, const ModelParams& params, const PosteriorSummary& post,
                   double lambda) {
  const double n = static_cast<double>(post.u_hat.rows());
  return expected_complete_loglik(data, params, post) / n - lambda * group_norm(params);
}

PosteriorSummary run_estep(const FunctionalDataset& data, const ModelParams& params, EStepMethod method) {
  if (method == EStepMethod::kDirect) return posterior_direct(data, params);
  auto [projected, order] = acyclic_projection(params);
  return ffbs_posterior(data, projected, order);
}

FitReport fit(const FunctionalDataset& data, const FitConfig& cfg) {
  cfg.validate();
  data.validate();
  const ProblemShape shape = fit_shape(data, cfg);

  ModelParams params;
  if (cfg.init) {
    params = *cfg.init;
    params.check_consistent();
    if (params.shape.P != shape.P || params.shape.L != shape.L || params.shape.K != shape.K ||
        params.shape.T != shape.T) {
      throw InputError("init_model: shape does not match the dataset and K");
    }
    params.shape.N = shape.N;
    if (cfg.mask) params.mask = *cfg.mask;
  } else {
    params = initialize(data, shape, cfg);
  }

  const double lambda = cfg.solver.lambda;
  // Each C-step continues from the previous one: it starts from the blocks
  // the previous solve reached before its proximal step, with the penalty
  // coefficients it ended at. Later M-steps then refine an acyclic solution
  // instead of re-deriving the order, and the shrinkage is not compounded.
  double dual_a = cfg.solver.a_init;
  double dual_b = cfg.solver.b_init;
  std::vector<MatrixXd> smooth_cl, smooth_ck;
  FitReport report;
  for (int iter = 1; iter <= cfg.max_em_iter; ++iter) {
    try {
      const ModelParams prev = params;
      const PosteriorSummary post = run_estep(data, params, cfg.estep);
      report.q_start_history.push_back(penalized_q(data, params, post, lambda));

      // Observation block: basis (weighted polar step), then noise variances.
      std::vector<double> weights(params.r2.size());
      for (std::size_t f = 0; f < weights.size(); ++f) weights[f] = 1.0 / std::max(params.r2[f], kR2Floor);
      params.basis = update_basis(data, post, params.basis, weights).basis;
      params.r2 = update_r(data, post, params.basis);

      // Latent block: C at the current omega2, kept only if it raises the
      // penalized objective once omega2 is re-optimized.
      const MatrixXd S = second_moment(post);
      SolverConfig scfg = cfg.solver;
      scfg.lambda = 2.0 * std::max(params.omega2, kOmega2Floor) * lambda;
      scfg.a_init = dual_a;
      scfg.b_init = dual_b;
      ModelParams start = params;
      if (!smooth_cl.empty()) {
        start.cl = smooth_cl;
        start.ck = smooth_ck;
      }
      const SolveResult sol = solve_C(S, start, scfg);
      if (!sol.inner_converged) report.inner_converged = false;
      smooth_cl = sol.smooth_cl;
      smooth_ck = sol.smooth_ck;
      dual_a = sol.a_final;
      dual_b = sol.b_final;

      ModelParams cand = params;
      cand.cl = sol.cl;
      cand.ck = sol.ck;
      cand.omega2 = update_omega(post, assemble_C(cand));
      params.omega2 = update_omega(post, assemble_C(params));
      if (penalized_q(data, cand, post, lambda) >= penalized_q(data, params, post, lambda)) {
        params = std::move(cand);
      } else {
        ++report.rejected_c_steps;
      }

      report.q_history.push_back(penalized_q(data, params, post, lambda));
      const double d = param_distance(params, prev);
      report.d_history.push_back(d);
      report.iterations = iter;
      if (d < cfg.eps0) {
        report.converged = true;
        break;
      }
    } catch (const NumericalError& e) {
      throw NumericalError("EM iteration " + std::to_string(iter) + ": " + e.what());
    }
  }

  report.W = compute_W(params);
  report.h_final = notears_h(report.W.W).value;
  report.params = std::move(params);
  return report;
}

}  // namespace mfdag
