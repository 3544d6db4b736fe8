#include "mfdag/baselines.hpp"

#include <random>

#include "mfdag/errors.hpp"
#include "mfdag/inference.hpp"

namespace mfdag {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

ProblemShape with_k(const FunctionalDataset& data, const std::vector<std::size_t>& K) {
  ProblemShape s = data.shape;
  if (!K.empty()) {
    if (K.size() != s.P) throw InputError("K: expected one entry per node");
    s.K = K;
  }
  s.validate_strict();
  return s;
}

ModelParams params_from_fpca(const FpcaResult& f, const FitConfig& cfg) {
  ModelParams p = ModelParams::zeros(f.shape);
  p.basis = f.basis;
  p.r2 = f.r2;
  if (cfg.mask) {
    if (cfg.mask->size() != f.shape.P) throw InputError("mask: size differs from P");
    p.mask = *cfg.mask;
  }
  return p;
}

FitReport finish_report(ModelParams params, const ModelParams& start, const SolveResult& sol,
                        const PosteriorSummary& post) {
  FitReport r;
  params.omega2 = update_omega(post, assemble_C(params));
  r.iterations = 1;
  r.d_history.push_back(param_distance(params, start));
  r.converged = true;
  r.inner_converged = sol.inner_converged;
  r.W = compute_W(params);
  r.h_final = notears_h(r.W.W).value;
  r.params = std::move(params);
  return r;
}

}  // namespace

FpcaResult fpca_scores(const FunctionalDataset& data, const std::vector<std::size_t>& K, FpcaMode mode,
                       std::uint64_t seed) {
  data.validate();
  FpcaResult out;
  out.shape = with_k(data, K);
  const auto& s = out.shape;
  out.basis.resize(s.P);
  if (mode == FpcaMode::kShared) {
    for (std::size_t j = 1; j < s.P; ++j) {
      if (s.K[j] != s.K[0]) throw InputError("K: shared bases need the same K for every node");
    }
    MatrixXd gram = MatrixXd::Zero(idx(s.T), idx(s.T));
    for (std::size_t j = 0; j < s.P; ++j) gram += node_gram(data, j);
    std::seed_seq seq{static_cast<std::uint64_t>(seed), std::uint64_t{0}};
    std::mt19937_64 rng(seq);
    PrincipalBasis pb = principal_basis(gram, s.K[0], rng);
    out.padded = pb.padded;
    for (auto& b : out.basis) b = pb.basis;
  } else {
    for (std::size_t j = 0; j < s.P; ++j) {
      std::seed_seq seq{static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(j)};
      std::mt19937_64 rng(seq);
      PrincipalBasis pb = principal_basis(node_gram(data, j), s.K[j], rng);
      out.padded = out.padded || pb.padded;
      out.basis[j] = std::move(pb.basis);
    }
  }

  out.scores.resize(data.values.rows(), idx(s.latent_dim()));
  out.r2.resize(s.total_functions());
  const double scale = 1.0 / (static_cast<double>(data.values.rows()) * static_cast<double>(s.T));
  for (std::size_t j = 0; j < s.P; ++j) {
    for (std::size_t l = 0; l < s.L[j]; ++l) {
      const MatrixXd Y = data.series(j, l);
      const MatrixXd proj = Y * out.basis[j];
      out.scores.middleCols(idx(s.latent_offset(j, l)), idx(s.K[j])) = proj;
      out.r2[s.function_index(j, l)] = scale * (Y - proj * out.basis[j].transpose()).squaredNorm();
    }
  }
  return out;
}

FitReport fit_mfgm(const FunctionalDataset& data, const FitConfig& cfg) {
  cfg.validate();
  const FpcaResult f = fpca_scores(data, cfg.K, FpcaMode::kPerNode, cfg.seed);
  const ModelParams start = params_from_fpca(f, cfg);
  const Index M = f.scores.cols();
  const PosteriorSummary post{f.scores, MatrixXd::Zero(M, M)};
  const SolveResult sol = solve_C(post, start, cfg.solver);
  ModelParams params = start;
  params.cl = sol.cl;
  params.ck = sol.ck;
  return finish_report(std::move(params), start, sol, post);
}

FitReport fit_scalar_notears(const FunctionalDataset& data, const FitConfig& cfg) {
  cfg.validate();
  const FpcaResult f = fpca_scores(data, cfg.K, FpcaMode::kShared, cfg.seed);
  const auto& s = f.shape;
  const std::size_t M = s.latent_dim();
  const ModelParams node_start = params_from_fpca(f, cfg);

  // Every score becomes a 1 x 1 node; scores of one node are never linked.
  ProblemShape scalar = ProblemShape::uniform(M, 1, 1, 1, s.N);
  ModelParams sp = ModelParams::zeros(scalar);
  std::vector<std::size_t> owner(M);
  for (std::size_t j = 0; j < s.P; ++j) {
    for (std::size_t i = 0; i < s.node_dim(j); ++i) owner[s.latent_offset(j) + i] = j;
  }
  for (std::size_t a = 0; a < M; ++a) {
    for (std::size_t b = 0; b < M; ++b) {
      sp.mask.set(a, b, owner[a] != owner[b] && node_start.mask.allowed(owner[a], owner[b]));
    }
  }
  const PosteriorSummary post{f.scores, MatrixXd::Zero(idx(M), idx(M))};
  const SolveResult sol = solve_C(post, sp, cfg.solver);
  sp.cl = sol.cl;
  sp.ck = sol.ck;
  const MatrixXd Cs = assemble_C(sp);

  ModelParams params = node_start;
  MatrixXd merged = MatrixXd::Zero(idx(s.P), idx(s.P));
  for (std::size_t i = 0; i < s.P; ++i) {
    for (std::size_t j = 0; j < s.P; ++j) {
      if (i == j) continue;
      const MatrixXd block = Cs.block(idx(s.latent_offset(i)), idx(s.latent_offset(j)), idx(s.node_dim(i)),
                                      idx(s.node_dim(j)));
      merged(idx(i), idx(j)) = block.norm();
      auto [A, B] = nearest_kronecker(block, idx(s.L[i]), idx(s.L[j]), idx(s.K[i]), idx(s.K[j]));
      params.CL(i, j) = A;
      params.CK(i, j) = B;
    }
  }
  FitReport r = finish_report(std::move(params), node_start, sol, post);
  r.W.W = merged;
  r.h_final = notears_h(merged).value;
  return r;
}

}  // namespace mfdag
