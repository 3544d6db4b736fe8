#include "mfdag/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mfdag/errors.hpp"

namespace mfdag {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

}  // namespace

void SynthConfig::validate() const {
  shape.validate_strict();
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw InputError("edge_prob must be in [0, 1]");
  if (!(coef_low > 0.0 && coef_low < coef_high)) throw InputError("coef_low/coef_high: need 0 < low < high");
  if (!(omega2_true >= 0.0) || !std::isfinite(omega2_true)) throw InputError("omega2_true must be >= 0");
  if (!(r2_true >= 0.0) || !std::isfinite(r2_true)) throw InputError("r2_true must be >= 0");
}

DagSample sample_er_dag(std::size_t P, double edge_prob, std::mt19937_64& rng) {
  if (P == 0) throw InputError("P must be >= 1");
  if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw InputError("edge_prob must be in [0, 1]");
  DagSample out;
  out.order.resize(P);
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::shuffle(out.order.begin(), out.order.end(), rng);
  out.adjacency = BoolMatrix::Constant(idx(P), idx(P), false);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t a = 0; a < P; ++a) {
    for (std::size_t b = a + 1; b < P; ++b) {
      if (unif(rng) < edge_prob) out.adjacency(idx(out.order[a]), idx(out.order[b])) = true;
    }
  }
  return out;
}

MatrixXd fourier_design(const Eigen::VectorXd& grid, std::size_t K) {
  const double two_pi = 2.0 * std::numbers::pi;
  MatrixXd X(grid.size(), idx(K));
  for (Index c = 0; c < idx(K); ++c) {
    const double u = static_cast<double>((c + 1) / 2);
    for (Index t = 0; t < grid.size(); ++t) {
      if (c == 0) {
        X(t, c) = 1.0;
      } else if (c % 2 == 1) {
        X(t, c) = std::cos(two_pi * u * grid(t));
      } else {
        X(t, c) = std::sin(two_pi * u * grid(t));
      }
    }
  }
  return X;
}

MatrixXd fourier_basis(std::size_t T, std::size_t K) {
  if (K == 0 || K >= T) throw InputError("fourier_basis needs 0 < K < T");
  const MatrixXd X = fourier_design(uniform_grid(T), K);
  Eigen::HouseholderQR<MatrixXd> qr(X);
  MatrixXd Q = qr.householderQ() * MatrixXd::Identity(idx(T), idx(K));
  const MatrixXd R = qr.matrixQR().topRows(idx(K)).triangularView<Eigen::Upper>();
  for (Index k = 0; k < idx(K); ++k) {
    if (std::abs(R(k, k)) < 1e-10) throw NumericalError("Fourier design is rank deficient on this grid");
    if (R(k, k) < 0.0) Q.col(k) = -Q.col(k);
  }
  return Q;
}

std::pair<FunctionalDataset, GroundTruth> generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const ProblemShape& s = cfg.shape;
  const std::size_t P = s.P;

  std::seed_seq graph_seq{static_cast<std::uint64_t>(cfg.seed), std::uint64_t{0}};
  std::mt19937_64 rng(graph_seq);
  GroundTruth truth;
  DagSample dag = sample_er_dag(P, cfg.edge_prob, rng);
  truth.adjacency = dag.adjacency;
  truth.order = dag.order;

  ModelParams raw = ModelParams::zeros(s);
  std::uniform_real_distribution<double> magnitude(cfg.coef_low, cfg.coef_high);
  std::bernoulli_distribution negative(0.5);
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) {
      if (!truth.adjacency(idx(i), idx(j))) continue;
      double c = magnitude(rng);
      if (negative(rng)) c = -c;
      raw.CL(i, j).setConstant(c);
      raw.CK(i, j) = MatrixXd::Identity(idx(s.K[i]), idx(s.K[j]));
    }
  }
  for (std::size_t j = 0; j < P; ++j) raw.basis[j] = fourier_basis(s.T, s.K[j]);
  std::fill(raw.r2.begin(), raw.r2.end(), cfg.r2_true);
  raw.omega2 = cfg.omega2_true;
  truth.params_raw = raw;
  truth.params_true = raw;
  normalize_ck(truth.params_true);

  // Row convention: x = x C + xi, so x = xi (I - C)^-1.
  const Index M = idx(s.latent_dim());
  const MatrixXd C = assemble_C(raw);
  const MatrixXd transfer = (MatrixXd::Identity(M, M) - C).partialPivLu().inverse();
  const double omega = std::sqrt(cfg.omega2_true);
  const double noise = std::sqrt(cfg.r2_true);

  FunctionalDataset data;
  data.shape = s;
  data.grid = uniform_grid(s.T);
  data.values.resize(idx(s.N), idx(s.obs_dim()));
  truth.latents.resize(idx(s.N), M);
  const Index T = idx(s.T);
  for (std::size_t n = 0; n < s.N; ++n) {
    // Each sample has its own stream so samples are reproducible in isolation.
    std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), std::uint64_t{1}, static_cast<std::uint64_t>(n)};
    std::mt19937_64 srng(seq);
    std::normal_distribution<double> normal;
    Eigen::RowVectorXd xi(M);
    for (Index m = 0; m < M; ++m) xi(m) = omega * normal(srng);
    const Eigen::RowVectorXd x = xi * transfer;
    truth.latents.row(idx(n)) = x;
    for (std::size_t j = 0; j < P; ++j) {
      for (std::size_t l = 0; l < s.L[j]; ++l) {
        const Index o = idx(s.obs_offset(j, l));
        const auto xs = x.segment(idx(s.latent_offset(j, l)), idx(s.K[j]));
        data.values.row(idx(n)).segment(o, T) = xs * raw.basis[j].transpose();
        for (Index t = 0; t < T; ++t) data.values(idx(n), o + t) += noise * normal(srng);
      }
    }
  }
  return {std::move(data), std::move(truth)};
}

}  // namespace mfdag
