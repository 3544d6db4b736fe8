#include "mfdag/mstep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "mfdag/errors.hpp"
#include "mfdag/inference.hpp"
#include "mfdag/kernels.hpp"

namespace mfdag {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Index idx(std::size_t v) { return static_cast<Index>(v); }

constexpr std::size_t kNonmonotoneMemory = 10;
// Stalled-progress test: the inner loop also ends once the objective has
// dropped by less than inner_rel_tol (relative) over this many iterations.
constexpr std::size_t kProgressWindow = 50;
constexpr int kPreconditionerRefresh = 20;
constexpr double kFactorFloor = 1e-2;

double frob2(const MatrixXd& m) {
  return kernels::sum_squares(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

// Flattening of the free solver variables: for every allowed ordered pair
// (row-major over i, j) the CL entries followed by the CK entries.
struct BlockLayout {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<Index> offset;
  Index size = 0;
};

BlockLayout make_layout(const ModelParams& p) {
  BlockLayout lay;
  const std::size_t P = p.shape.P;
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) {
      if (i == j || !p.mask.allowed(i, j)) continue;
      lay.pairs.emplace_back(i, j);
      lay.offset.push_back(lay.size);
      lay.size += p.CL(i, j).size() + p.CK(i, j).size();
    }
  }
  return lay;
}

VectorXd pack(const BlockLayout& lay, const ModelParams& p, const std::vector<MatrixXd>& cl,
              const std::vector<MatrixXd>& ck) {
  VectorXd v(lay.size);
  for (std::size_t q = 0; q < lay.pairs.size(); ++q) {
    const std::size_t b = lay.pairs[q].first * p.shape.P + lay.pairs[q].second;
    const Index nl = cl[b].size();
    v.segment(lay.offset[q], nl) = Eigen::Map<const VectorXd>(cl[b].data(), nl);
    v.segment(lay.offset[q] + nl, ck[b].size()) = Eigen::Map<const VectorXd>(ck[b].data(), ck[b].size());
  }
  return v;
}

void unpack(const BlockLayout& lay, const VectorXd& v, ModelParams& p) {
  for (std::size_t q = 0; q < lay.pairs.size(); ++q) {
    auto& cl = p.CL(lay.pairs[q].first, lay.pairs[q].second);
    auto& ck = p.CK(lay.pairs[q].first, lay.pairs[q].second);
    Eigen::Map<VectorXd>(cl.data(), cl.size()) = v.segment(lay.offset[q], cl.size());
    Eigen::Map<VectorXd>(ck.data(), ck.size()) = v.segment(lay.offset[q] + cl.size(), ck.size());
  }
}

// Block-diagonal curvature of G used to scale the descent direction. With
// the other factor fixed, the Hessian of G in CL(i, j) is 2 (I kron A) with
// A(p, p') = tr(CK^T S_ii[p, p'] CK), and in CK(i, j) it is 2 (I kron B) with
// B = sum_{p, p'} (CL CL^T)(p, p') S_ii[p, p'], where S_ii[p, p'] is the
// K_i x K_i block of S for functions p and p' of node i.
struct Preconditioner {
  std::vector<Eigen::LLT<MatrixXd>> cl_fac;
  std::vector<Eigen::LLT<MatrixXd>> ck_fac;
};

Preconditioner make_preconditioner(const BlockLayout& lay, const ModelParams& p, const MatrixXd& S) {
  Preconditioner pc;
  const auto& s = p.shape;
  const double floor = 1e-12 * std::max(S.trace() / static_cast<double>(std::max<Index>(S.rows(), 1)), 1e-300);
  for (const auto& [i, j] : lay.pairs) {
    const auto& cl = p.CL(i, j);
    const auto& ck = p.CK(i, j);
    const Index li = cl.rows(), ki = ck.rows();
    const Index ro = idx(s.latent_offset(i));
    // A factor near zero would leave the other factor with almost no
    // curvature, so each factor is treated as having at least norm 0.1.
    MatrixXd outer = cl * cl.transpose();
    outer.diagonal().array() += kFactorFloor / static_cast<double>(li);
    MatrixXd ck_outer = ck * ck.transpose();
    ck_outer.diagonal().array() += kFactorFloor / static_cast<double>(ki);
    MatrixXd A(li, li), B = MatrixXd::Zero(ki, ki);
    for (Index a = 0; a < li; ++a) {
      for (Index c = 0; c < li; ++c) {
        const auto block = S.block(ro + a * ki, ro + c * ki, ki, ki);
        A(a, c) = block.cwiseProduct(ck_outer).sum();
        B += outer(a, c) * block;
      }
    }
    A = 0.5 * (A + A.transpose());
    B = 0.5 * (B + B.transpose());
    A.diagonal().array() += 1e-8 * A.trace() / static_cast<double>(li) + floor;
    B.diagonal().array() += 1e-8 * B.trace() / static_cast<double>(ki) + floor;
    pc.cl_fac.emplace_back(2.0 * A);
    pc.ck_fac.emplace_back(2.0 * B);
  }
  return pc;
}

VectorXd precondition(const Preconditioner& pc, const BlockLayout& lay, const ModelParams& p, const VectorXd& g) {
  VectorXd out(g.size());
  for (std::size_t q = 0; q < lay.pairs.size(); ++q) {
    const auto& cl = p.CL(lay.pairs[q].first, lay.pairs[q].second);
    const auto& ck = p.CK(lay.pairs[q].first, lay.pairs[q].second);
    const Index o = lay.offset[q];
    const Eigen::Map<const MatrixXd> gl(g.data() + o, cl.rows(), cl.cols());
    const Eigen::Map<const MatrixXd> gk(g.data() + o + cl.size(), ck.rows(), ck.cols());
    Eigen::Map<MatrixXd>(out.data() + o, cl.rows(), cl.cols()) = pc.cl_fac[q].solve(MatrixXd(gl));
    Eigen::Map<MatrixXd>(out.data() + o + cl.size(), ck.rows(), ck.cols()) = pc.ck_fac[q].solve(MatrixXd(gk));
  }
  return out;
}

MatrixXd identity_like(Index rows, Index cols) {
  MatrixXd m = MatrixXd::Identity(rows, cols);
  return m / std::sqrt(static_cast<double>(std::min(rows, cols)));
}

}  // namespace

void SolverConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be >= 0");
  if (!(h_tol > 0.0)) throw InputError("h_tol must be > 0");
  if (!(lr > 1.0)) throw InputError("lr must be > 1");
  if (!(a_init > 0.0)) throw InputError("a_init must be > 0");
  if (!std::isfinite(b_init)) throw InputError("b_init must be finite");
  if (inner_max_iter < 1) throw InputError("inner_max_iter must be >= 1");
  if (!(inner_grad_tol > 0.0)) throw InputError("inner_grad_tol must be > 0");
  if (!(inner_rel_tol >= 0.0)) throw InputError("inner_rel_tol must be >= 0");
  if (!(gamma > 0.0)) throw InputError("gamma must be > 0");
  if (!(w_threshold >= 0.0)) throw InputError("w_threshold must be >= 0");
}

MatrixXd polar_factor(const MatrixXd& A) {
  Eigen::JacobiSVD<MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv.size() < A.cols() || (sv.size() > 0 && sv.minCoeff() < 1e-12)) {
    throw NumericalError("degenerate basis update");
  }
  return svd.matrixU() * svd.matrixV().transpose();
}

MatrixXd basis_moment(const FunctionalDataset& data, const PosteriorSummary& post, std::size_t j,
                      const std::vector<double>& weights) {
  const auto& s = data.shape;
  if (!weights.empty() && weights.size() != s.total_functions()) {
    throw ShapeError("basis weights need one entry per function");
  }
  const Index k = idx(s.K[j]);
  MatrixXd A = MatrixXd::Zero(idx(s.T), k);
  for (std::size_t l = 0; l < s.L[j]; ++l) {
    const double w = weights.empty() ? 1.0 : weights[s.function_index(j, l)];
    A.noalias() += w * data.series(j, l).transpose() * post.u_hat.middleCols(idx(s.latent_offset(j, l)), k);
  }
  return A / static_cast<double>(data.values.rows());
}

BasisUpdate update_basis(const FunctionalDataset& data, const PosteriorSummary& post,
                         const std::vector<MatrixXd>& previous, const std::vector<double>& weights) {
  const auto& s = data.shape;
  if (post.u_hat.rows() != data.values.rows() || post.u_hat.cols() != idx(s.latent_dim())) {
    throw ShapeError("posterior does not match the dataset");
  }
  if (previous.size() != s.P) throw ShapeError("expected one previous basis per node");
  BasisUpdate out;
  out.basis.reserve(s.P);
  out.degenerate.assign(s.P, false);
  for (std::size_t j = 0; j < s.P; ++j) {
    try {
      out.basis.push_back(polar_factor(basis_moment(data, post, j, weights)));
    } catch (const NumericalError&) {
      out.basis.push_back(previous[j]);
      out.degenerate[j] = true;
    }
  }
  return out;
}

std::vector<double> update_r(const FunctionalDataset& data, const PosteriorSummary& post,
                             const std::vector<MatrixXd>& basis) {
  const auto& s = data.shape;
  if (basis.size() != s.P) throw ShapeError("expected one basis per node");
  const double scale = 1.0 / (static_cast<double>(data.values.rows()) * static_cast<double>(s.T));
  std::vector<double> r2(s.total_functions());
  for (std::size_t j = 0; j < s.P; ++j) {
    for (std::size_t l = 0; l < s.L[j]; ++l) {
      r2[s.function_index(j, l)] = std::max(0.0, scale * expected_residual_energy(data, basis[j], post, j, l));
    }
  }
  return r2;
}

double update_omega(const PosteriorSummary& post, const MatrixXd& C) {
  const double n = static_cast<double>(post.u_hat.rows());
  const double m = static_cast<double>(C.rows());
  return expected_transition_energy(post, C) / (n * m);
}

MatrixXd matrix_exp(const MatrixXd& A) {
  if (A.rows() != A.cols()) throw ShapeError("matrix_exp needs a square matrix");
  const Index n = A.rows();
  if (n == 0) return A;
  if (!A.allFinite()) throw NumericalError("matrix_exp of a non-finite matrix");
  const double norm = A.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const MatrixXd scaled = A / std::ldexp(1.0, squarings);

  MatrixXd sum = MatrixXd::Identity(n, n);
  MatrixXd term = MatrixXd::Identity(n, n);
  for (int k = 1; k < 64; ++k) {
    term = term * scaled / static_cast<double>(k);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-16 * sum.cwiseAbs().maxCoeff()) break;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

AcyclicityValue notears_h(const MatrixXd& W) {
  if (W.rows() != W.cols()) throw ShapeError("W must be square");
  const MatrixXd E = matrix_exp(W.cwiseProduct(W));
  AcyclicityValue out;
  out.value = std::max(0.0, E.trace() - static_cast<double>(W.rows()));
  out.grad = E.transpose().cwiseProduct(2.0 * W);
  return out;
}

void prox_group_lasso(std::vector<MatrixXd>& cl, const std::vector<MatrixXd>& ck, double threshold) {
  if (cl.size() != ck.size()) throw ShapeError("CL and CK block counts differ");
  if (!(threshold >= 0.0)) throw InputError("prox threshold must be >= 0");
  if (threshold == 0.0) return;
  for (std::size_t b = 0; b < cl.size(); ++b) {
    const double norm = std::sqrt(frob2(cl[b]) * frob2(ck[b]));
    if (norm > threshold) {
      cl[b] -= threshold * cl[b] / norm;
    } else {
      cl[b].setZero();
    }
  }
}

std::pair<MatrixXd, MatrixXd> nearest_kronecker(const MatrixXd& block, Index m, Index n, Index p, Index q) {
  if (block.rows() != m * p || block.cols() != n * q) throw ShapeError("nearest_kronecker: block size");
  // Rearrange so that A kron B becomes vec(A) vec(B)^T, then take the top
  // singular pair.
  MatrixXd R(m * n, p * q);
  for (Index b = 0; b < n; ++b) {
    for (Index a = 0; a < m; ++a) {
      const MatrixXd sub = block.block(a * p, b * q, p, q);
      R.row(b * m + a) = Eigen::Map<const Eigen::RowVectorXd>(sub.data(), p * q);
    }
  }
  Eigen::JacobiSVD<MatrixXd> svd(R, Eigen::ComputeThinU | Eigen::ComputeThinV);
  MatrixXd A = MatrixXd::Zero(m, n);
  MatrixXd B = MatrixXd::Zero(p, q);
  if (svd.singularValues().size() > 0 && svd.singularValues()(0) > 0.0) {
    const Eigen::VectorXd u = svd.matrixU().col(0) * svd.singularValues()(0);
    const Eigen::VectorXd v = svd.matrixV().col(0);
    A = Eigen::Map<const MatrixXd>(u.data(), m, n);
    B = Eigen::Map<const MatrixXd>(v.data(), p, q);
  }
  return {A, B};
}

MatrixXd second_moment(const PosteriorSummary& post) {
  const double n = static_cast<double>(post.u_hat.rows());
  if (post.sigma_hat.rows() != post.u_hat.cols()) throw ShapeError("posterior sizes differ");
  MatrixXd S = post.sigma_hat;
  S.noalias() += post.u_hat.transpose() * post.u_hat / n;
  return 0.5 * (S + S.transpose());
}

double objective_G(const MatrixXd& C, const MatrixXd& S) {
  if (C.rows() != S.rows() || C.cols() != S.cols() || C.rows() != C.cols()) {
    throw ShapeError("C and S must be the same square size");
  }
  const MatrixXd A = MatrixXd::Identity(C.rows(), C.cols()) - C;
  return (A.transpose() * S * A).trace();
}

double objective_G(const MatrixXd& C, const PosteriorSummary& post) {
  return objective_G(C, second_moment(post));
}

MatrixXd gradient_G(const MatrixXd& C, const MatrixXd& S) {
  if (C.rows() != S.rows() || C.cols() != S.cols()) throw ShapeError("C and S sizes differ");
  return -2.0 * S * (MatrixXd::Identity(C.rows(), C.cols()) - C);
}

AugmentedValue augmented_objective(const ModelParams& params, const MatrixXd& S, double a, double b) {
  const auto& s = params.shape;
  const std::size_t P = s.P;
  const MatrixXd C = assemble_C(params);
  if (S.rows() != C.rows() || S.cols() != C.cols()) throw ShapeError("S does not match the latent size");

  AugmentedValue out;
  const MatrixXd A = MatrixXd::Identity(C.rows(), C.cols()) - C;
  const MatrixXd SA = S * A;
  out.G = A.cwiseProduct(SA).sum();
  const MatrixXd gamma = -2.0 * SA;

  // V = W o W = ||CL||^2 ||CK||^2 is smooth in the factors.
  MatrixXd V = MatrixXd::Zero(idx(P), idx(P));
  std::vector<double> nl(P * P, 0.0), nk(P * P, 0.0);
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) {
      if (i == j || !params.mask.allowed(i, j)) continue;
      nl[i * P + j] = frob2(params.CL(i, j));
      nk[i * P + j] = frob2(params.CK(i, j));
      V(idx(i), idx(j)) = nl[i * P + j] * nk[i * P + j];
    }
  }
  const MatrixXd E = matrix_exp(V);
  out.h = std::max(0.0, E.trace() - static_cast<double>(P));
  out.value = out.G + b * out.h + 0.5 * a * out.h * out.h;
  const double dF_dh = b + a * out.h;

  out.dcl.resize(P * P);
  out.dck.resize(P * P);
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) {
      const auto& cl = params.CL(i, j);
      const auto& ck = params.CK(i, j);
      MatrixXd& gl = out.dcl[i * P + j];
      MatrixXd& gk = out.dck[i * P + j];
      gl = MatrixXd::Zero(cl.rows(), cl.cols());
      gk = MatrixXd::Zero(ck.rows(), ck.cols());
      if (i == j || !params.mask.allowed(i, j)) continue;
      const Index ki = ck.rows(), kj = ck.cols();
      const Index ro = idx(s.latent_offset(i)), co = idx(s.latent_offset(j));
      for (Index p = 0; p < cl.rows(); ++p) {
        for (Index q = 0; q < cl.cols(); ++q) {
          const auto g = gamma.block(ro + p * ki, co + q * kj, ki, kj);
          gl(p, q) = g.cwiseProduct(ck).sum();
          gk.noalias() += cl(p, q) * g;
        }
      }
      const double dV = dF_dh * E(idx(j), idx(i));
      if (dV != 0.0) {
        gl += (2.0 * dV * nk[i * P + j]) * cl;
        gk += (2.0 * dV * nl[i * P + j]) * ck;
      }
    }
  }
  return out;
}

SolveResult solve_C(const PosteriorSummary& post, const ModelParams& init, const SolverConfig& cfg) {
  return solve_C(second_moment(post), init, cfg);
}

SolveResult solve_C(const MatrixXd& S, const ModelParams& init, const SolverConfig& cfg) {
  cfg.validate();
  init.check_consistent();
  const std::size_t P = init.shape.P;
  ModelParams cur = init;
  std::vector<bool> restart(P * P, false);
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) {
      auto& cl = cur.CL(i, j);
      auto& ck = cur.CK(i, j);
      if (i == j || !cur.mask.allowed(i, j)) {
        cl.setZero();
        ck.setZero();
      } else if (frob2(ck) == 0.0) {
        cl.setZero();
        restart[i * P + j] = true;
      }
    }
  }
  // A zero block is a saddle of the bilinear parametrization, so restarted
  // blocks take CK from the Kronecker factor that best matches the descent
  // direction of G there. Without signal the CK is a scaled identity.
  {
    const MatrixXd descent = -gradient_G(assemble_C(cur), S);
    const auto& s = cur.shape;
    for (std::size_t i = 0; i < P; ++i) {
      for (std::size_t j = 0; j < P; ++j) {
        auto& ck = cur.CK(i, j);
        if (!restart[i * P + j]) continue;
        const Index ki = idx(s.K[i]), kj = idx(s.K[j]);
        const MatrixXd block = descent.block(idx(s.latent_offset(i)), idx(s.latent_offset(j)),
                                             idx(s.L[i]) * ki, idx(s.L[j]) * kj);
        ck = nearest_kronecker(block, idx(s.L[i]), idx(s.L[j]), ki, kj).second;
        if (frob2(ck) == 0.0) ck = identity_like(ki, kj);
      }
    }
  }
  const BlockLayout lay = make_layout(cur);

  SolveResult res;
  double a = cfg.a_init;
  double b = cfg.b_init;

  auto evaluate = [&](const VectorXd& theta, VectorXd* grad) {
    unpack(lay, theta, cur);
    const AugmentedValue av = augmented_objective(cur, S, a, b);
    if (grad != nullptr) *grad = pack(lay, cur, av.dcl, av.dck);
    if (!std::isfinite(av.value) || (grad != nullptr && !grad->allFinite())) {
      throw NumericalError("numerical failure in C solver");
    }
    return av;
  };

  VectorXd theta = pack(lay, cur, cur.cl, cur.ck);
  double h = 0.0;
  for (int round = 0; round < kMaxOuterRounds; ++round) {
    // Inner gradient descent on G + b h + (a/2) h^2, with the direction
    // scaled by the block curvature of G. Trial steps come from the
    // Barzilai-Borwein estimate; Armijo backtracking is measured against the
    // worst of the last few accepted values (nonmonotone acceptance).
    VectorXd grad;
    AugmentedValue av = evaluate(theta, &grad);
    bool converged = lay.size == 0;
    double trial = 1.0;
    std::vector<double> recent{av.value};
    std::vector<double> history{av.value};
    Preconditioner pc;
    for (int it = 0; it < cfg.inner_max_iter && lay.size > 0; ++it) {
      if (grad.lpNorm<Eigen::Infinity>() < cfg.inner_grad_tol) {
        converged = true;
        break;
      }
      if (it % kPreconditionerRefresh == 0 || (it < kPreconditionerRefresh && (it & (it - 1)) == 0)) {
        unpack(lay, theta, cur);
        pc = make_preconditioner(lay, cur, S);
      }
      const VectorXd dir = -precondition(pc, lay, cur, grad);
      const double slope = grad.dot(dir);
      const double ref = *std::max_element(recent.begin(), recent.end());
      double t = trial;
      VectorXd next, next_grad;
      AugmentedValue nv;
      bool accepted = false;
      while (t > 1e-20) {
        next = theta + t * dir;
        bool finite = true;
        try {
          nv = evaluate(next, &next_grad);
        } catch (const NumericalError&) {
          finite = false;  // overshoot into overflow; treat as a failed trial
        }
        if (finite && nv.value <= ref + 1e-4 * t * slope) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      ++res.inner_iterations;
      if (!accepted) {
        converged = true;  // no further decrease representable
        break;
      }
      const VectorXd ds = next - theta;
      const VectorXd dg = next_grad - grad;
      const double sy = ds.dot(dg);
      const double drop = av.value - nv.value;
      theta = std::move(next);
      grad = std::move(next_grad);
      av = nv;
      if (sy > 0.0) {
        const double ypy = dg.dot(precondition(pc, lay, cur, dg));
        trial = ypy > 0.0 ? std::clamp(sy / ypy, 1e-12, 1e6) : 2.0 * t;
      } else {
        trial = 2.0 * t;
      }
      recent.push_back(av.value);
      if (recent.size() > kNonmonotoneMemory) recent.erase(recent.begin());
      history.push_back(av.value);
      if (history.size() > kProgressWindow) {
        const double progress = history[history.size() - 1 - kProgressWindow] - av.value;
        if (progress <= cfg.inner_rel_tol * std::max(1.0, std::abs(av.value))) {
          converged = true;
          break;
        }
      }
      if (std::abs(drop) <= 1e-15 * std::max(1.0, std::abs(av.value)) && ds.lpNorm<Eigen::Infinity>() < 1e-15) {
        converged = true;
        break;
      }
    }
    if (!converged) res.inner_converged = false;
    unpack(lay, theta, cur);
    h = av.h;
    res.trace.push_back(av.value);
    res.outer_rounds = round + 1;
    if (h < cfg.h_tol || a >= kMaxPenaltyCoef) break;
    b += a * h;
    a = std::min(a * cfg.lr, kMaxPenaltyCoef);
  }

  res.a_final = a;
  res.b_final = b;
  normalize_ck(cur);
  res.smooth_cl = cur.cl;
  res.smooth_ck = cur.ck;
  prox_group_lasso(cur.cl, cur.ck, cfg.gamma * cfg.lambda);
  normalize_ck(cur);

  const BlockAdjacency adj = compute_W(cur);
  res.W = adj.W;
  res.h = notears_h(adj.W).value;
  res.objective = objective_G(assemble_C(cur), S) + cfg.lambda * adj.W.sum();
  res.cl = std::move(cur.cl);
  res.ck = std::move(cur.ck);
  return res;
}

}  // namespace mfdag
