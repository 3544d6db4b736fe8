#include "mfdag/params.hpp"

#include <cmath>
#include <span>

#include "mfdag/errors.hpp"
#include "mfdag/kernels.hpp"

namespace mfdag {

namespace {

using Index = Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

double frob2(const Eigen::MatrixXd& m) {
  return kernels::sum_squares(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

double frob2_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("matrix shapes differ");
  return kernels::squared_distance(
      std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
      std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

}  // namespace

EdgeMask::EdgeMask(std::size_t P) : P_(P), bits_(P * P, 1) {
  for (std::size_t i = 0; i < P; ++i) bits_[i * P + i] = 0;
}

EdgeMask EdgeMask::none(std::size_t P) {
  EdgeMask m(P);
  std::fill(m.bits_.begin(), m.bits_.end(), 0);
  return m;
}

void EdgeMask::set(std::size_t i, std::size_t j, bool allowed) {
  if (i == j) return;
  bits_[i * P_ + j] = allowed ? 1 : 0;
}

ModelParams ModelParams::zeros(const ProblemShape& shape) {
  ModelParams p;
  p.shape = shape;
  const std::size_t P = shape.P;
  p.cl.resize(P * P);
  p.ck.resize(P * P);
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) {
      p.CL(i, j) = Eigen::MatrixXd::Zero(idx(shape.L[i]), idx(shape.L[j]));
      p.CK(i, j) = Eigen::MatrixXd::Zero(idx(shape.K[i]), idx(shape.K[j]));
    }
  }
  p.basis.resize(P);
  for (std::size_t j = 0; j < P; ++j) p.basis[j] = Eigen::MatrixXd::Zero(idx(shape.T), idx(shape.K[j]));
  p.r2.assign(shape.total_functions(), 1.0);
  p.omega2 = 1.0;
  p.mask = EdgeMask(P);
  return p;
}

void ModelParams::check_consistent() const {
  const std::size_t P = shape.P;
  if (cl.size() != P * P || ck.size() != P * P) throw ShapeError("expected P*P transition blocks");
  if (basis.size() != P) throw ShapeError("expected one basis per node");
  if (r2.size() != shape.total_functions()) throw ShapeError("r2 must have sum(L) entries");
  if (mask.size() != P) throw ShapeError("mask size differs from P");
  for (std::size_t i = 0; i < P; ++i) {
    if (basis[i].rows() != idx(shape.T) || basis[i].cols() != idx(shape.K[i])) {
      throw ShapeError("basis " + std::to_string(i) + " must be T x K");
    }
    for (std::size_t j = 0; j < P; ++j) {
      if (CL(i, j).rows() != idx(shape.L[i]) || CL(i, j).cols() != idx(shape.L[j])) {
        throw ShapeError("CL block (" + std::to_string(i) + "," + std::to_string(j) +
                         ") has the wrong shape");
      }
      if (CK(i, j).rows() != idx(shape.K[i]) || CK(i, j).cols() != idx(shape.K[j])) {
        throw ShapeError("CK block (" + std::to_string(i) + "," + std::to_string(j) +
                         ") has the wrong shape");
      }
    }
  }
}

Eigen::MatrixXd assemble_C(const ModelParams& params, const EdgeMask& mask) {
  params.check_consistent();
  const auto& s = params.shape;
  if (mask.size() != s.P) throw ShapeError("mask size differs from P");
  const Index M = idx(s.latent_dim());
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(M, M);
  for (std::size_t i = 0; i < s.P; ++i) {
    const Index ro = idx(s.latent_offset(i));
    for (std::size_t j = 0; j < s.P; ++j) {
      if (i == j || !mask.allowed(i, j)) continue;
      const Index co = idx(s.latent_offset(j));
      const auto& cl = params.CL(i, j);
      const auto& ck = params.CK(i, j);
      const Index ki = ck.rows(), kj = ck.cols();
      for (Index a = 0; a < cl.rows(); ++a) {
        for (Index b = 0; b < cl.cols(); ++b) {
          C.block(ro + a * ki, co + b * kj, ki, kj) = cl(a, b) * ck;
        }
      }
    }
  }
  return C;
}

BlockAdjacency compute_W(const ModelParams& params) {
  params.check_consistent();
  const std::size_t P = params.shape.P;
  BlockAdjacency adj{Eigen::MatrixXd::Zero(idx(P), idx(P)), params.mask};
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) {
      if (i == j || !params.mask.allowed(i, j)) continue;
      adj.W(idx(i), idx(j)) = std::sqrt(frob2(params.CL(i, j)) * frob2(params.CK(i, j)));
    }
  }
  return adj;
}

double param_distance(const ModelParams& a, const ModelParams& b) {
  if (!(a.shape == b.shape)) throw ShapeError("param_distance: shapes differ");
  double d2 = frob2_diff(assemble_C(a), assemble_C(b));
  for (std::size_t j = 0; j < a.shape.P; ++j) d2 += frob2_diff(a.basis[j], b.basis[j]);
  d2 += kernels::squared_distance(a.r2, b.r2);
  const double dw = a.omega2 - b.omega2;
  d2 += dw * dw;
  return std::sqrt(d2);
}

void normalize_ck(ModelParams& params) {
  const std::size_t P = params.shape.P;
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < P; ++j) {
      auto& ck = params.CK(i, j);
      auto& cl = params.CL(i, j);
      const double n = ck.norm();
      if (n > 0.0) {
        ck /= n;
        cl *= n;
      } else {
        cl.setZero();
      }
    }
  }
}

double group_norm(const ModelParams& params) {
  const auto adj = compute_W(params);
  return adj.W.sum();
}

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support(const Eigen::MatrixXd& W,
                                                             double threshold) {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> s(W.rows(), W.cols());
  for (Index i = 0; i < W.rows(); ++i) {
    for (Index j = 0; j < W.cols(); ++j) s(i, j) = i != j && std::abs(W(i, j)) > threshold;
  }
  return s;
}

bool is_acyclic(const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adj) {
  const Index P = adj.rows();
  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<int> state(static_cast<std::size_t>(P), 0);
  std::vector<std::pair<Index, Index>> stack;
  for (Index root = 0; root < P; ++root) {
    if (state[static_cast<std::size_t>(root)] != 0) continue;
    stack.emplace_back(root, 0);
    state[static_cast<std::size_t>(root)] = 1;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next == P) {
        state[static_cast<std::size_t>(node)] = 2;
        stack.pop_back();
        continue;
      }
      const Index child = next++;
      if (!adj(node, child)) continue;
      const int st = state[static_cast<std::size_t>(child)];
      if (st == 1) return false;
      if (st == 0) {
        state[static_cast<std::size_t>(child)] = 1;
        stack.emplace_back(child, 0);
      }
    }
  }
  return true;
}

std::vector<std::size_t> topological_order(
    const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& adj) {
  const Index P = adj.rows();
  std::vector<int> indegree(static_cast<std::size_t>(P), 0);
  for (Index i = 0; i < P; ++i) {
    for (Index j = 0; j < P; ++j) {
      if (i != j && adj(i, j)) ++indegree[static_cast<std::size_t>(j)];
    }
  }
  // Kahn's algorithm, smallest ready index first so the order is deterministic.
  std::vector<std::size_t> order;
  std::vector<bool> done(static_cast<std::size_t>(P), false);
  for (Index step = 0; step < P; ++step) {
    Index pick = -1;
    for (Index i = 0; i < P; ++i) {
      if (!done[static_cast<std::size_t>(i)] && indegree[static_cast<std::size_t>(i)] == 0) {
        pick = i;
        break;
      }
    }
    if (pick < 0) return {};
    done[static_cast<std::size_t>(pick)] = true;
    order.push_back(static_cast<std::size_t>(pick));
    for (Index j = 0; j < P; ++j) {
      if (j != pick && adj(pick, j)) --indegree[static_cast<std::size_t>(j)];
    }
  }
  return order;
}

}  // namespace mfdag
