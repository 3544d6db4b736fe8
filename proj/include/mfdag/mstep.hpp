#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mfdag/dataset.hpp"
#include "mfdag/params.hpp"

namespace mfdag {

/// Controls for the augmented-Lagrangian group-lasso solver.
struct SolverConfig {
  double lambda = 0.0;          ///< group-lasso weight
  double h_tol = 1e-8;          ///< stop once h(W) falls below this
  double lr = 10.0;             ///< growth factor of the quadratic coefficient a
  double a_init = 1.0;
  double b_init = 0.0;
  int inner_max_iter = 2000;
  double inner_grad_tol = 1e-7;  ///< max-abs gradient at which an inner solve stops
  double inner_rel_tol = 1e-6;   ///< relative objective drop over 50 iterations below which it stops
  double gamma = 1.0;            ///< proximal step size
  double w_threshold = 0.3;      ///< edge threshold applied to W when reading off a graph

  /// Throws InputError on out-of-range values.
  void validate() const;
};

inline constexpr double kMaxPenaltyCoef = 1e16;
inline constexpr int kMaxOuterRounds = 100;

// ---- closed-form updates ----------------------------------------------------

/// Semi-orthogonal factor U V^T of the thin SVD of A, the maximizer of
/// tr(B^T A) over B^T B = I. Throws NumericalError("degenerate basis update")
/// when a singular value is below 1e-12.
Eigen::MatrixXd polar_factor(const Eigen::MatrixXd& A);

/// Cross moment A_j = (1/N) sum_n sum_l w_l Y_jl^(n) u_jl^(n)^T for node j.
/// Empty `weights` means w_l = 1.
Eigen::MatrixXd basis_moment(const FunctionalDataset& data, const PosteriorSummary& post,
                             std::size_t j, const std::vector<double>& weights = {});

struct BasisUpdate {
  std::vector<Eigen::MatrixXd> basis;
  std::vector<bool> degenerate;  ///< nodes that kept their previous basis
};

/// Polar-decomposition basis step for every node. `weights`, if given, holds
/// one weight per (j, l) in function_index order (EM passes 1 / r2). Nodes
/// whose moment is rank deficient keep `previous[j]`.
BasisUpdate update_basis(const FunctionalDataset& data, const PosteriorSummary& post,
                         const std::vector<Eigen::MatrixXd>& previous,
                         const std::vector<double>& weights = {});

/// r2_jl = (1/(N T)) sum_n [ ||Y_jl - B_j u_jl||^2 + tr(B_j S_jl B_j^T) ], flat in (j, l) order.
std::vector<double> update_r(const FunctionalDataset& data, const PosteriorSummary& post,
                             const std::vector<Eigen::MatrixXd>& basis);

/// omega2 = (1/(N M)) sum_n [ ||u - u C||^2 + tr((I - C)^T S (I - C)) ].
double update_omega(const PosteriorSummary& post, const Eigen::MatrixXd& C);

// ---- acyclicity -------------------------------------------------------------

/// Matrix exponential by scaling and squaring with a Taylor series summed
/// until the next term is below 1e-16 relative to the partial sum.
Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& A);

struct AcyclicityValue {
  double value = 0.0;
  Eigen::MatrixXd grad;  ///< d h / d W = exp(W o W)^T o 2W
};

/// h(W) = tr(exp(W o W)) - P.
AcyclicityValue notears_h(const Eigen::MatrixXd& W);

// ---- group lasso ------------------------------------------------------------

/// Blockwise soft threshold on CL with threshold gamma * lambda. The block
/// norm is ||CL|| * ||CK||; CK is left untouched.
void prox_group_lasso(std::vector<Eigen::MatrixXd>& cl, const std::vector<Eigen::MatrixXd>& ck,
                      double threshold);

/// Nearest Kronecker product A kron B (A: m x n, B: p x q) to a block in
/// Frobenius norm, normalized so that ||B||_F = 1.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> nearest_kronecker(const Eigen::MatrixXd& block, Eigen::Index m,
                                                              Eigen::Index n, Eigen::Index p, Eigen::Index q);

// ---- C objective ------------------------------------------------------------

/// S = (1/N) U^T U + Sigma.
Eigen::MatrixXd second_moment(const PosteriorSummary& post);

/// G_n(C) = tr((I - C)^T S (I - C)).
double objective_G(const Eigen::MatrixXd& C, const Eigen::MatrixXd& S);
double objective_G(const Eigen::MatrixXd& C, const PosteriorSummary& post);
/// Gradient of G_n with respect to the assembled C: -2 S (I - C).
Eigen::MatrixXd gradient_G(const Eigen::MatrixXd& C, const Eigen::MatrixXd& S);

/// Value and block gradients of G + b h + (a/2) h^2 as a function of the
/// CL and CK blocks of `params` (blocks outside the mask are ignored and get
/// zero gradient).
struct AugmentedValue {
  double value = 0.0;
  double G = 0.0;
  double h = 0.0;
  std::vector<Eigen::MatrixXd> dcl;
  std::vector<Eigen::MatrixXd> dck;
};
AugmentedValue augmented_objective(const ModelParams& params, const Eigen::MatrixXd& S, double a,
                                   double b);

struct SolveResult {
  std::vector<Eigen::MatrixXd> cl;
  std::vector<Eigen::MatrixXd> ck;
  Eigen::MatrixXd W;
  double h = 0.0;
  double objective = 0.0;  ///< G + lambda * group norm at the returned blocks
  int outer_rounds = 0;
  int inner_iterations = 0;
  bool inner_converged = true;  ///< false if some inner solve hit inner_max_iter
  std::vector<double> trace;    ///< augmented objective after each outer round
  std::vector<Eigen::MatrixXd> smooth_cl;  ///< blocks before the proximal step, CK normalized
  std::vector<Eigen::MatrixXd> smooth_ck;
  double a_final = 0.0;         ///< quadratic coefficient a after the last round
  double b_final = 0.0;         ///< dual variable b after the last round
};

/// Minimizes G + lambda ||C||_{1/F} subject to h(W) = 0, starting from the
/// blocks in `init` and honoring init.mask. Allowed blocks whose CK is zero
/// restart with zero CL and CK taken from the nearest Kronecker factor of the
/// descent direction of G. The outer loop ends once h < h_tol or after the
/// first round at the largest quadratic coefficient, so h may stay above
/// h_tol on hard problems.
SolveResult solve_C(const Eigen::MatrixXd& S, const ModelParams& init, const SolverConfig& cfg);
SolveResult solve_C(const PosteriorSummary& post, const ModelParams& init, const SolverConfig& cfg);

}  // namespace mfdag
