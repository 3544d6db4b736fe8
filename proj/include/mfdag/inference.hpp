#pragma once

#include <span>

#include <Eigen/Dense>

#include "mfdag/dataset.hpp"
#include "mfdag/params.hpp"

namespace mfdag {

/// Variance floors applied before any inversion.
inline constexpr double kR2Floor = 1e-8;
inline constexpr double kOmega2Floor = 1e-10;

/// Prior covariance of the latent vector, (I - C)^-T * omega2 * (I - C)^-1.
/// Throws NumericalError if I - C is singular.
Eigen::MatrixXd prior_covariance(const Eigen::MatrixXd& C, double omega2);

/// Exact posterior by joint-Gaussian conditioning on the precision form
/// (I - C)(I - C)^T / omega2 + H^T R^-1 H.
PosteriorSummary posterior_direct(const FunctionalDataset& data, const ModelParams& params);
/// Same, with an explicitly supplied transition matrix.
PosteriorSummary posterior_direct(const FunctionalDataset& data, const ModelParams& params,
                                  const Eigen::MatrixXd& C);

/// Posterior by forward filtering and backward smoothing over the DAG.
///
/// Every latent block is tracked as mean + G * xi + H * eps, where xi and
/// eps are the latent and observation noise. The forward sweep visits nodes
/// in `order`, builds each node's prediction from its parents and conditions
/// all visited nodes on the new observations. The backward sweep smooths
/// each node against the joint prediction of every node after it in the order.
/// Requires `order` to be consistent with the nonzero blocks.
PosteriorSummary ffbs_posterior(const FunctionalDataset& data, const ModelParams& params,
                                std::span<const std::size_t> order);

/// sum_n E||Y_jl - B_j x_jl||^2 under the posterior.
double expected_residual_energy(const FunctionalDataset& data, const Eigen::MatrixXd& basis,
                                const PosteriorSummary& post, std::size_t j, std::size_t l);

/// sum_n E||x - x C||^2 under the posterior, i.e. N times the C-objective.
double expected_transition_energy(const PosteriorSummary& post, const Eigen::MatrixXd& C);

/// Expected complete-data log-likelihood of `params` under `post`, without
/// the additive constants.
double expected_complete_loglik(const FunctionalDataset& data, const ModelParams& params,
                                const PosteriorSummary& post);

}  // namespace mfdag
