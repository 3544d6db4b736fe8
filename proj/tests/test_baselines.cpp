#include <Eigen/Dense>
#include <random>
#include <unsupported/Eigen/KroneckerProduct>

#include "doctest.h"
#include "mfdag/baselines.hpp"
#include "mfdag/errors.hpp"
#include "mfdag/synth.hpp"
#include "test_util.hpp"

using namespace mfdag;
using Eigen::MatrixXd;

namespace {

std::pair<FunctionalDataset, GroundTruth> problem(std::size_t P, std::size_t L, std::size_t K, std::size_t N,
                                                  double r2, std::uint64_t seed, double edge_prob = 0.5) {
  SynthConfig cfg;
  cfg.shape = ProblemShape::uniform(P, L, K, 16, N);
  cfg.r2_true = r2;
  cfg.edge_prob = edge_prob;
  cfg.seed = seed;
  return generate_dataset(cfg);
}

}  // namespace

TEST_CASE("FPCA scores") {
  SUBCASE("exact rank reconstructs the data") {
    auto [data, truth] = problem(3, 2, 3, 40, 0.0, 1);
    const FpcaResult f = fpca_scores(data, {3, 3, 3}, FpcaMode::kPerNode, 0);
    CHECK_FALSE(f.padded);
    for (double r : f.r2) CHECK(r < 1e-20);
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t l = 0; l < 2; ++l) {
        const MatrixXd rec = f.scores.middleCols(static_cast<Eigen::Index>(f.shape.latent_offset(j, l)), 3) *
                             f.basis[j].transpose();
        CHECK(test::max_abs_diff(rec, data.series(j, l)) < 1e-10);
      }
  }
  SUBCASE("score second moments are ordered within each node") {
    auto [data, truth] = problem(3, 1, 4, 200, 0.01, 2);
    const FpcaResult f = fpca_scores(data, {4, 4, 4}, FpcaMode::kPerNode, 0);
    for (std::size_t j = 0; j < 3; ++j) {
      const auto block = f.scores.middleCols(static_cast<Eigen::Index>(f.shape.latent_offset(j)), 4);
      for (Eigen::Index c = 1; c < 4; ++c) CHECK(block.col(c).squaredNorm() <= block.col(c - 1).squaredNorm() + 1e-9);
    }
  }
  SUBCASE("agrees with the SVD of the stacked series") {
    auto [data, truth] = problem(2, 2, 3, 60, 0.05, 3);
    const FpcaResult f = fpca_scores(data, {3, 3}, FpcaMode::kPerNode, 0);
    for (std::size_t j = 0; j < 2; ++j) {
      MatrixXd stacked(120, 16);
      stacked << data.series(j, 0), data.series(j, 1);
      Eigen::JacobiSVD<MatrixXd> svd(stacked, Eigen::ComputeThinV);
      for (Eigen::Index c = 0; c < 3; ++c) {
        const Eigen::VectorXd oracle = stacked * svd.matrixV().col(c);
        const Eigen::VectorXd mine = stacked * f.basis[j].col(c);
        CHECK(std::min((oracle - mine).cwiseAbs().maxCoeff(), (oracle + mine).cwiseAbs().maxCoeff()) < 1e-8);
      }
    }
  }
  SUBCASE("shared mode uses one basis") {
    auto [data, truth] = problem(3, 1, 2, 50, 0.01, 4);
    const FpcaResult f = fpca_scores(data, {2, 2, 2}, FpcaMode::kShared, 0);
    CHECK(f.basis[0] == f.basis[1]);
    CHECK(f.basis[0] == f.basis[2]);
    CHECK_THROWS_AS(fpca_scores(data, {2, 3, 2}, FpcaMode::kShared, 0), InputError);
  }
}

TEST_CASE("nearest Kronecker product") {
  std::mt19937_64 rng(5);
  const MatrixXd A = test::gaussian(2, 3, rng), B = test::gaussian(3, 2, rng);
  const MatrixXd K = Eigen::kroneckerProduct(A, B);
  auto [a, b] = nearest_kronecker(K, 2, 3, 3, 2);
  CHECK(b.norm() == doctest::Approx(1.0));
  CHECK(test::max_abs_diff(Eigen::kroneckerProduct(a, b), K) < 1e-12);
  CHECK_THROWS_AS(nearest_kronecker(K, 2, 2, 3, 2), ShapeError);
  auto [z1, z2] = nearest_kronecker(MatrixXd::Zero(6, 6), 2, 3, 3, 2);
  CHECK(z1.isZero(0.0));
  CHECK(z2.isZero(0.0));
}

TEST_CASE("MFGM baseline") {
  SUBCASE("single shot") {
    auto [data, truth] = problem(3, 1, 2, 80, 0.01, 6);
    FitConfig cfg;
    cfg.solver.lambda = 0.05;
    const FitReport r = fit_mfgm(data, cfg);
    CHECK(r.iterations == 1);
    CHECK(r.d_history.size() == 1);
    CHECK(r.h_final < cfg.solver.h_tol);
  }
  SUBCASE("huge penalty gives an empty graph") {
    auto [data, truth] = problem(3, 1, 2, 80, 0.01, 7);
    FitConfig cfg;
    cfg.solver.lambda = 1e6;
    CHECK(fit_mfgm(data, cfg).W.W.isZero(0.0));
  }
  SUBCASE("masked-empty objective is the score energy") {
    auto [data, truth] = problem(3, 1, 2, 80, 0.01, 8);
    const FpcaResult f = fpca_scores(data, {2, 2, 2}, FpcaMode::kPerNode, 0);
    ModelParams start = ModelParams::zeros(f.shape);
    start.mask = EdgeMask::none(3);
    const PosteriorSummary post{f.scores, MatrixXd::Zero(6, 6)};
    const SolveResult sol = solve_C(post, start, SolverConfig{});
    CHECK(sol.W.isZero(0.0));
    CHECK(sol.objective == doctest::Approx(f.scores.squaredNorm() / 80.0).epsilon(1e-12));

    FitConfig cfg;
    cfg.mask = EdgeMask::none(3);
    CHECK(fit_mfgm(data, cfg).W.W.isZero(0.0));
  }
  SUBCASE("noise-free two-node support matches exhaustive search") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      CAPTURE(seed);
      auto [data, truth] = problem(2, 1, 2, 500, 0.0, seed, 1.0);
      FitConfig cfg;
      cfg.solver.lambda = 0.05;
      const FpcaResult f = fpca_scores(data, {2, 2}, FpcaMode::kPerNode, cfg.seed);
      const MatrixXd S = f.scores.transpose() * f.scores / 500.0;
      const FitReport r = fit_mfgm(data, cfg);
      CHECK(support(r.W.W, cfg.solver.w_threshold) == test::two_node_oracle(S, 2, cfg.solver.lambda));
      CHECK(support(r.W.W, cfg.solver.w_threshold) == truth.adjacency);
    }
  }
}

TEST_CASE("scalar NOTEARS baseline") {
  SUBCASE("one score per node reproduces MFGM") {
    // K = 1 with the constant Fourier function: both FPCA modes find the
    // same direction, so the two baselines solve the same problem.
    auto [data, truth] = problem(4, 1, 1, 300, 0.0, 9, 0.6);
    FitConfig cfg;
    cfg.solver.lambda = 0.02;
    const FitReport a = fit_scalar_notears(data, cfg);
    const FitReport b = fit_mfgm(data, cfg);
    CHECK(support(a.W.W, cfg.solver.w_threshold) == support(b.W.W, cfg.solver.w_threshold));
  }
  SUBCASE("merged W is zero exactly when the score block is zero") {
    auto [data, truth] = problem(3, 2, 2, 120, 0.01, 10, 0.7);
    FitConfig cfg;
    cfg.solver.lambda = 0.05;
    const FitReport r = fit_scalar_notears(data, cfg);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        if (i == j) continue;
        const double block = Eigen::MatrixXd(Eigen::kroneckerProduct(r.params.CL(i, j), r.params.CK(i, j))).norm();
        CHECK((r.W.W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) == 0.0) == (block == 0.0));
      }
    CHECK(r.iterations == 1);
  }
}
