#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mfdag/dataset.hpp"
#include "mfdag/errors.hpp"
#include "mfdag/inference.hpp"
#include "test_util.hpp"

using namespace mfdag;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

FunctionalDataset dataset_of(const ProblemShape& shape, const MatrixXd& values) {
  FunctionalDataset d;
  d.shape = shape;
  d.shape.N = static_cast<std::size_t>(values.rows());
  d.values = values;
  d.grid = uniform_grid(shape.T);
  return d;
}

std::vector<std::size_t> order_of(const ModelParams& p) {
  return topological_order(support(compute_W(p).W, 0.0));
}

}  // namespace

TEST_CASE("prior covariance") {
  SUBCASE("empty graph gives omega2 times identity") {
    CHECK(prior_covariance(MatrixXd::Zero(4, 4), 1.0).isApprox(MatrixXd::Identity(4, 4)));
    CHECK(prior_covariance(MatrixXd::Zero(3, 3), 2.5).isApprox(2.5 * MatrixXd::Identity(3, 3)));
  }
  SUBCASE("single edge in row convention") {
    const double c = 0.7, w = 1.3;
    MatrixXd C = MatrixXd::Zero(2, 2);
    C(0, 1) = c;
    const MatrixXd expected{{w, w * c}, {w * c, w * (1.0 + c * c)}};
    CHECK(test::max_abs_diff(prior_covariance(C, w), expected) < 1e-14);
  }
  SUBCASE("positive definite for random acyclic C") {
    std::mt19937_64 rng(4);
    const ProblemShape s = ProblemShape::uniform(4, 2, 2, 5, 1);
    for (int rep = 0; rep < 100; ++rep) {
      const ModelParams p = test::random_dag_params(s, rng, 0.6, 0.2, 2.0);
      const MatrixXd S = prior_covariance(assemble_C(p), p.omega2);
      CHECK(test::max_abs_diff(S, S.transpose()) < 1e-10 * S.cwiseAbs().maxCoeff());
      CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(S).eigenvalues().minCoeff() > 0.0);
    }
  }
  SUBCASE("singular I - C") {
    MatrixXd C = MatrixXd::Zero(2, 2);
    C(0, 1) = 1.0;
    C(1, 0) = 1.0;
    CHECK_THROWS_AS(prior_covariance(C, 1.0), NumericalError);
  }
}

TEST_CASE("direct posterior on scalar cases") {
  SUBCASE("T = 1") {
    const ProblemShape s = ProblemShape::uniform(1, 1, 1, 1, 2);
    ModelParams p = ModelParams::zeros(s);
    p.basis[0] = MatrixXd::Ones(1, 1);
    const auto post = posterior_direct(dataset_of(s, MatrixXd{{3.0}, {-1.0}}), p);
    CHECK(post.u_hat(0, 0) == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(post.u_hat(1, 0) == doctest::Approx(-0.5).epsilon(1e-14));
    CHECK(post.sigma_hat(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("T = 2 with a unit-norm basis") {
    const ProblemShape s = ProblemShape::uniform(1, 1, 1, 2, 1);
    ModelParams p = ModelParams::zeros(s);
    p.basis[0] = MatrixXd::Constant(2, 1, 1.0 / std::sqrt(2.0));
    const auto post = posterior_direct(dataset_of(s, MatrixXd{{1.0, 1.0}}), p);
    CHECK(post.u_hat(0, 0) == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-14));
    CHECK(post.sigma_hat(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("zero observations give zero means") {
    std::mt19937_64 rng(2);
    const ProblemShape s = ProblemShape::uniform(3, 2, 2, 6, 5);
    const ModelParams p = test::random_dag_params(s, rng);
    const auto post = posterior_direct(dataset_of(s, MatrixXd::Zero(5, static_cast<Eigen::Index>(s.obs_dim()))), p);
    CHECK(post.u_hat.isZero(0.0));
  }
}

TEST_CASE("direct posterior is linear in Y and shrinks the prior") {
  std::mt19937_64 rng(9);
  const ProblemShape s = ProblemShape::uniform(3, 2, 2, 7, 6);
  const ModelParams p = test::random_dag_params(s, rng);
  const FunctionalDataset d = test::sample_from(p, rng);
  const auto post = posterior_direct(d, p);
  FunctionalDataset scaled = d;
  scaled.values *= -2.5;
  const auto post2 = posterior_direct(scaled, p);
  CHECK(test::max_abs_diff(post2.u_hat, -2.5 * post.u_hat) < 1e-12);
  CHECK(test::max_abs_diff(post2.sigma_hat, post.sigma_hat) == 0.0);

  const MatrixXd prior = prior_covariance(assemble_C(p), p.omega2);
  const MatrixXd gap = prior - post.sigma_hat;
  CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (gap + gap.transpose())).eigenvalues().minCoeff() > -1e-10);
  CHECK(test::max_abs_diff(post.sigma_hat, post.sigma_hat.transpose()) == 0.0);
}

TEST_CASE("FFBS matches direct conditioning") {
  SUBCASE("isolated node") {
    const ProblemShape s = ProblemShape::uniform(1, 1, 1, 1, 1);
    ModelParams p = ModelParams::zeros(s);
    p.basis[0] = MatrixXd::Ones(1, 1);
    const std::vector<std::size_t> order{0};
    const auto post = ffbs_posterior(dataset_of(s, MatrixXd{{3.0}}), p, order);
    CHECK(post.u_hat(0, 0) == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(post.sigma_hat(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("two-node chain") {
    std::mt19937_64 rng(17);
    const ProblemShape s = ProblemShape::uniform(2, 2, 3, 8, 4);
    ModelParams p = test::random_dag_params(s, rng, 0.0);
    p.CL(1, 0) = test::gaussian(2, 2, rng);
    p.CK(1, 0) = test::gaussian(3, 3, rng);
    const FunctionalDataset d = test::sample_from(p, rng);
    const std::vector<std::size_t> order{1, 0};
    const auto a = ffbs_posterior(d, p, order);
    const auto b = posterior_direct(d, p);
    CHECK(test::max_abs_diff(a.u_hat, b.u_hat) < 1e-8);
    CHECK(test::max_abs_diff(a.sigma_hat, b.sigma_hat) < 1e-8);
  }
  SUBCASE("empty graph factorizes per node") {
    std::mt19937_64 rng(23);
    const ProblemShape s = ProblemShape::uniform(4, 1, 2, 5, 3);
    const ModelParams p = test::random_dag_params(s, rng, 0.0);
    const FunctionalDataset d = test::sample_from(p, rng);
    const std::vector<std::size_t> order{2, 0, 3, 1};
    const auto a = ffbs_posterior(d, p, order);
    const auto b = posterior_direct(d, p);
    CHECK(test::max_abs_diff(a.u_hat, b.u_hat) < 1e-12);
    CHECK(test::max_abs_diff(a.sigma_hat, b.sigma_hat) < 1e-12);
    CHECK(a.sigma_hat.block(0, 2, 2, 6).isZero(1e-14));
  }
  SUBCASE("random DAGs with mixed sizes") {
    std::mt19937_64 rng(29);
    std::uniform_int_distribution<std::size_t> pick_p(2, 5), pick_lk(1, 3), pick_t(4, 12);
    for (int rep = 0; rep < 15; ++rep) {
      ProblemShape s;
      s.P = pick_p(rng);
      s.T = pick_t(rng);
      s.N = 3;
      for (std::size_t j = 0; j < s.P; ++j) {
        s.L.push_back(pick_lk(rng));
        s.K.push_back(std::min(pick_lk(rng), s.T - 1));
      }
      const ModelParams p = test::random_dag_params(s, rng, 0.6);
      const FunctionalDataset d = test::sample_from(p, rng);
      const auto order = order_of(p);
      const auto a = ffbs_posterior(d, p, order);
      const auto b = posterior_direct(d, p);
      CHECK(test::max_abs_diff(a.u_hat, b.u_hat) < 1e-8);
      CHECK(test::max_abs_diff(a.sigma_hat, b.sigma_hat) < 1e-8);
    }
  }
  SUBCASE("order inconsistent with an edge") {
    const ProblemShape s = ProblemShape::uniform(2, 1, 1, 3, 1);
    std::mt19937_64 rng(1);
    ModelParams p = test::random_dag_params(s, rng, 0.0);
    p.CL(0, 1) = MatrixXd::Ones(1, 1);
    p.CK(0, 1) = MatrixXd::Ones(1, 1);
    const std::vector<std::size_t> order{1, 0};
    CHECK_THROWS_WITH_AS(ffbs_posterior(test::sample_from(p, rng), p, order),
                         doctest::Contains("not a valid topological order"), InputError);
  }
}

TEST_CASE("expected complete log-likelihood") {
  std::mt19937_64 rng(31);
  const ProblemShape s = ProblemShape::uniform(2, 1, 2, 5, 3);
  ModelParams p = test::random_dag_params(s, rng, 1.0);
  const FunctionalDataset d = test::sample_from(p, rng);
  const auto post = posterior_direct(d, p);
  const double q = expected_complete_loglik(d, p, post);

  SUBCASE("additive over duplicated samples") {
    FunctionalDataset dd = d;
    dd.values.resize(2 * d.values.rows(), d.values.cols());
    dd.values << d.values, d.values;
    dd.shape.N *= 2;
    ModelParams pp = p;
    pp.shape.N = dd.shape.N;
    const auto post2 = posterior_direct(dd, pp);
    CHECK(expected_complete_loglik(dd, pp, post2) == doctest::Approx(2.0 * q).epsilon(1e-12));
  }

  SUBCASE("Monte-Carlo expectation over posterior draws") {
    const Eigen::Index M = post.sigma_hat.rows();
    const MatrixXd Lc = Eigen::LLT<MatrixXd>(post.sigma_hat).matrixL();
    const MatrixXd C = assemble_C(p);
    const int draws = 100000;
    std::normal_distribution<double> nd;
    double sum = 0.0, sum2 = 0.0;
    for (int t = 0; t < draws; ++t) {
      double val = 0.0;
      for (Eigen::Index n = 0; n < post.u_hat.rows(); ++n) {
        VectorXd z(M);
        for (Eigen::Index k = 0; k < M; ++k) z(k) = nd(rng);
        const Eigen::RowVectorXd x = post.u_hat.row(n) + (Lc * z).transpose();
        for (std::size_t j = 0; j < s.P; ++j) {
          const auto xj = x.segment(static_cast<Eigen::Index>(s.latent_offset(j, 0)), 2);
          const double e = (d.series(j, 0).row(n) - xj * p.basis[j].transpose()).squaredNorm();
          val += e / p.r2_of(j, 0) + static_cast<double>(s.T) * std::log(p.r2_of(j, 0));
        }
        val += (x - x * C).squaredNorm() / p.omega2 + static_cast<double>(M) * std::log(p.omega2);
      }
      val *= -0.5;
      sum += val;
      sum2 += val * val;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sum2 / draws - mean * mean) / draws);
    CHECK(std::abs(mean - q) < 3.0 * se);
  }

  SUBCASE("sign of the r2 derivative under a poor fit") {
    ModelParams bad = p;
    for (auto& b : bad.basis) b = -b;
    for (std::size_t j = 0; j < s.P; ++j) {
      const double energy = expected_residual_energy(d, bad.basis[j], post, j, 0);
      bad.r2[j] = 0.5 * energy / static_cast<double>(s.N * s.T);
    }
    const double q0 = expected_complete_loglik(d, bad, post);
    for (auto& r : bad.r2) r *= 1.0 + 1e-6;
    const double q1 = expected_complete_loglik(d, bad, post);
    CHECK(q1 > q0);
  }
}

TEST_CASE("expected transition energy matches its definition") {
  std::mt19937_64 rng(41);
  const ProblemShape s = ProblemShape::uniform(3, 1, 2, 5, 4);
  const ModelParams p = test::random_dag_params(s, rng);
  const auto post = posterior_direct(test::sample_from(p, rng), p);
  const MatrixXd C = assemble_C(p);
  const MatrixXd IC = MatrixXd::Identity(6, 6) - C;
  const double direct =
      (post.u_hat * IC).squaredNorm() + 4.0 * (IC.transpose() * post.sigma_hat * IC).trace();
  CHECK(expected_transition_energy(post, C) == doctest::Approx(direct).epsilon(1e-12));
}
