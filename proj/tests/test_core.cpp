#include <Eigen/Dense>
#include <random>
#include <unsupported/Eigen/KroneckerProduct>

#include "doctest.h"
#include "mfdag/errors.hpp"
#include "mfdag/model_io.hpp"
#include "mfdag/params.hpp"
#include "test_util.hpp"

using namespace mfdag;
using Eigen::MatrixXd;

namespace {

ProblemShape mixed_shape() {
  ProblemShape s;
  s.P = 3;
  s.L = {1, 2, 2};
  s.K = {2, 1, 3};
  s.T = 6;
  s.N = 4;
  return s;
}

}  // namespace

TEST_CASE("latent layout is node, function, coefficient") {
  const ProblemShape s = mixed_shape();
  CHECK(s.latent_dim() == 1 * 2 + 2 * 1 + 2 * 3);
  CHECK(s.obs_dim() == 5 * 6);
  CHECK(s.latent_offset(0) == 0);
  CHECK(s.latent_offset(1) == 2);
  CHECK(s.latent_offset(2, 1) == 4 + 3);
  CHECK(s.obs_offset(2, 1) == 3 * 6 + 6);
  CHECK(s.function_index(2, 1) == 4);
  CHECK_NOTHROW(s.validate_strict());

  ProblemShape bad = s;
  bad.K[2] = 6;
  CHECK_NOTHROW(bad.validate());
  CHECK_THROWS_AS(bad.validate_strict(), InputError);
  bad.L.pop_back();
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("assemble_C places Kronecker blocks") {
  SUBCASE("all zero blocks") {
    const ModelParams p = ModelParams::zeros(mixed_shape());
    CHECK(assemble_C(p).isZero(0.0));
  }
  SUBCASE("hand expanded block") {
    ProblemShape s;
    s.P = 2;
    s.L = {1, 2};
    s.K = {1, 1};
    s.T = 3;
    s.N = 1;
    ModelParams p = ModelParams::zeros(s);
    p.CL(0, 1) = MatrixXd{{1.0, 2.0}};
    p.CK(0, 1) = MatrixXd{{3.0}};
    const MatrixXd C = assemble_C(p);
    CHECK(C.rows() == 3);
    CHECK(C(0, 1) == 3.0);
    CHECK(C(0, 2) == 6.0);
    CHECK(C.col(0).isZero(0.0));
    CHECK(C.bottomRows(2).isZero(0.0));
  }
  SUBCASE("mask zeroes a block regardless of its values") {
    std::mt19937_64 rng(3);
    ModelParams p = ModelParams::zeros(mixed_shape());
    p.CL(0, 1) = test::gaussian(1, 2, rng);
    p.CK(0, 1) = test::gaussian(2, 1, rng);
    p.CL(1, 2) = test::gaussian(2, 2, rng);
    p.CK(1, 2) = test::gaussian(1, 3, rng);
    EdgeMask mask(3);
    mask.set(0, 1, false);
    const MatrixXd C = assemble_C(p, mask);
    CHECK(C.block(0, 2, 2, 2).isZero(0.0));
    CHECK_FALSE(C.block(2, 4, 2, 6).isZero(0.0));
  }
}

TEST_CASE("compute_W is the product of factor norms") {
  ProblemShape s = ProblemShape::uniform(2, 1, 2, 5, 1);
  ModelParams p = ModelParams::zeros(s);
  p.CL(0, 1) = MatrixXd{{2.0}};
  p.CK(0, 1) = MatrixXd::Identity(2, 2);
  const BlockAdjacency w = compute_W(p);
  CHECK(w.W(0, 1) == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-15));
  CHECK(w.W(1, 0) == 0.0);
  CHECK(w.W.diagonal().isZero(0.0));
  CHECK(compute_W(ModelParams::zeros(s)).W.isZero(0.0));
}

TEST_CASE("W matches the Frobenius norm of the materialized blocks") {
  std::mt19937_64 rng(11);
  const ProblemShape s = ProblemShape::uniform(3, 2, 2, 5, 1);
  for (int rep = 0; rep < 20; ++rep) {
    ModelParams p = ModelParams::zeros(s);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        if (i == j) continue;
        p.CL(i, j) = test::gaussian(2, 2, rng);
        p.CK(i, j) = test::gaussian(2, 2, rng);
      }
    const MatrixXd C = assemble_C(p);
    const MatrixXd W = compute_W(p).W;
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        if (i == j) continue;
        const MatrixXd kron = Eigen::kroneckerProduct(p.CL(i, j), p.CK(i, j));
        CHECK(std::abs(W(i, j) - kron.norm()) < 1e-12);
        CHECK(test::max_abs_diff(C.block(4 * i, 4 * j, 4, 4), kron) < 1e-15);
        total += W(i, j) * W(i, j);
      }
    CHECK(std::abs(C.squaredNorm() - total) < 1e-10);
  }
}

TEST_CASE("param_distance") {
  std::mt19937_64 rng(5);
  const ProblemShape s = ProblemShape::uniform(3, 2, 2, 6, 1);
  const ModelParams a = test::random_dag_params(s, rng);
  const ModelParams b = test::random_dag_params(s, rng);
  CHECK(param_distance(a, a) == 0.0);
  CHECK(param_distance(a, b) == param_distance(b, a));
  CHECK(param_distance(a, b) > 0.0);

  ModelParams c = a;
  c.omega2 = a.omega2 + 1.0;
  CHECK(param_distance(a, c) == doctest::Approx(1.0).epsilon(1e-14));

  // Equal assembled C with different factorizations is distance zero.
  ModelParams d = a;
  for (auto& m : d.cl) m *= 2.0;
  for (auto& m : d.ck) m *= 0.5;
  CHECK(param_distance(a, d) < 1e-12);

  ModelParams e = ModelParams::zeros(ProblemShape::uniform(2, 2, 2, 6, 1));
  CHECK_THROWS_AS(param_distance(a, e), ShapeError);
}

TEST_CASE("normalize_ck keeps C and gives unit CK") {
  std::mt19937_64 rng(8);
  const ProblemShape s = mixed_shape();
  ModelParams p = test::random_dag_params(s, rng, 1.0);
  for (auto& m : p.ck) m *= 3.7;
  const MatrixXd before = assemble_C(p);
  normalize_ck(p);
  CHECK(test::max_abs_diff(before, assemble_C(p)) < 1e-12);
  for (std::size_t k = 0; k < p.ck.size(); ++k) {
    const double n = p.ck[k].norm();
    CHECK((n == 0.0 || std::abs(n - 1.0) < 1e-12));
    if (n == 0.0) CHECK(p.cl[k].isZero(0.0));
  }
  CHECK(group_norm(p) == doctest::Approx(compute_W(p).W.sum()).epsilon(1e-12));
}

TEST_CASE("graph helpers") {
  BoolMatrix chain = BoolMatrix::Constant(3, 3, false);
  chain(0, 1) = chain(1, 2) = true;
  CHECK(is_acyclic(chain));
  const auto order = topological_order(chain);
  REQUIRE(order.size() == 3);
  CHECK(order == std::vector<std::size_t>{0, 1, 2});
  chain(2, 0) = true;
  CHECK_FALSE(is_acyclic(chain));
  CHECK(topological_order(chain).empty());

  MatrixXd W{{0.0, 0.5, 0.1}, {0.0, 0.0, 0.0}, {0.4, 0.0, 0.0}};
  const BoolMatrix s = support(W, 0.3);
  CHECK(s(0, 1));
  CHECK_FALSE(s(0, 2));
  CHECK(s(2, 0));
}

TEST_CASE("EdgeMask ignores the diagonal") {
  EdgeMask m(3);
  CHECK_FALSE(m.allowed(1, 1));
  m.set(1, 1, true);
  CHECK_FALSE(m.allowed(1, 1));
  CHECK(m.allowed(0, 2));
  const EdgeMask none = EdgeMask::none(3);
  CHECK_FALSE(none.allowed(0, 2));
}

TEST_CASE("model JSON round trip is exact") {
  std::mt19937_64 rng(21);
  ModelParams p = test::random_dag_params(mixed_shape(), rng);
  p.mask.set(2, 0, false);
  const nlohmann::json j = model_to_json(p);
  const ModelParams q = model_from_json(nlohmann::json::parse(j.dump()));
  CHECK(q.shape == p.shape);
  CHECK(q.mask == p.mask);
  CHECK(q.omega2 == p.omega2);
  CHECK(q.r2 == p.r2);
  for (std::size_t k = 0; k < p.cl.size(); ++k) {
    CHECK(q.cl[k] == p.cl[k]);
    CHECK(q.ck[k] == p.ck[k]);
  }
  for (std::size_t k = 0; k < p.basis.size(); ++k) CHECK(q.basis[k] == p.basis[k]);

  nlohmann::json broken = j;
  broken["CL"][0][1] = "x";
  CHECK_THROWS_AS(model_from_json(broken), InputError);
}

TEST_CASE("check_consistent flags mis-sized blocks") {
  ModelParams p = ModelParams::zeros(mixed_shape());
  CHECK_NOTHROW(p.check_consistent());
  p.CK(0, 2) = MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(p.check_consistent(), ShapeError);
}
