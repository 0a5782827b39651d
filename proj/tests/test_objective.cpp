#include <doctest.h>

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "netid/objective.hpp"
#include "netid/rng.hpp"
#include "test_support.hpp"

using namespace netid;
using namespace netid::testing;

namespace {

Model small_model(int deg, int n = 2, int m = 1) {
  ModelSpec spec;
  spec.graph = single_node_graph(n, m);
  spec.deg_e = deg;
  spec.deg_f = deg;
  return Model(spec);
}

Dataset random_dataset(const Model& m, Rng& rng, int T) {
  const auto& g = m.graph();
  Dataset ds;
  ds.x.resize(T, g.total_state_dim());
  ds.u.resize(T, g.total_input_dim());
  for (int t = 0; t < T; ++t) {
    for (int c = 0; c < ds.x.cols(); ++c) ds.x(t, c) = rng.uniform();
    for (int c = 0; c < ds.u.cols(); ++c) ds.u(t, c) = rng.uniform();
  }
  return ds;
}

// identity e plus mild noise everywhere keeps 2E - 1 positive on [0,1] data
Vec wiggled_identity(const Model& m, Rng& rng, double scale) {
  Vec theta = identity_params(m);
  for (int i = 0; i < theta.size(); ++i) theta[i] += rng.normal(0.0, scale);
  return theta;
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("residuals and summaries match the slow loops") {
  Rng rng(41);
  const Model m = small_model(2);
  const Dataset ds = random_dataset(m, rng, 12);
  const Vec theta = wiggled_identity(m, rng, 0.08);

  const Mat eps = equation_residuals(m, theta, ds);
  REQUIRE(eps.rows() == 11);
  const ResidualSummary rs = residual_summary(m, theta, ds);
  REQUIRE(rs.well_posed);
  CHECK(rs.lree == doctest::Approx(naive_lree(m, theta, ds)).epsilon(1e-10));
  CHECK(rs.iee == doctest::Approx(naive_iee(m, theta, ds)).epsilon(1e-10));
  CHECK(rs.iee == doctest::Approx(eps.squaredNorm()).epsilon(1e-12));

  const LocalObjective lree(m, ds, 0, FitObjective::Lree);
  const LocalObjective iee(m, ds, 0, FitObjective::Iee);
  Vec local(lree.dim());
  for (int c = 0; c < lree.dim(); ++c) local[c] = theta[lree.vars()[c]];
  CHECK(lree.value(local) == doctest::Approx(rs.lree).epsilon(1e-10));
  CHECK(iee.value(local) == doctest::Approx(rs.iee).epsilon(1e-10));
  CHECK((lree.residuals(local) - eps).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("local objectives sum to the network objective") {
  Rng rng(42);
  ModelSpec spec;
  spec.graph = chain_graph(3);
  spec.deg_e = 2;
  spec.deg_f = 2;
  const Model m(spec);
  const Dataset ds = random_dataset(m, rng, 9);
  const Vec theta = wiggled_identity(m, rng, 0.05);

  for (const auto obj : {FitObjective::Lree, FitObjective::Iee}) {
    double total = 0.0;
    for (int i = 0; i < 3; ++i) {
      const LocalObjective lo(m, ds, i, obj);
      Vec local(lo.dim());
      for (int c = 0; c < lo.dim(); ++c) local[c] = theta[lo.vars()[c]];
      total += lo.value(local);
    }
    const ResidualSummary rs = residual_summary(m, theta, ds);
    const double want = obj == FitObjective::Lree ? rs.lree : rs.iee;
    CHECK(total == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("gradients match finite differences") {
  Rng rng(43);
  const Model m = small_model(2);
  const Dataset ds = random_dataset(m, rng, 8);

  for (const auto obj : {FitObjective::Lree, FitObjective::Iee}) {
    const LocalObjective lo(m, ds, 0, obj);
    for (int trial = 0; trial < 5; ++trial) {
      Vec local(lo.dim());
      const Vec theta = wiggled_identity(m, rng, 0.05);
      for (int c = 0; c < lo.dim(); ++c) local[c] = theta[lo.vars()[c]];

      Vec grad(lo.dim());
      const double val = lo.value_grad(local, grad);
      REQUIRE(std::isfinite(val));
      const Vec fd = fd_gradient([&](const Vec& w) { return lo.value(w); }, local);
      CHECK((grad - fd).lpNorm<Eigen::Infinity>() <=
            1e-5 * (1.0 + fd.lpNorm<Eigen::Infinity>()));
    }
  }
}

TEST_CASE("hessian is symmetric, positive semidefinite, and curves like the function") {
  Rng rng(44);
  const Model m = small_model(2);
  const Dataset ds = random_dataset(m, rng, 8);
  const LocalObjective lo(m, ds, 0, FitObjective::Lree);

  Vec local(lo.dim());
  const Vec theta = wiggled_identity(m, rng, 0.05);
  for (int c = 0; c < lo.dim(); ++c) local[c] = theta[lo.vars()[c]];

  Vec grad(lo.dim());
  Mat hess(lo.dim(), lo.dim());
  lo.value_grad_hess(local, grad, hess);
  CHECK((hess - hess.transpose()).lpNorm<Eigen::Infinity>() <= 1e-10);
  const Eigen::SelfAdjointEigenSolver<Mat> eig(hess);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8);

  for (int trial = 0; trial < 3; ++trial) {
    Vec dir(lo.dim());
    for (int c = 0; c < dir.size(); ++c) dir[c] = rng.normal();
    dir.normalize();
    const double h = 1e-4;
    const double up = lo.value(local + h * dir);
    const double mid = lo.value(local);
    const double down = lo.value(local - h * dir);
    const double fd2 = (up - 2.0 * mid + down) / (h * h);
    const double quad = dir.dot(hess * dir);
    CHECK(quad == doctest::Approx(fd2).epsilon(1e-3));
  }
}

TEST_CASE("identity E collapses the bound onto the implicit error") {
  Rng rng(45);
  const Model m = small_model(1);
  const Dataset ds = random_dataset(m, rng, 10);
  Vec theta = identity_params(m);
  const auto& fb = m.layout().edge[0].f;
  for (int k = 0; k < fb.size(); ++k) theta[fb.offset + k] = rng.normal(0.0, 0.3);

  const ResidualSummary rs = residual_summary(m, theta, ds);
  CHECK(rs.lree == doctest::Approx(rs.iee).epsilon(1e-12));

  const EquationError ee = equation_error(m, theta, ds);
  REQUIRE(ee.ok);
  CHECK(ee.value == doctest::Approx(rs.iee).epsilon(1e-9));
}

TEST_CASE("scalar formula spot check") {
  // one residual with eps = 2 and E = 1.5: value 4 / 2 = 2
  ModelSpec spec;
  spec.graph = single_node_graph(1, 1);
  const Model m(spec);
  Vec theta = Vec::Zero(m.num_params());
  theta[m.layout().e_block[0].offset + m.e_basis(0).linear_index(0)] = 1.5;
  theta[m.layout().edge[0].f.offset + m.f_basis(0).linear_index(1)] = 1.0;  // f = u

  Dataset ds;
  ds.x.resize(2, 1);
  ds.x << 0.0, 2.0;
  ds.u.resize(2, 1);
  ds.u << 1.0, 0.5;

  const ResidualSummary rs = residual_summary(m, theta, ds);
  CHECK(rs.iee == doctest::Approx(4.0));
  CHECK(rs.lree == doctest::Approx(2.0));
}

TEST_CASE("outside the domain the bound is infinite") {
  Rng rng(46);
  const Model m = small_model(1);
  const Dataset ds = random_dataset(m, rng, 5);
  Vec theta = identity_params(m);
  theta[m.layout().e_block[0].offset + m.e_basis(0).linear_index(0)] = 0.1;  // 2E - 1 < 0

  const ResidualSummary rs = residual_summary(m, theta, ds);
  CHECK(!rs.well_posed);
  CHECK(std::isinf(rs.lree));
  CHECK(rs.fail_node == 0);

  const LocalObjective lo(m, ds, 0, FitObjective::Lree);
  Vec local(lo.dim());
  for (int c = 0; c < lo.dim(); ++c) local[c] = theta[lo.vars()[c]];
  CHECK(std::isinf(lo.value(local)));
}

TEST_CASE("joint convexity along random segments") {
  Rng rng(47);
  const Model m = small_model(2);
  const Dataset ds = random_dataset(m, rng, 10);
  const LocalObjective lo(m, ds, 0, FitObjective::Lree);

  for (int trial = 0; trial < 10; ++trial) {
    Vec a(lo.dim()), b(lo.dim());
    const Vec ta = wiggled_identity(m, rng, 0.05);
    const Vec tb = wiggled_identity(m, rng, 0.05);
    for (int c = 0; c < lo.dim(); ++c) {
      a[c] = ta[lo.vars()[c]];
      b[c] = tb[lo.vars()[c]];
    }
    const double ja = lo.value(a);
    const double jb = lo.value(b);
    REQUIRE(std::isfinite(ja));
    REQUIRE(std::isfinite(jb));
    for (const double lam : {0.25, 0.5, 0.75}) {
      const double mix = lo.value(lam * a + (1.0 - lam) * b);
      CHECK(mix <= lam * ja + (1.0 - lam) * jb + 1e-9);
    }
  }
}

TEST_CASE("the bound dominates the explicit one-step error when e is affine") {
  Rng rng(48);
  const auto g = make_graph(2, {1, 1}, {1, 1}, {{0, 0}, {1, 1}, {0, 1}});
  ModelSpec spec;
  spec.graph = g;
  const Model m(spec);

  for (int trial = 0; trial < 20; ++trial) {
    const Dataset ds = random_dataset(m, rng, 6);
    Vec E(2);
    E << rng.uniform(0.7, 1.8), rng.uniform(0.7, 1.8);
    Mat F = Mat::Zero(2, 2), K = Mat::Zero(2, 2);
    F(0, 0) = rng.uniform();
    F(1, 1) = rng.uniform();
    F(1, 0) = rng.uniform();
    K(0, 0) = rng.uniform();
    K(1, 1) = rng.uniform();
    const Vec theta = params_from_linear(m, E, F, K);

    const ResidualSummary rs = residual_summary(m, theta, ds);
    const EquationError ee = equation_error(m, theta, ds);
    REQUIRE(ee.ok);
    CHECK(ee.value <= rs.lree + 1e-9);
  }
}

TEST_CASE("reproducing data exactly zeroes every functional") {
  Rng rng(49);
  const Model m = small_model(1);
  Vec E(2);
  E << 1.2, 0.9;
  Mat F(2, 2), K(2, 1);
  F << 0.4, 0.1, 0.2, 0.3;
  K << 0.5, 0.7;
  const Vec theta = params_from_linear(m, E, F, K);

  Mat u(20, 1);
  for (int t = 0; t < 20; ++t) u(t, 0) = rng.uniform();
  const SimResult sim = simulate(m, theta, Vec::Zero(2), u);
  REQUIRE(!sim.diverged);
  Dataset ds;
  ds.x = sim.x;
  ds.u = u;

  const ResidualSummary rs = residual_summary(m, theta, ds);
  CHECK(rs.iee <= 1e-16);
  CHECK(rs.lree <= 1e-16);
  const EquationError ee = equation_error(m, theta, ds);
  REQUIRE(ee.ok);
  CHECK(ee.value <= 1e-16);
}

TEST_CASE("unit data against the identity shifts the error by one") {
  const Model m = small_model(1, 1, 1);
  const Vec theta = identity_params(m);
  Dataset ds;
  ds.x = Mat::Ones(2, 1);
  ds.u = Mat::Zero(2, 1);
  const ResidualSummary rs = residual_summary(m, theta, ds);
  CHECK(rs.iee == doctest::Approx(1.0));
  CHECK(rs.lree == doctest::Approx(1.0));
}

}  // TEST_SUITE
