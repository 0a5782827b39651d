#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "netid/model.hpp"
#include "netid/rng.hpp"
#include "test_support.hpp"

using namespace netid;
using namespace netid::testing;

namespace {

ModelSpec gam_spec(NetworkGraph g, int degree, bool bias = false) {
  ModelSpec spec;
  spec.graph = std::move(g);
  spec.deg_e = degree;
  spec.deg_f = degree;
  spec.include_bias = bias;
  return spec;
}

Vec random_theta(const Model& m, Rng& rng, double scale = 1.0) {
  Vec theta(m.num_params());
  for (int i = 0; i < theta.size(); ++i) theta[i] = rng.normal(0.0, scale);
  return theta;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("upstream and downstream views partition the coefficients") {
  std::vector<ModelSpec> specs;
  specs.push_back(gam_spec(chain_graph(3), 2, true));
  specs.push_back(gam_spec(single_node_graph(2, 1), 3));
  ModelSpec slacky = gam_spec(chain_graph(2), 2);
  slacky.slack_contract = true;
  specs.push_back(slacky);

  for (const auto& spec : specs) {
    const Model m(spec);
    const auto& L = m.layout();
    std::vector<int> in_up(m.num_params(), 0), in_down(m.num_params(), 0);
    for (const auto& view : L.upstream_index)
      for (int idx : view) ++in_up[idx];
    for (const auto& view : L.downstream_index)
      for (int idx : view) ++in_down[idx];
    for (int idx = 0; idx < m.num_params(); ++idx) {
      CHECK(in_up[idx] == 1);
      CHECK(in_down[idx] == 1);
    }
  }
}

TEST_CASE("evaluation matches the slow basis path") {
  Rng rng(21);
  const Model m(gam_spec(single_node_graph(2, 1), 3, true));
  for (int trial = 0; trial < 5; ++trial) {
    const Vec theta = random_theta(m, rng);
    Vec x(2), u(1);
    x << rng.uniform(), rng.uniform();
    u << rng.uniform();
    CHECK((eval_e(m, theta, 0, x, u) - slow_eval_e(m, theta, 0, x, u)).lpNorm<Eigen::Infinity>() <=
          1e-12);
    CHECK((eval_f(m, theta, 0, 0, x, u) - slow_eval_f(m, theta, 0, 0, x, u))
              .lpNorm<Eigen::Infinity>() <= 1e-12);
  }

  const auto g = make_graph(2, {2, 1}, {1, 0}, {{0, 0}, {0, 1}, {1, 1}});
  const Model m2(gam_spec(g, 2));
  const Vec theta = random_theta(m2, rng);
  Vec x0(2), u0(1), x1(1), u1(0);
  x0 << 0.3, -0.4;
  u0 << 0.9;
  x1 << 1.1;
  CHECK((eval_e(m2, theta, 1, x1, u1) - slow_eval_e(m2, theta, 1, x1, u1)).lpNorm<Eigen::Infinity>() <=
        1e-12);
  CHECK((eval_f(m2, theta, 1, 0, x0, u0) - slow_eval_f(m2, theta, 1, 0, x0, u0))
            .lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK(m2.edge_index(1, 0) == -1);
  CHECK_THROWS_AS(eval_f(m2, theta, 0, 1, x1, u1), std::invalid_argument);
}

TEST_CASE("jacobian blocks match finite differences") {
  Rng rng(22);
  const Model m(gam_spec(single_node_graph(2, 2), 3, true));
  const Vec theta = random_theta(m, rng, 0.5);
  Vec x(2), u(2);
  x << 0.4, 0.7;
  u << 0.2, 0.9;

  const Mat Je = fd_jacobian([&](const Vec& xx) { return eval_e(m, theta, 0, xx, u); }, x);
  const Vec E = eval_E_diag(m, theta, 0, x, u);
  for (int k = 0; k < 2; ++k)
    for (int l = 0; l < 2; ++l) {
      const double want = k == l ? E[k] : 0.0;  // e is diagonal in the state by construction
      CHECK(Je(k, l) == doctest::Approx(want).epsilon(1e-5));
    }

  const Mat JF = fd_jacobian([&](const Vec& xx) { return eval_f(m, theta, 0, 0, xx, u); }, x);
  const Mat F = eval_F_block(m, theta, 0, 0, x, u);
  CHECK((JF - F).lpNorm<Eigen::Infinity>() <= 1e-5 * (1.0 + F.lpNorm<Eigen::Infinity>()));

  const Mat JK = fd_jacobian([&](const Vec& uu) { return eval_f(m, theta, 0, 0, x, uu); }, u);
  const Mat K = eval_K_block(m, theta, 0, 0, x, u);
  CHECK((JK - K).lpNorm<Eigen::Infinity>() <= 1e-5 * (1.0 + K.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("affine step inverts the linear system") {
  Rng rng(23);
  const auto g = make_graph(2, {1, 1}, {1, 1}, {{0, 0}, {1, 1}, {0, 1}});
  const Model m(gam_spec(g, 1));
  Vec E_diag(2);
  E_diag << 2.0, 1.5;
  Mat F = Mat::Zero(2, 2), K = Mat::Zero(2, 2);
  F(0, 0) = 0.8;
  F(1, 1) = 0.4;
  F(1, 0) = 0.3;
  K(0, 0) = 1.0;
  K(1, 1) = 0.7;
  const Vec theta = params_from_linear(m, E_diag, F, K);

  for (int trial = 0; trial < 5; ++trial) {
    Vec x(2), u(2);
    x << rng.uniform(), rng.uniform();
    u << rng.uniform(), rng.uniform();
    const StepResult s = solve_step(m, theta, x, u, u);
    REQUIRE(s.ok());
    const Vec want = E_diag.cwiseInverse().cwiseProduct(F * x + K * u);
    CHECK((s.x_next - want).lpNorm<Eigen::Infinity>() <= 1e-9);
  }

  CHECK((eval_F_block(m, theta, 1, 0, Vec::Ones(1), Vec::Ones(1)) - F.block(1, 0, 1, 1))
            .lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK_THROWS_AS(params_from_linear(m, E_diag, Mat::Ones(2, 2), K), std::invalid_argument);
}

TEST_CASE("simulate echoes the seed row and flags divergence") {
  const Model m(gam_spec(single_node_graph(1, 1), 1));
  const Vec theta =
      params_from_linear(m, Vec::Ones(1), Mat::Constant(1, 1, 2.0), Mat::Zero(1, 1));
  const SimResult res = simulate(m, theta, Vec::Ones(1), Mat::Zero(40, 1));
  CHECK(res.diverged);
  CHECK(res.steps_ok == 20);  // doubling from 1 stays within 1e6 through 2^19
  CHECK(res.x(0, 0) == 1.0);
  CHECK(res.x(19, 0) == doctest::Approx(std::pow(2.0, 19)));
  CHECK(res.x(20, 0) == 0.0);

  const Vec stable =
      params_from_linear(m, Vec::Ones(1), Mat::Constant(1, 1, 0.5), Mat::Zero(1, 1));
  const SimResult ok = simulate(m, stable, Vec::Ones(1), Mat::Zero(10, 1));
  CHECK(!ok.diverged);
  CHECK(ok.steps_ok == 10);
  CHECK(ok.x(9, 0) == doctest::Approx(std::pow(0.5, 9)));
}

TEST_CASE("identity params fix the origin") {
  const Model m(gam_spec(chain_graph(2), 2, true));
  const Vec theta = identity_params(m);
  Vec x(2), u(2);
  x << 0.3, 0.8;
  u << 0.1, 0.4;
  CHECK((eval_e(m, theta, 0, x.head(1), u.head(1)) - x.head(1)).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK(eval_f(m, theta, 1, 0, x.head(1), u.head(1)).lpNorm<Eigen::Infinity>() <= 1e-12);
  const StepResult s = solve_step(m, theta, x, u, u);
  REQUIRE(s.ok());
  CHECK(s.x_next.lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("no bracket when the implicit equation has no solution") {
  // e(x) = x^2 >= 0 against a constant forcing of -1
  ModelSpec spec = gam_spec(single_node_graph(1, 0), 2, true);
  const Model m(spec);
  Vec theta = Vec::Zero(m.num_params());
  const auto& eb = m.layout().e_block[0];
  const auto& fb = m.layout().edge[0].f;
  theta[eb.offset + 2] = 1.0;   // terms are 1, x, x^2
  theta[fb.offset] = -1.0;
  const StepResult s = solve_step(m, theta, Vec::Ones(1), Vec(0), Vec(0));
  CHECK(!s.ok());
  CHECK(s.status == StepStatus::NoBracket);
  CHECK(s.fail_node == 0);
  CHECK(s.fail_coord == 0);
}

TEST_CASE("validate_dataset rejects bad shapes") {
  const auto g = chain_graph(2);
  Dataset ds;
  ds.x = Mat::Zero(5, 2);
  ds.u = Mat::Zero(5, 2);
  CHECK_NOTHROW(validate_dataset(g, ds));
  ds.u = Mat::Zero(5, 3);
  CHECK_THROWS_AS(validate_dataset(g, ds), std::invalid_argument);
  ds.u = Mat::Zero(4, 2);
  CHECK_THROWS_AS(validate_dataset(g, ds), std::invalid_argument);
  ds.u = Mat::Zero(5, 2);
  ds.x(3, 1) = std::nan("");
  CHECK_THROWS_AS(validate_dataset(g, ds), std::invalid_argument);
  ds.x = Mat::Zero(1, 2);
  ds.u = Mat::Zero(1, 2);
  CHECK_THROWS_AS(validate_dataset(g, ds), std::invalid_argument);
}

}  // TEST_SUITE
