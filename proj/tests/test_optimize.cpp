#include <doctest.h>

#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "netid/constraints.hpp"
#include "netid/datagen.hpp"
#include "netid/optimize.hpp"
#include "netid/rng.hpp"
#include "test_support.hpp"

using namespace netid;
using netid::testing::TempDir;

namespace {

Model make_model(const NetworkGraph& g, int degree, ModelSet set, bool bias = false) {
  ModelSpec spec;
  spec.graph = g;
  spec.deg_e = degree;
  spec.deg_f = degree;
  spec.include_bias = bias;
  apply_model_set(spec, set);
  return Model(std::move(spec));
}

// two coupled scalar states driven at 30 dB, small enough for quick fits
struct Fixture {
  Model model;
  Dataset data;
  ConstraintSystem cs;
};

Fixture noisy_fixture(std::uint64_t seed, ModelSet set = ModelSet::MonotoneL1) {
  Rng rng(seed);
  const LinearSystem sys = gen_linear_system(2, 3, 0.8, rng);
  Model m = make_model(linear_graph(sys), 1, set);
  Dataset ds = simulate_linear_noisy(sys, 150, 30.0, rng);
  ConstraintSystem cs = build_constraints(m, samples_from_dataset(m, ds));
  return {std::move(m), std::move(ds), std::move(cs)};
}

double min_inequality_slack(const ConstraintSystem& cs, const Vec& theta) {
  double worst = 1e300;
  for (const auto& nc : cs.node) {
    if (nc.G.rows() == 0) continue;
    Vec w(nc.vars.size());
    for (std::size_t k = 0; k < nc.vars.size(); ++k) w[k] = theta[nc.vars[k]];
    worst = std::min(worst, (nc.h - nc.G * w).minCoeff());
  }
  return worst;
}

}  // namespace

TEST_SUITE("optimize") {

TEST_CASE("interior start is strictly inside every constraint family") {
  const NetworkGraph g = netid::testing::chain_graph(3);
  for (ModelSet set : {ModelSet::Unconstrained, ModelSet::Monotone, ModelSet::MonotoneL1,
                       ModelSet::SlackL1}) {
    const Model m = make_model(g, 2, set, true);
    const ConstraintSystem cs = build_constraints(m, box_samples(m, 0.0, 1.0, 3));
    const Vec w = strict_interior_params(m);
    CHECK(min_inequality_slack(cs, w) > 0.0);
    const FeasibilityReport fr = check_feasibility(cs, w);
    CHECK(fr.max_equality <= 1e-12);
  }
}

TEST_CASE("prox step is stationary for the regularized loss") {
  Rng rng(71);
  const Model m = make_model(netid::testing::single_node_graph(2, 1), 2,
                             ModelSet::Unconstrained);
  Dataset ds;
  ds.x.resize(15, 2);
  ds.u.resize(15, 1);
  for (int t = 0; t < 15; ++t) {
    ds.x(t, 0) = rng.uniform();
    ds.x(t, 1) = rng.uniform();
    ds.u(t, 0) = rng.uniform();
  }
  const LocalObjective obj(m, ds, 0, FitObjective::Lree);

  const Vec theta0 = identity_params(m);
  Vec warm(obj.dim());
  for (int k = 0; k < obj.dim(); ++k) warm[k] = theta0[obj.vars()[k]];
  Vec center = warm;
  for (int k = 0; k < obj.dim(); ++k) center[k] += rng.uniform(-0.05, 0.05);

  const double rho = 2.0;
  const Vec w = prox_newton(obj, center, rho, warm);
  Vec grad(obj.dim());
  const double val = obj.value_grad(w, grad);
  REQUIRE(std::isfinite(val));
  CHECK((grad + rho * (w - center)).lpNorm<Eigen::Infinity>() <= 1e-7);

  const double at_warm = obj.value(warm) + 0.5 * rho * (warm - center).squaredNorm();
  CHECK(val + 0.5 * rho * (w - center).squaredNorm() <= at_warm + 1e-12);
}

TEST_CASE("all-zero data is fit exactly") {
  const Model m = make_model(netid::testing::chain_graph(2), 2, ModelSet::MonotoneL1);
  Dataset ds;
  ds.x = Mat::Zero(2, 2);
  ds.u = Mat::Zero(2, 2);
  const ConstraintSystem cs = build_constraints(m, samples_from_dataset(m, ds));
  const CentralizedResult r = centralized_fit(m, ds, cs);
  REQUIRE(r.converged);
  CHECK(r.objective <= 1e-9);
  CHECK(check_feasibility(cs, r.params).worst() <= 1e-9);
}

TEST_CASE("noiseless linear data is reproduced to solver accuracy") {
  Rng rng(72);
  Mat A(2, 2);
  A << 0.40, 0.20, 0.10, 0.50;
  const LinearRealization real = construct_feasible_linear(A, 1.0);
  REQUIRE(real.ok);

  LinearSystem sys;
  sys.A = A;
  sys.b_diag = Vec(2);
  sys.b_diag << 0.30, 0.60;
  const Model m = make_model(linear_graph(sys), 1, ModelSet::MonotoneL1);
  const Mat K = (real.E_diag.array() * sys.b_diag.array()).matrix().asDiagonal();
  const Vec theta_star = params_from_linear(m, real.E_diag, real.F, K);

  Dataset ds = simulate_linear_noisy(sys, 200, std::numeric_limits<double>::infinity(), rng);
  const ConstraintSystem cs = build_constraints(m, samples_from_dataset(m, ds));
  REQUIRE(check_feasibility(cs, theta_star).worst() <= 1e-9);
  REQUIRE(residual_summary(m, theta_star, ds).lree <= 1e-18);

  const CentralizedResult r = centralized_fit(m, ds, cs);
  REQUIRE(r.converged);
  CHECK(r.objective <= 1e-6);
  CHECK(residual_summary(m, r.params, ds).lree <= 1e-6);
  CHECK(check_feasibility(cs, r.params).worst() <= 1e-9);
}

TEST_CASE("consensus reaches the centralized objective") {
  const Fixture fx = noisy_fixture(73);
  const CentralizedResult central = centralized_fit(fx.model, fx.data, fx.cs);
  REQUIRE(central.converged);
  REQUIRE(central.objective > 1e-4);  // noise keeps the optimum away from zero

  AdmmOptions o;
  o.threads = 1;
  o.stop = {1e-6, 1e-5, 20000};
  const AdmmResult r = admm_fit(fx.model, fx.data, fx.cs, o);
  REQUIRE(r.converged);
  CHECK(check_feasibility(fx.cs, r.params).worst() <= 1e-9);

  const double J = residual_summary(fx.model, r.params, fx.data).lree;
  CHECK(std::abs(J - central.objective) <= 1e-3 * central.objective);

  CHECK(static_cast<int>(r.stats.size()) == r.iterations);
  const long long per_iter = admm_bytes_per_iteration(fx.model);
  for (const auto& s : r.stats) CHECK(s.bytes_exchanged == per_iter);
}

TEST_CASE("thread schedule does not change the iterates") {
  const Fixture fx = noisy_fixture(74);
  AdmmOptions serial;
  serial.threads = 1;
  serial.stop = {1e-5, 1e-4, 5000};
  AdmmOptions parallel = serial;
  parallel.threads = 0;

  const AdmmResult a = admm_fit(fx.model, fx.data, fx.cs, serial);
  const AdmmResult b = admm_fit(fx.model, fx.data, fx.cs, parallel);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(a.iterations == b.iterations);
  CHECK((a.theta - b.theta).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((a.params - b.params).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("per-iteration traffic counts three transfers per coupling edge") {
  const Model chain = make_model(netid::testing::chain_graph(3), 2, ModelSet::MonotoneL1);
  // two off-diagonal edges; deg-2 f over (x, u) has five terms, no slack block
  CHECK(admm_bytes_per_iteration(chain) == 3 * 8 * (5 + 5));

  const Model slack = make_model(netid::testing::chain_graph(2), 2, ModelSet::SlackL1);
  long long expect = 0;
  for (const auto& e : slack.layout().edge)
    if (e.source != e.target) expect += 3 * 8 * (e.f.size() + e.slack.size());
  CHECK(admm_bytes_per_iteration(slack) == expect);
  CHECK(expect > 3 * 8 * 5);  // the slack block travels too
}

TEST_CASE("stats file carries the run stamp and one row per iteration") {
  TempDir tmp;
  std::vector<IterStats> stats;
  stats.push_back({1, 0.5, 0.25, 1e-3, 2e-3, 240});
  stats.push_back({2, 0.05, 0.02, 1e-3, 2e-3, 240});
  const std::string path = tmp.file("stats.csv");
  write_admm_stats_csv(path, stats, {"abc123", 9});

  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "# config_hash=abc123 seed=9");
  REQUIRE(std::getline(in, line));
  CHECK(line == "iter,primal_res,dual_res,time_step1_max,time_step2_max,bytes_exchanged");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
}

TEST_CASE("checkpoints appear on the requested schedule") {
  TempDir tmp;
  const Fixture fx = noisy_fixture(75);
  AdmmOptions o;
  o.threads = 1;
  o.stop = {0.0, 0.0, 5};  // unreachable tolerances: run exactly five iterations
  o.checkpoint_every = 2;
  o.checkpoint_dir = tmp.path();
  o.meta = {"feed42", 75};
  const AdmmResult r = admm_fit(fx.model, fx.data, fx.cs, o);
  CHECK(r.iterations == 5);

  CHECK(std::ifstream(tmp.file("iter_000002.json")).good());
  CHECK(std::ifstream(tmp.file("iter_000004.json")).good());
  CHECK(!std::ifstream(tmp.file("iter_000005.json")).good());

  const ParamFile pf = load_params_json(tmp.file("iter_000004.json"));
  CHECK(pf.theta.size() == fx.model.num_params());
  CHECK(pf.meta.config_hash == "feed42");
}

TEST_CASE("larger model sets cannot improve the training objective") {
  Rng rng(76);
  const LinearSystem sys = gen_linear_system(2, 3, 0.8, rng);
  const Dataset ds = simulate_linear_noisy(sys, 150, 30.0, rng);

  double previous = -1.0;
  for (ModelSet set : {ModelSet::Unconstrained, ModelSet::Monotone, ModelSet::MonotoneL1}) {
    const Model m = make_model(linear_graph(sys), 1, set);
    const ConstraintSystem cs = build_constraints(m, samples_from_dataset(m, ds));
    const CentralizedResult r = centralized_fit(m, ds, cs);
    REQUIRE(r.converged);
    if (previous >= 0.0) CHECK(previous <= r.objective * (1.0 + 1e-6) + 1e-12);
    previous = r.objective;
  }
}

TEST_CASE("residual balancing still converges to the same answer") {
  const Fixture fx = noisy_fixture(77);
  const CentralizedResult central = centralized_fit(fx.model, fx.data, fx.cs);
  REQUIRE(central.converged);

  AdmmOptions o;
  o.threads = 1;
  o.adapt_rho = true;
  o.stop = {1e-6, 1e-5, 20000};
  const AdmmResult r = admm_fit(fx.model, fx.data, fx.cs, o);
  REQUIRE(r.converged);
  const double J = residual_summary(fx.model, r.params, fx.data).lree;
  CHECK(std::abs(J - central.objective) <= 2e-3 * central.objective);
  CHECK(check_feasibility(fx.cs, r.params).worst() <= 1e-9);
}

}  // TEST_SUITE
