#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "netid/constraints.hpp"
#include "netid/datagen.hpp"
#include "netid/evaluate.hpp"
#include "netid/io.hpp"
#include "netid/optimize.hpp"

namespace {

using namespace netid;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class... Ts>
std::string canon(const Ts&... parts) {
  std::ostringstream s;
  (s << ... << parts);
  return s.str();
}

void ensure_dir(const std::string& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw std::invalid_argument("cannot create output directory: " + out);
}

struct GenLinearArgs {
  int n = 20;
  int band = 9;
  double radius = 0.95;
  int T = 10000;
  double snr = 40.0;
  std::uint64_t seed = 1;
  std::string out = ".";
};

int run_gen_linear(const GenLinearArgs& a) {
  FileMeta meta{config_hash_hex(canon("cmd=gen-linear;n=", a.n, ";band=", a.band, ";radius=",
                                      a.radius, ";T=", a.T, ";snr=", a.snr, ";seed=", a.seed)),
                a.seed};
  Rng rng(a.seed);
  const LinearSystem sys = gen_linear_system(a.n, a.band, a.radius, rng);
  const Dataset ds = simulate_linear_noisy(sys, a.T, a.snr, rng);
  ensure_dir(a.out);
  save_dataset_csv(ds, a.out + "/dataset.csv", meta);
  save_graph_json(linear_graph(sys), a.out + "/graph.json", meta.config_hash, meta.seed);

  nlohmann::json j;
  j["config_hash"] = meta.config_hash;
  j["seed"] = meta.seed;
  for (int i = 0; i < a.n; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < a.n; ++c) row.push_back(sys.A(i, c));
    j["A"].push_back(row);
    j["b_diag"].push_back(sys.b_diag[i]);
  }
  std::ofstream sf(a.out + "/system.json");
  if (!sf) throw std::invalid_argument("cannot write system file in " + a.out);
  sf << j.dump(2) << "\n";

  std::printf("wrote dataset.csv (%d rows), graph.json, system.json to %s\n", ds.length(),
              a.out.c_str());
  return 0;
}

struct GenTrafficArgs {
  int roads = 7;
  int entries = 2;
  double t_f = 500.0;
  double mu = 0.0;
  double sigma = 0.2;
  double dt_int = 0.01;
  double dt_sample = 0.5;
  std::uint64_t seed = 1;
  std::string reuse_net;  // roll new inputs over an existing network
  std::string out = ".";
};

int run_gen_traffic(const GenTrafficArgs& a) {
  FileMeta meta{config_hash_hex(canon("cmd=gen-traffic;roads=", a.roads, ";entries=", a.entries,
                                      ";tf=", a.t_f, ";mu=", a.mu, ";sigma=", a.sigma,
                                      ";dt_int=", a.dt_int, ";dt_sample=", a.dt_sample,
                                      ";net=", a.reuse_net, ";seed=", a.seed)),
                a.seed};
  Rng rng(a.seed);
  TrafficNet net;
  if (a.reuse_net.empty())
    net = gen_traffic_graph(a.roads, a.entries, rng);
  else
    net = load_traffic_json(a.reuse_net);
  const int entries = static_cast<int>(net.in_nodes.size());
  const InputSignal sig = gen_input(a.t_f, a.mu, a.sigma, entries, rng);
  const TrafficSim sim = simulate_traffic(net, sig, a.t_f, a.dt_int, a.dt_sample);
  if (!sim.ok) {
    std::fprintf(stderr, "traffic simulation failed: %s\n", sim.message.c_str());
    return 3;
  }
  ensure_dir(a.out);
  save_traffic_json(net, a.out + "/traffic.json", meta.config_hash, meta.seed);
  save_graph_json(traffic_ident_graph(net), a.out + "/graph.json", meta.config_hash, meta.seed);
  save_dataset_csv(sim.data, a.out + "/dataset.csv", meta);
  std::printf("wrote traffic.json (%d nodes), graph.json, dataset.csv (%d rows) to %s\n",
              net.size(), sim.data.length(), a.out.c_str());
  return 0;
}

struct GenGraphArgs {
  int n = 10;
  int degree = 3;
  std::uint64_t seed = 1;
  std::string out = ".";
};

int run_gen_graph(const GenGraphArgs& a) {
  FileMeta meta{config_hash_hex(
                    canon("cmd=gen-graph;n=", a.n, ";degree=", a.degree, ";seed=", a.seed)),
                a.seed};
  Rng rng(a.seed);
  const NetworkGraph g = gen_regular_graph(a.n, a.degree, rng);
  ensure_dir(a.out);
  save_graph_json(g, a.out + "/graph.json", meta.config_hash, meta.seed);
  std::printf("wrote graph.json (%d nodes, %zu edges) to %s\n", g.num_nodes, g.edges.size(),
              a.out.c_str());
  return 0;
}

struct FitArgs {
  std::string data;
  std::string graph;
  std::string set = "ml1";
  int deg_e = 1;
  int deg_f = 1;
  bool bias = false;
  double alpha = 0.95;
  std::string objective = "lree";
  std::string mode = "centralized";
  double rho = 1.0;
  double eps_abs = 1e-4;
  double eps_rel = 1e-3;
  int max_iters = 2000;
  int grid_points = 0;
  double grid_inflate = 0.1;
  double margin = 1e-6;
  int checkpoint_every = 0;
  std::uint64_t seed = 0;
  std::string out = ".";
};

Model build_model(const FitArgs& a) {
  ModelSpec spec;
  spec.graph = load_graph_json(a.graph);
  spec.deg_e = a.deg_e;
  spec.deg_f = a.deg_f;
  spec.include_bias = a.bias;
  apply_model_set(spec, parse_model_set(a.set));
  spec.alpha = a.alpha;
  return Model(spec);
}

int run_fit(const FitArgs& a) {
  FileMeta meta{config_hash_hex(canon("cmd=fit;data=", a.data, ";graph=", a.graph, ";set=", a.set,
                                      ";deg_e=", a.deg_e, ";deg_f=", a.deg_f, ";bias=", a.bias,
                                      ";alpha=", a.alpha, ";objective=", a.objective, ";mode=",
                                      a.mode, ";rho=", a.rho, ";eps_abs=", a.eps_abs, ";eps_rel=",
                                      a.eps_rel, ";max_iters=", a.max_iters, ";grid_points=",
                                      a.grid_points, ";grid_inflate=", a.grid_inflate, ";margin=",
                                      a.margin)),
                a.seed};
  const Model m = build_model(a);
  const Dataset ds = load_dataset_csv(a.data);
  validate_dataset(m.graph(), ds);

  SampleSet samples = samples_from_dataset(m, ds);
  if (a.grid_points > 0)
    samples = merge_samples(std::move(samples), grid_samples(m, ds, a.grid_points, a.grid_inflate));
  const ConstraintSystem cs = build_constraints(m, std::move(samples), a.margin);

  const FitObjective obj = parse_fit_objective(a.objective);
  ensure_dir(a.out);
  const auto t0 = std::chrono::steady_clock::now();

  Vec params;
  bool converged = false;
  std::string message;
  if (a.mode == "centralized") {
    CentralizedOptions o;
    o.objective = obj;
    const CentralizedResult r = centralized_fit(m, ds, cs, o);
    params = r.params;
    converged = r.converged;
    message = r.message;
    std::printf("centralized: objective %.9e, %d centerings, %d newton steps, gap %.3e\n",
                r.objective, r.centerings, r.newton_iterations, r.gap);
  } else if (a.mode == "admm_serial" || a.mode == "admm_parallel") {
    AdmmOptions o;
    o.objective = obj;
    o.penalty_rho = a.rho;
    o.threads = a.mode == "admm_serial" ? 1 : 0;
    o.stop = {a.eps_abs, a.eps_rel, a.max_iters};
    o.checkpoint_every = a.checkpoint_every;
    o.checkpoint_dir = a.out;
    o.meta = meta;
    const AdmmResult r = admm_fit(m, ds, cs, o);
    params = r.params;
    converged = r.converged;
    message = r.message;
    write_admm_stats_csv(a.out + "/stats.csv", r.stats, meta);
    std::printf("%s: %d iterations, primal %.3e, dual %.3e\n", a.mode.c_str(), r.iterations,
                r.primal_res, r.dual_res);
  } else {
    throw std::invalid_argument("unknown fit mode: " + a.mode);
  }

  const double elapsed = seconds_since(t0);
  if (params.size() > 0) save_params_json(m, params, a.out + "/params.json", meta);
  if (!converged) {
    std::fprintf(stderr, "fit did not converge: %s\n", message.c_str());
    return 3;
  }

  const ResidualSummary rs = residual_summary(m, params, ds);
  const FeasibilityReport fr = check_feasibility(cs, params);
  std::printf("training lree %.9e, iee %.9e; constraint violation %.3e; %.2fs\n", rs.lree, rs.iee,
              fr.worst(), elapsed);
  std::printf("wrote params.json to %s\n", a.out.c_str());
  return 0;
}

struct SimulateArgs {
  std::string params;
  std::string data;
  std::string out = "trajectory.csv";
};

int run_simulate(const SimulateArgs& a) {
  const ParamFile pf = load_params_json(a.params);
  const Model m(pf.spec);
  const Dataset ds = load_dataset_csv(a.data);
  validate_dataset(m.graph(), ds);
  const SimResult sim = simulate(m, pf.theta, ds.x.row(0).transpose(), ds.u);
  FileMeta meta{config_hash_hex(canon("cmd=simulate;params=", a.params, ";data=", a.data)),
                pf.meta.seed};
  save_trajectory_csv(sim.x, a.out, meta);
  std::printf("wrote %s (%d rows, %d valid)%s\n", a.out.c_str(),
              static_cast<int>(sim.x.rows()), sim.steps_ok,
              sim.diverged ? ", diverged" : "");
  return 0;
}

struct EvalArgs {
  std::string params;
  std::string data;
  std::string oracle;  // reference params.json, enables the equation-error metric
  std::string results = "results.csv";
  std::string model_id = "model";
  std::string set_id = "set";
  int n_mc = 10000;
  int audit_pairs = 100;
  int horizon = 50;
  double box_lo = 0.0;
  double box_hi = 1.0;
  std::uint64_t seed = 1;
};

int run_eval(const EvalArgs& a) {
  const ParamFile pf = load_params_json(a.params);
  const Model m(pf.spec);
  const Dataset ds = load_dataset_csv(a.data);
  validate_dataset(m.graph(), ds);

  EvalReport report;
  const NseResult sr = nse(m, pf.theta, ds);
  report.nse = sr.value;
  report.unstable = sr.unstable;
  report.negative_states = sr.negative_states;
  report.contraction_ratio_max =
      audit_contraction(m, pf.theta, a.audit_pairs, a.horizon, a.seed, a.box_lo, a.box_hi);

  if (!a.oracle.empty()) {
    const ParamFile of = load_params_json(a.oracle);
    const Model om(of.spec);
    const NeeResult ne = nee(m, pf.theta, om, of.theta, a.n_mc, a.seed);
    if (ne.oracle_norm_zero) std::fprintf(stderr, "reference map is zero on the box; nee undefined\n");
    report.nee = ne.value;
  }

  const AuditResult mono =
      audit_monotone(m, pf.theta, a.audit_pairs, a.seed, a.box_lo, a.box_hi);
  const AuditResult pos = audit_positive(m, pf.theta, a.audit_pairs, a.seed, a.box_hi);

  append_eval_csv(a.results, a.model_id, a.set_id, report);
  std::printf("nse %.6e%s%s", report.nse, report.unstable ? " (diverged)" : "",
              report.negative_states ? " (negative states)" : "");
  if (!a.oracle.empty()) std::printf(", nee %.6e", report.nee);
  std::printf("\nmonotone violations %d/%d (%d diverged), positivity violations %d/%d, "
              "contraction ratio %.4f\n",
              mono.violations, a.audit_pairs, mono.diverged, pos.violations, a.audit_pairs,
              report.contraction_ratio_max);
  std::printf("appended row to %s\n", a.results.c_str());
  return 0;
}

struct BenchArgs {
  std::vector<int> sizes{10, 20, 50, 100, 200};
  int T = 500;
  int band = 3;
  double radius = 0.95;
  int admm_iters = 10;
  std::uint64_t seed = 1;
  std::string out = "bench.csv";
};

int run_bench(const BenchArgs& a) {
  std::ostringstream sz;
  for (int n : a.sizes) sz << n << ",";
  FileMeta meta{config_hash_hex(canon("cmd=bench-scaling;sizes=", sz.str(), ";T=", a.T, ";band=",
                                      a.band, ";radius=", a.radius, ";admm_iters=", a.admm_iters,
                                      ";seed=", a.seed)),
                a.seed};
  Rng rng(a.seed);
  std::vector<double> ns, wall, periter;
  for (int n : a.sizes) {
    const LinearSystem sys = gen_linear_system(n, a.band, a.radius, rng);
    const Dataset ds = simulate_linear_noisy(sys, a.T, 40.0, rng);
    ModelSpec spec;
    spec.graph = linear_graph(sys);
    apply_model_set(spec, ModelSet::MonotoneL1);
    const Model m(spec);
    const ConstraintSystem cs = build_constraints(m, samples_from_dataset(m, ds));

    const auto t0 = std::chrono::steady_clock::now();
    const CentralizedResult cr = centralized_fit(m, ds, cs);
    const double central = seconds_since(t0);
    if (!cr.converged) {
      std::fprintf(stderr, "centralized fit failed at n=%d: %s\n", n, cr.message.c_str());
      return 3;
    }

    AdmmOptions ao;
    ao.stop.max_iterations = a.admm_iters;
    const AdmmResult ar = admm_fit(m, ds, cs, ao);
    double per = 0.0;
    for (const IterStats& s : ar.stats) per += s.time_step1_max + s.time_step2_max;
    per /= static_cast<double>(ar.stats.size());

    ns.push_back(n);
    wall.push_back(central);
    periter.push_back(per);
    std::printf("n=%d: centralized %.3fs, admm simulated-parallel %.6fs/iter\n", n, central, per);
  }

  std::ofstream out(a.out);
  if (!out) throw std::invalid_argument("cannot write bench file: " + a.out);
  out << "# config_hash=" << meta.config_hash << ", seed=" << meta.seed << "\n";
  out << "n,wall_time,sim_parallel_time\n";
  char line[128];
  for (std::size_t i = 0; i < ns.size(); ++i) {
    std::snprintf(line, sizeof line, "%d,%.6e,%.6e\n", static_cast<int>(ns[i]), wall[i],
                  periter[i]);
    out << line;
  }
  const double slope_central = fit_loglog_slope(ns, wall);
  const double slope_admm = fit_loglog_slope(ns, periter);
  std::printf("log-log slopes: centralized %.3f, admm per-iteration %.3f\n", slope_central,
              slope_admm);
  std::printf("wrote %s\n", a.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"networked implicit model identification"};
  app.require_subcommand(1);

  GenLinearArgs gl;
  auto* cgl = app.add_subcommand("gen-linear", "sample a stable positive linear network dataset");
  cgl->add_option("--n", gl.n, "state dimension")->capture_default_str();
  cgl->add_option("--band", gl.band, "bandwidth of A (odd)")->capture_default_str();
  cgl->add_option("--radius", gl.radius, "spectral radius of A")->capture_default_str();
  cgl->add_option("--T", gl.T, "number of samples")->capture_default_str();
  cgl->add_option("--snr", gl.snr, "measurement SNR in dB (inf for noiseless)")
      ->capture_default_str();
  cgl->add_option("--seed", gl.seed, "")->capture_default_str();
  cgl->add_option("--out", gl.out, "output directory")->capture_default_str();

  GenTrafficArgs gt;
  auto* cgt = app.add_subcommand("gen-traffic", "triangulated traffic network + simulated data");
  cgt->add_option("--roads", gt.roads, "number of road cells")->capture_default_str();
  cgt->add_option("--entries", gt.entries, "number of entry/exit pairs")->capture_default_str();
  cgt->add_option("--tf", gt.t_f, "simulated horizon in seconds")->capture_default_str();
  cgt->add_option("--mu", gt.mu, "input hold-level mean")->capture_default_str();
  cgt->add_option("--sigma", gt.sigma, "input hold-level deviation")->capture_default_str();
  cgt->add_option("--dt-int", gt.dt_int, "integrator step")->capture_default_str();
  cgt->add_option("--dt-sample", gt.dt_sample, "sampling period")->capture_default_str();
  cgt->add_option("--net", gt.reuse_net, "reuse this traffic.json, only roll new inputs");
  cgt->add_option("--seed", gt.seed, "")->capture_default_str();
  cgt->add_option("--out", gt.out, "output directory")->capture_default_str();

  GenGraphArgs gg;
  auto* cgg = app.add_subcommand("gen-graph", "connected random regular graph");
  cgg->add_option("--n", gg.n, "nodes")->capture_default_str();
  cgg->add_option("--degree", gg.degree, "degree")->capture_default_str();
  cgg->add_option("--seed", gg.seed, "")->capture_default_str();
  cgg->add_option("--out", gg.out, "output directory")->capture_default_str();

  FitArgs fa;
  auto* cf = app.add_subcommand("fit", "fit an implicit network model to a dataset");
  cf->add_option("--data", fa.data, "training dataset CSV")->required();
  cf->add_option("--graph", fa.graph, "graph JSON")->required();
  cf->add_option("--set", fa.set, "model set: u | m | ml1 | c")->capture_default_str();
  cf->add_option("--deg-e", fa.deg_e, "polynomial degree of e")->capture_default_str();
  cf->add_option("--deg-f", fa.deg_f, "polynomial degree of f")->capture_default_str();
  cf->add_flag("--bias", fa.bias, "include constant terms");
  cf->add_option("--alpha", fa.alpha, "contraction rate")->capture_default_str();
  cf->add_option("--objective", fa.objective, "lree | iee")->capture_default_str();
  cf->add_option("--mode", fa.mode, "centralized | admm_serial | admm_parallel")
      ->capture_default_str();
  cf->add_option("--rho", fa.rho, "consensus penalty")->capture_default_str();
  cf->add_option("--eps-abs", fa.eps_abs, "")->capture_default_str();
  cf->add_option("--eps-rel", fa.eps_rel, "")->capture_default_str();
  cf->add_option("--max-iters", fa.max_iters, "")->capture_default_str();
  cf->add_option("--grid-points", fa.grid_points, "extra grid samples per dimension")
      ->capture_default_str();
  cf->add_option("--grid-inflate", fa.grid_inflate, "grid box inflation fraction")
      ->capture_default_str();
  cf->add_option("--margin", fa.margin, "contraction constraint margin")->capture_default_str();
  cf->add_option("--checkpoint-every", fa.checkpoint_every, "iterations between checkpoints")
      ->capture_default_str();
  cf->add_option("--seed", fa.seed, "stamped into outputs")->capture_default_str();
  cf->add_option("--out", fa.out, "output directory")->capture_default_str();

  SimulateArgs sa;
  auto* cs = app.add_subcommand("simulate", "free-run a fitted model over recorded inputs");
  cs->add_option("--params", sa.params, "params JSON")->required();
  cs->add_option("--data", sa.data, "dataset CSV giving x0 and inputs")->required();
  cs->add_option("--out", sa.out, "trajectory CSV")->capture_default_str();

  EvalArgs ea;
  auto* ce = app.add_subcommand("eval", "score a fitted model and run behavioral audits");
  ce->add_option("--params", ea.params, "params JSON")->required();
  ce->add_option("--data", ea.data, "validation dataset CSV")->required();
  ce->add_option("--oracle", ea.oracle, "reference params JSON for equation error");
  ce->add_option("--results", ea.results, "results CSV to append to")->capture_default_str();
  ce->add_option("--model-id", ea.model_id, "")->capture_default_str();
  ce->add_option("--set-id", ea.set_id, "")->capture_default_str();
  ce->add_option("--n-mc", ea.n_mc, "equation-error sample count")->capture_default_str();
  ce->add_option("--audit-pairs", ea.audit_pairs, "")->capture_default_str();
  ce->add_option("--horizon", ea.horizon, "")->capture_default_str();
  ce->add_option("--box-lo", ea.box_lo, "audit region lower bound")->capture_default_str();
  ce->add_option("--box-hi", ea.box_hi, "audit region upper bound")->capture_default_str();
  ce->add_option("--seed", ea.seed, "")->capture_default_str();

  BenchArgs ba;
  auto* cb = app.add_subcommand("bench-scaling", "solve-time scaling sweep over chain networks");
  cb->add_option("--sizes", ba.sizes, "network sizes")->capture_default_str();
  cb->add_option("--T", ba.T, "samples per dataset")->capture_default_str();
  cb->add_option("--band", ba.band, "bandwidth of A")->capture_default_str();
  cb->add_option("--radius", ba.radius, "spectral radius")->capture_default_str();
  cb->add_option("--admm-iters", ba.admm_iters, "iterations to time")->capture_default_str();
  cb->add_option("--seed", ba.seed, "")->capture_default_str();
  cb->add_option("--out", ba.out, "bench CSV")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cgl->parsed()) return run_gen_linear(gl);
    if (cgt->parsed()) return run_gen_traffic(gt);
    if (cgg->parsed()) return run_gen_graph(gg);
    if (cf->parsed()) return run_fit(fa);
    if (cs->parsed()) return run_simulate(sa);
    if (ce->parsed()) return run_eval(ea);
    if (cb->parsed()) return run_bench(ba);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
