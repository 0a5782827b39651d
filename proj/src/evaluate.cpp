#include "netid/evaluate.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace netid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec uniform_vec(Rng& rng, int n, double lo, double hi) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
  return v;
}

}  // namespace

NeeResult nee(const Model& model, const Vec& theta, const Model& oracle,
              const Vec& oracle_theta, int n_mc, std::uint64_t seed) {
  const auto& g = model.graph();
  const auto& go = oracle.graph();
  if (g.total_state_dim() != go.total_state_dim() ||
      g.total_input_dim() != go.total_input_dim())
    throw std::invalid_argument("nee: models act on different spaces");
  if (n_mc < 1) throw std::invalid_argument("nee: need at least one sample");

  Rng rng(seed);
  const int n = g.total_state_dim();
  const int m = g.total_input_dim();
  double err = 0.0, ref = 0.0;
  for (int s = 0; s < n_mc; ++s) {
    const Vec x = uniform_vec(rng, n, 0.0, 1.0);
    const Vec u = uniform_vec(rng, m, 0.0, 1.0);
    const StepResult a = solve_step(model, theta, x, u, u);
    const StepResult b = solve_step(oracle, oracle_theta, x, u, u);
    if (!a.ok() || !b.ok())
      throw std::runtime_error("nee: a step solve failed; model is not well-posed on the box");
    err += (a.x_next - b.x_next).squaredNorm();
    ref += b.x_next.squaredNorm();
  }
  NeeResult out;
  if (ref == 0.0) {
    out.oracle_norm_zero = true;
    out.value = err > 0.0 ? kInf : 0.0;
    return out;
  }
  out.value = err / ref;
  return out;
}

NseResult nse(const Model& model, const Vec& theta, const Dataset& ds) {
  const int T = ds.length();
  if (T < 2) throw std::invalid_argument("nse: dataset needs at least two rows");
  NseResult out;
  const SimResult sim = simulate(model, theta, ds.x.row(0).transpose(), ds.u);
  if (sim.diverged) {
    out.unstable = true;
    out.value = kInf;
    return out;
  }
  out.negative_states = (sim.x.array() < -1e-9).any();
  double err = 0.0, ref = 0.0;
  for (int t = 1; t < T; ++t) {
    err += (sim.x.row(t) - ds.x.row(t)).squaredNorm();
    ref += ds.x.row(t).squaredNorm();
  }
  out.value = ref > 0.0 ? err / ref : (err > 0.0 ? kInf : 0.0);
  return out;
}

AuditResult audit_monotone(const Model& model, const Vec& theta, int n_pairs,
                           std::uint64_t seed, double lo, double hi, int horizon) {
  const auto& g = model.graph();
  const int n = g.total_state_dim();
  const int m = g.total_input_dim();
  Rng rng(seed);
  AuditResult out;
  for (int p = 0; p < n_pairs; ++p) {
    Vec xb = uniform_vec(rng, n, lo, hi);
    Vec xa = xb;
    for (int i = 0; i < n; ++i) xa[i] += rng.uniform() * (hi - xa[i]);
    // the pair shares one input sequence: equal inputs satisfy the ordered
    // premise while the sign of de/du stays out of the certified set
    Mat u(horizon + 1, m);
    for (int t = 0; t <= horizon; ++t)
      for (int c = 0; c < m; ++c) u(t, c) = rng.uniform(lo, hi);
    const SimResult sa = simulate(model, theta, xa, u);
    const SimResult sb = simulate(model, theta, xb, u);
    if (sa.diverged || sb.diverged) {
      ++out.diverged;
      continue;
    }
    if (((sa.x - sb.x).array() < -1e-9).any()) ++out.violations;
  }
  return out;
}

AuditResult audit_positive(const Model& model, const Vec& theta, int n_trials,
                           std::uint64_t seed, double hi, int horizon) {
  const auto& g = model.graph();
  Rng rng(seed);
  AuditResult out;
  for (int p = 0; p < n_trials; ++p) {
    const Vec x0 = uniform_vec(rng, g.total_state_dim(), 0.0, hi);
    Mat u(horizon + 1, g.total_input_dim());
    for (int t = 0; t <= horizon; ++t)
      for (int c = 0; c < u.cols(); ++c) u(t, c) = rng.uniform(0.0, hi);
    const SimResult sim = simulate(model, theta, x0, u);
    if (sim.diverged) {
      ++out.diverged;
      continue;
    }
    if ((sim.x.array() < -1e-9).any()) ++out.violations;
  }
  return out;
}

double audit_contraction(const Model& model, const Vec& theta, int n_pairs, int horizon,
                         std::uint64_t seed, double lo, double hi, int t_min) {
  const auto& g = model.graph();
  const int n = g.total_state_dim();
  Rng rng(seed);
  double worst = 0.0;
  for (int p = 0; p < n_pairs; ++p) {
    const Vec xa = uniform_vec(rng, n, lo, hi);
    const Vec xb = uniform_vec(rng, n, lo, hi);
    Mat u(horizon + 1, g.total_input_dim());
    for (int t = 0; t <= horizon; ++t)
      for (int c = 0; c < u.cols(); ++c) u(t, c) = rng.uniform(lo, hi);
    const SimResult sa = simulate(model, theta, xa, u);
    const SimResult sb = simulate(model, theta, xb, u);
    if (sa.diverged || sb.diverged) return kInf;
    const double d0 = (xa - xb).lpNorm<1>();
    if (d0 < 1e-12) continue;
    for (int t = t_min; t <= horizon; ++t) {
      const double dt = (sa.x.row(t) - sb.x.row(t)).lpNorm<1>();
      // separations this far below d0 sit at the step solver's residual
      // floor and carry no rate information
      if (dt <= 1e-8 * d0) continue;
      worst = std::max(worst, std::pow(dt / d0, 1.0 / static_cast<double>(t)));
    }
  }
  return worst;
}

void append_eval_csv(const std::string& path, const std::string& model_id,
                     const std::string& set_id, const EvalReport& report) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::invalid_argument("cannot append to results file: " + path);
  if (fresh) out << "model_id,set_id,nse,unstable,negative,nee\n";
  char line[256];
  std::snprintf(line, sizeof line, ",%.9e,%d,%d,%.9e\n", report.nse, report.unstable ? 1 : 0,
                report.negative_states ? 1 : 0, report.nee);
  out << model_id << "," << set_id << line;
}

double fit_loglog_slope(const std::vector<double>& sizes, const std::vector<double>& times) {
  if (sizes.size() != times.size() || sizes.size() < 2)
    throw std::invalid_argument("slope fit needs at least two matched points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const auto n = static_cast<double>(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(sizes[i] > 0.0) || !(times[i] > 0.0))
      throw std::invalid_argument("slope fit needs positive data");
    const double x = std::log(sizes[i]);
    const double y = std::log(times[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-12) throw std::invalid_argument("slope fit: sizes are all equal");
  return (n * sxy - sx * sy) / denom;
}

}  // namespace netid
