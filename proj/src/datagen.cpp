#include "netid/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "netid/qp.hpp"
#include "netid/constraints.hpp"
#include "netid/optimize.hpp"

namespace netid {

Mat gen_positive_linear(int n, int band, double spectral_radius, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_positive_linear: n must be >= 1");
  if (band < 1 || band % 2 == 0)
    throw std::invalid_argument("gen_positive_linear: band must be odd and positive");
  if (!(spectral_radius > 0.0))
    throw std::invalid_argument("gen_positive_linear: spectral radius must be positive");
  const int half = (band - 1) / 2;
  for (int attempt = 0; attempt < 100; ++attempt) {
    Mat A = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = std::max(0, i - half); j <= std::min(n - 1, i + half); ++j)
        A(i, j) = rng.uniform();
    const double r = power_iteration_radius(A);
    if (r < 1e-12) continue;  // all-but-impossible zero draw
    return A * (spectral_radius / r);
  }
  throw std::runtime_error("gen_positive_linear: could not draw a nonzero matrix");
}

double power_iteration_radius(const Mat& A, double tol, int max_iters) {
  if (A.rows() != A.cols() || A.rows() == 0)
    throw std::invalid_argument("power iteration: matrix must be square and non-empty");
  const int n = static_cast<int>(A.rows());
  Vec v = Vec::Ones(n) / std::sqrt(static_cast<double>(n));
  double lambda = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    Vec w = A * v;
    const double norm = w.norm();
    if (norm < 1e-300) return 0.0;
    const double next = norm;
    w /= norm;
    if (std::abs(next - lambda) <= tol * std::max(1.0, next) && it > 2) return next;
    lambda = next;
    v = w;
  }
  return lambda;
}

LinearSystem gen_linear_system(int n, int band, double spectral_radius, Rng& rng) {
  LinearSystem sys;
  sys.A = gen_positive_linear(n, band, spectral_radius, rng);
  sys.b_diag = Vec::Zero(n);
  for (int i = 0; i < n; ++i) sys.b_diag[i] = rng.uniform();
  return sys;
}

NetworkGraph linear_graph(const LinearSystem& sys) {
  const int n = static_cast<int>(sys.A.rows());
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    edges.emplace_back(i, i);
    for (int j = 0; j < n; ++j)
      if (sys.A(i, j) != 0.0 && i != j) edges.emplace_back(j, i);
  }
  return make_graph(n, std::vector<int>(n, 1), std::vector<int>(n, 1), std::move(edges));
}

namespace {

void add_measurement_noise(Mat& x, const Mat& clean, double snr_db, Rng& rng) {
  if (std::isinf(snr_db)) return;
  const double ratio = std::pow(10.0, snr_db / 10.0);
  for (int c = 0; c < clean.cols(); ++c) {
    const double power = clean.col(c).squaredNorm() / static_cast<double>(clean.rows());
    const double sigma = std::sqrt(power / ratio);
    if (sigma == 0.0) continue;
    for (int t = 0; t < clean.rows(); ++t) x(t, c) += rng.normal(0.0, sigma);
  }
}

}  // namespace

Dataset simulate_linear_noisy(const LinearSystem& sys, int T, double snr_db, Rng& rng) {
  if (T < 2) throw std::invalid_argument("simulate_linear_noisy: need T >= 2");
  const int n = static_cast<int>(sys.A.rows());
  Mat u(T, n);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < n; ++c) u(t, c) = std::abs(rng.normal());
  Mat x = Mat::Zero(T, n);
  for (int t = 0; t + 1 < T; ++t)
    x.row(t + 1) = (sys.A * x.row(t).transpose() +
                    sys.b_diag.cwiseProduct(u.row(t).transpose()))
                       .transpose();
  Dataset ds;
  ds.u = u;
  ds.x = x;
  add_measurement_noise(ds.x, x, snr_db, rng);
  return ds;
}

Vec sample_feasible_params(const Model& m, Rng& rng, double scale, double lo, double hi,
                           int points_per_dim) {
  ConstraintSystem cs = build_constraints(m, box_samples(m, lo, hi, points_per_dim));
  const Vec interior = strict_interior_params(m);
  Vec theta(m.num_params());
  for (int i = 0; i < theta.size(); ++i) theta[i] = rng.normal(0.0, scale);
  for (const auto& nc : cs.node) {
    Vec view(nc.vars.size());
    Vec start(nc.vars.size());
    for (std::size_t c = 0; c < nc.vars.size(); ++c) {
      view[c] = theta[nc.vars[c]];
      start[c] = interior[nc.vars[c]];
    }
    // seeding with a strictly interior point keeps the projection on the
    // active-set path, which copes with the heavily correlated sample rows
    PolytopeProjector proj(nc.G, nc.h, nc.A, nc.b);
    QpResult r = proj.project(view, start);
    if (!r.converged)
      throw std::runtime_error("sample_feasible_params: projection did not converge");
    for (std::size_t c = 0; c < nc.vars.size(); ++c) theta[nc.vars[c]] = r.x[c];
  }
  return theta;
}

GeneratedData gen_model_dataset(const Model& m, const Vec& theta, int T, double snr_db,
                                Rng& rng) {
  if (T < 2) throw std::invalid_argument("gen_model_dataset: need T >= 2");
  const auto& g = m.graph();
  const int n = g.total_state_dim();
  const int mm = g.total_input_dim();
  GeneratedData out;
  Mat u(T, mm);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < mm; ++c) u(t, c) = rng.uniform();
  Mat x = Mat::Zero(T, n);
  for (int c = 0; c < n; ++c) x(0, c) = rng.uniform();
  for (int t = 0; t + 1 < T; ++t) {
    StepResult s = solve_step(m, theta, x.row(t).transpose(), u.row(t).transpose(),
                              u.row(t + 1).transpose());
    if (!s.ok() || s.x_next.lpNorm<Eigen::Infinity>() > 1e6) {
      out.ok = false;
      break;
    }
    x.row(t + 1) = s.x_next.transpose();
  }
  out.x_clean = x;
  out.data.u = u;
  out.data.x = x;
  if (out.ok) add_measurement_noise(out.data.x, x, snr_db, rng);
  return out;
}

// --- traffic ------------------------------------------------------------------

bool TrafficNet::is_exit(int i) const {
  return std::find(out_nodes.begin(), out_nodes.end(), i) != out_nodes.end();
}

bool TrafficNet::is_entry(int i) const {
  return std::find(in_nodes.begin(), in_nodes.end(), i) != in_nodes.end();
}

double traffic_demand(double rho) { return std::min(10.0, rho); }

double traffic_supply(double rho, double capacity) { return std::max(2.0 * capacity - rho, 0.0); }

namespace {

struct Triangle {
  int a, b, c;
};

double orient2d(const Mat& p, int a, int b, int c) {
  return (p(b, 0) - p(a, 0)) * (p(c, 1) - p(a, 1)) - (p(b, 1) - p(a, 1)) * (p(c, 0) - p(a, 0));
}

// positive when q is strictly inside the circumcircle of ccw triangle (a,b,c);
// degenerate flags near-zero determinants relative to the entry magnitudes
double incircle(const Mat& p, int a, int b, int c, int q, bool& degenerate) {
  const double ax = p(a, 0) - p(q, 0), ay = p(a, 1) - p(q, 1);
  const double bx = p(b, 0) - p(q, 0), by = p(b, 1) - p(q, 1);
  const double cx = p(c, 0) - p(q, 0), cy = p(c, 1) - p(q, 1);
  const double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
  const double det = ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx);
  const double mag = std::abs(ax * (by * c2)) + std::abs(ay * (bx * c2)) + std::abs(a2 * (bx * cy)) +
                     std::abs(ax * (b2 * cy)) + std::abs(ay * (b2 * cx)) + std::abs(a2 * (by * cx));
  if (std::abs(det) <= 1e-12 * std::max(1.0, mag)) degenerate = true;
  return det;
}

bool try_delaunay(const Mat& points, std::vector<std::pair<int, int>>& edges) {
  const int P = static_cast<int>(points.rows());
  Mat p(P + 3, 2);
  p.topRows(P) = points;
  p.row(P) << -100.0, -100.0;
  p.row(P + 1) << 100.0, -100.0;
  p.row(P + 2) << 0.0, 100.0;

  std::vector<Triangle> tris{{P, P + 1, P + 2}};
  for (int q = 0; q < P; ++q) {
    std::vector<Triangle> keep, bad;
    bool degenerate = false;
    for (const auto& t : tris) {
      if (incircle(p, t.a, t.b, t.c, q, degenerate) > 0.0)
        bad.push_back(t);
      else
        keep.push_back(t);
    }
    if (degenerate || bad.empty()) return false;
    std::map<std::pair<int, int>, std::pair<int, int>> boundary;  // undirected -> directed
    auto toggle = [&](int u, int v) {
      const auto key = std::minmax(u, v);
      auto it = boundary.find(key);
      if (it == boundary.end())
        boundary.emplace(key, std::make_pair(u, v));
      else
        boundary.erase(it);
    };
    for (const auto& t : bad) {
      toggle(t.a, t.b);
      toggle(t.b, t.c);
      toggle(t.c, t.a);
    }
    for (const auto& [key, e] : boundary) {
      (void)key;
      int u = e.first, v = e.second;
      const double o = orient2d(p, u, v, q);
      if (std::abs(o) <= 1e-14) return false;
      if (o < 0.0) std::swap(u, v);
      keep.push_back({u, v, q});
    }
    tris = std::move(keep);
  }

  std::set<std::pair<int, int>> found;
  for (const auto& t : tris) {
    if (t.a >= P || t.b >= P || t.c >= P) continue;
    found.insert(std::minmax(t.a, t.b));
    found.insert(std::minmax(t.b, t.c));
    found.insert(std::minmax(t.c, t.a));
  }
  edges.assign(found.begin(), found.end());

  std::vector<char> touched(P, 0);
  for (const auto& e : edges) touched[e.first] = touched[e.second] = 1;
  for (int i = 0; i < P; ++i)
    if (!touched[i]) return false;
  return true;
}

}  // namespace

std::vector<std::pair<int, int>> delaunay_edges(const Mat& points) {
  if (points.rows() < 3 || points.cols() != 2)
    throw std::invalid_argument("delaunay: need at least 3 planar points");
  std::vector<std::pair<int, int>> edges;
  if (!try_delaunay(points, edges))
    throw std::runtime_error("delaunay: degenerate point set");
  return edges;
}

TrafficNet gen_traffic_graph(int roads, int entries, Rng& rng) {
  if (roads < 3) throw std::invalid_argument("traffic: need at least 3 roads");
  if (entries < 1) throw std::invalid_argument("traffic: need at least 1 entry");
  if (2 * entries > roads)
    throw std::invalid_argument("traffic: entries and exits need 2M distinct roads");

  Mat points(roads, 2);
  std::vector<std::pair<int, int>> roadEdges;
  bool built = false;
  for (int attempt = 0; attempt < 100 && !built; ++attempt) {
    for (int i = 0; i < roads; ++i) {
      points(i, 0) = rng.uniform();
      points(i, 1) = rng.uniform();
    }
    built = try_delaunay(points, roadEdges);
  }
  if (!built) throw std::runtime_error("traffic: triangulation kept degenerating");

  const int N = roads + 2 * entries;
  TrafficNet net;
  net.roads = roads;
  net.points = points;
  net.capacity = Vec::Ones(N);
  net.R = Mat::Zero(N, N);

  std::vector<int> picks(roads);
  for (int i = 0; i < roads; ++i) picks[i] = i;
  rng.shuffle(picks);
  std::vector<int> exit_of(roads, -1);
  for (int k = 0; k < entries; ++k) {
    net.in_nodes.push_back(roads + k);
    net.out_nodes.push_back(roads + entries + k);
    exit_of[picks[entries + k]] = roads + entries + k;
  }

  std::vector<std::vector<int>> down(N);
  for (const auto& e : roadEdges) {
    down[e.first].push_back(e.second);
    down[e.second].push_back(e.first);
  }
  for (int k = 0; k < entries; ++k) down[roads + k].push_back(picks[k]);
  for (int r = 0; r < roads; ++r)
    if (exit_of[r] >= 0) down[r].push_back(exit_of[r]);

  for (int j = 0; j < N; ++j) {
    if (down[j].empty()) continue;
    std::sort(down[j].begin(), down[j].end());
    const auto w = rng.dirichlet(static_cast<int>(down[j].size()));
    for (std::size_t k = 0; k < down[j].size(); ++k) net.R(down[j][k], j) = w[k];
  }
  return net;
}

Mat traffic_flows(const TrafficNet& net, const Vec& rho) {
  const int N = net.size();
  if (rho.size() != N) throw std::invalid_argument("traffic: density size mismatch");
  Vec d(N);
  for (int i = 0; i < N; ++i) d[i] = traffic_demand(rho[i]);
  const Vec demand_in = net.R * d;
  Vec clamp(N);
  for (int i = 0; i < N; ++i) {
    const double s = traffic_supply(rho[i], net.capacity[i]);
    clamp[i] = demand_in[i] > 0.0 ? std::min(1.0, s / demand_in[i]) : 1.0;
  }
  return clamp.asDiagonal() * net.R * d.asDiagonal();
}

Vec traffic_derivative(const TrafficNet& net, const Vec& rho, const Vec& u) {
  if (u.size() != static_cast<int>(net.in_nodes.size()))
    throw std::invalid_argument("traffic: one input per entry required");
  const Mat flows = traffic_flows(net, rho);
  Vec der = flows.rowwise().sum() - flows.colwise().sum().transpose();
  for (int o : net.out_nodes) der[o] -= traffic_demand(rho[o]);
  for (std::size_t k = 0; k < net.in_nodes.size(); ++k) der[net.in_nodes[k]] += u[k];
  return der;
}

double InputSignal::value(double t, int channel) const {
  if (levels.rows() == 0) throw std::logic_error("input signal has no levels");
  auto idx = static_cast<std::int64_t>(std::floor(t / hold));
  idx = std::clamp<std::int64_t>(idx, 0, levels.rows() - 1);
  return levels(static_cast<int>(idx), channel);
}

InputSignal gen_input(double t_seconds, double mu, double sigma, int channels, Rng& rng) {
  if (!(t_seconds > 0.0)) throw std::invalid_argument("gen_input: duration must be positive");
  if (sigma < 0.0) throw std::invalid_argument("gen_input: sigma must be nonnegative");
  if (channels < 1) throw std::invalid_argument("gen_input: need at least one channel");
  InputSignal sig;
  const auto holds = static_cast<int>(std::ceil(t_seconds / sig.hold - 1e-12));
  sig.levels.resize(std::max(1, holds), channels);
  for (int r = 0; r < sig.levels.rows(); ++r)
    for (int c = 0; c < channels; ++c) sig.levels(r, c) = std::max(0.0, rng.normal(mu, sigma));
  return sig;
}

TrafficSim simulate_traffic(const TrafficNet& net, const InputSignal& inputs, double t_f,
                            double dt_int, double dt_sample) {
  TrafficSim sim;
  const int N = net.size();
  const int M = static_cast<int>(net.in_nodes.size());
  if (inputs.channels() != M) {
    sim.ok = false;
    sim.message = "input channel count does not match the entries";
    return sim;
  }
  const auto steps_per_sample = static_cast<long long>(std::llround(dt_sample / dt_int));
  if (steps_per_sample < 1 || std::abs(steps_per_sample * dt_int - dt_sample) > 1e-9) {
    sim.ok = false;
    sim.message = "dt_sample must be an integer multiple of dt_int";
    return sim;
  }
  const auto T = static_cast<int>(std::llround(t_f / dt_sample));
  if (T < 2) {
    sim.ok = false;
    sim.message = "horizon too short for two samples";
    return sim;
  }

  sim.data.x.resize(T, N);
  sim.data.u.resize(T, M);
  Vec rho = Vec::Zero(N);
  Vec u(M), k1, k2, k3, k4;
  long long step = 0;
  for (int r = 0; r < T; ++r) {
    const double t_row = static_cast<double>(r) * dt_sample;
    sim.data.x.row(r) = rho.transpose();
    for (int c = 0; c < M; ++c) sim.data.u(r, c) = inputs.value(t_row, c);
    if (r + 1 == T) break;
    for (long long s = 0; s < steps_per_sample; ++s, ++step) {
      const double t_abs = static_cast<double>(step) * dt_int;
      for (int c = 0; c < M; ++c) u[c] = inputs.value(t_abs, c);
      k1 = traffic_derivative(net, rho, u);
      k2 = traffic_derivative(net, rho + 0.5 * dt_int * k1, u);
      k3 = traffic_derivative(net, rho + 0.5 * dt_int * k2, u);
      k4 = traffic_derivative(net, rho + dt_int * k3, u);
      rho += (dt_int / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!rho.allFinite()) {
        sim.ok = false;
        sim.message = "density became non-finite; reduce dt_int";
        return sim;
      }
      for (int i = 0; i < N; ++i) {
        if (rho[i] < 0.0) {
          if (rho[i] < -1e-9) {
            sim.ok = false;
            sim.message = "density went negative at node " + std::to_string(i + 1) +
                          "; reduce dt_int";
            return sim;
          }
          rho[i] = 0.0;
        }
      }
    }
  }
  return sim;
}

NetworkGraph traffic_ident_graph(const TrafficNet& net) {
  const int N = net.size();
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < N; ++i) edges.emplace_back(i, i);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      if (net.R(i, j) > 0.0) {
        edges.emplace_back(j, i);
        edges.emplace_back(i, j);
      }
  std::vector<int> input_dims(N, 0);
  for (int e : net.in_nodes) input_dims[e] = 1;
  return make_graph(N, std::vector<int>(N, 1), std::move(input_dims), std::move(edges));
}

void save_traffic_json(const TrafficNet& net, const std::string& path,
                       const std::string& config_hash, std::uint64_t seed) {
  nlohmann::json j;
  if (!config_hash.empty()) {
    j["config_hash"] = config_hash;
    j["seed"] = seed;
  }
  j["roads"] = net.roads;
  for (int e : net.in_nodes) j["in"].push_back(e + 1);
  for (int o : net.out_nodes) j["out"].push_back(o + 1);
  for (int i = 0; i < net.capacity.size(); ++i) j["capacity"].push_back(net.capacity[i]);
  for (int r = 0; r < net.R.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < net.R.cols(); ++c) row.push_back(net.R(r, c));
    j["R"].push_back(row);
  }
  for (int r = 0; r < net.points.rows(); ++r)
    j["points"].push_back({net.points(r, 0), net.points(r, 1)});
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write traffic file: " + path);
  out << j.dump(2) << "\n";
}

TrafficNet load_traffic_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read traffic file: " + path);
  nlohmann::json j;
  in >> j;
  TrafficNet net;
  net.roads = j.at("roads").get<int>();
  for (const auto& e : j.at("in")) net.in_nodes.push_back(e.get<int>() - 1);
  for (const auto& o : j.at("out")) net.out_nodes.push_back(o.get<int>() - 1);
  const auto& R = j.at("R");
  const int N = static_cast<int>(R.size());
  net.R.resize(N, N);
  for (int r = 0; r < N; ++r) {
    if (static_cast<int>(R[r].size()) != N)
      throw std::invalid_argument("traffic file: ragged turning-ratio matrix");
    for (int c = 0; c < N; ++c) net.R(r, c) = R[r][c].get<double>();
  }
  net.capacity.resize(N);
  const auto& cap = j.at("capacity");
  if (static_cast<int>(cap.size()) != N)
    throw std::invalid_argument("traffic file: capacity length mismatch");
  for (int i = 0; i < N; ++i) net.capacity[i] = cap[i].get<double>();
  if (j.contains("points")) {
    const auto& pts = j["points"];
    net.points.resize(static_cast<int>(pts.size()), 2);
    for (int r = 0; r < net.points.rows(); ++r) {
      net.points(r, 0) = pts[r][0].get<double>();
      net.points(r, 1) = pts[r][1].get<double>();
    }
  }
  return net;
}

NetworkGraph gen_regular_graph(int n, int degree, Rng& rng) {
  if (n <= degree || degree < 1) throw std::invalid_argument("regular graph: need n > degree >= 1");
  if ((n * degree) % 2 != 0)
    throw std::invalid_argument("regular graph: n * degree must be even");

  for (int attempt = 0; attempt < 2000; ++attempt) {
    std::vector<int> stubs;
    stubs.reserve(static_cast<std::size_t>(n) * degree);
    for (int i = 0; i < n; ++i)
      for (int d = 0; d < degree; ++d) stubs.push_back(i);
    rng.shuffle(stubs);

    std::set<std::pair<int, int>> pairs;
    bool simple = true;
    for (std::size_t k = 0; k + 1 < stubs.size() && simple; k += 2) {
      const int a = stubs[k], b = stubs[k + 1];
      if (a == b || !pairs.insert(std::minmax(a, b)).second) simple = false;
    }
    if (!simple) continue;

    std::vector<std::vector<int>> adj(n);
    for (const auto& e : pairs) {
      adj[e.first].push_back(e.second);
      adj[e.second].push_back(e.first);
    }
    std::vector<char> seen(n, 0);
    std::queue<int> bfs;
    bfs.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!bfs.empty()) {
      const int v = bfs.front();
      bfs.pop();
      for (int w : adj[v])
        if (!seen[w]) {
          seen[w] = 1;
          ++reached;
          bfs.push(w);
        }
    }
    if (reached != n) continue;

    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(i, i);
    for (const auto& e : pairs) {
      edges.emplace_back(e.first, e.second);
      edges.emplace_back(e.second, e.first);
    }
    return make_graph(n, std::vector<int>(n, 1), std::vector<int>(n, 1), std::move(edges));
  }
  throw std::runtime_error("regular graph: retry cap exceeded");
}

}  // namespace netid
