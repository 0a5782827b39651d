#pragma once

#include <string>
#include <utility>
#include <vector>

#include "netid/model.hpp"
#include "netid/rng.hpp"

namespace netid {

// --- stable positive linear systems ----------------------------------------

// Banded nonnegative matrix with uniform entries for |i - j| <= (band - 1) / 2,
// rescaled so the spectral radius equals the requested value.
Mat gen_positive_linear(int n, int band, double spectral_radius, Rng& rng);

double power_iteration_radius(const Mat& A, double tol = 1e-12, int max_iters = 100000);

struct LinearSystem {
  Mat A;
  Vec b_diag;  // one input per state: x+ = A x + diag(b) u
};

LinearSystem gen_linear_system(int n, int band, double spectral_radius, Rng& rng);

// One-dimensional node per state; edges follow the sparsity of A plus
// self-loops so each node's own input can act on it.
NetworkGraph linear_graph(const LinearSystem& sys);

// x0 = 0, u ~ |N(0,1)|; measurement noise per channel at the given SNR.
// Pass an infinite snr_db for exact states.
Dataset simulate_linear_noisy(const LinearSystem& sys, int T, double snr_db, Rng& rng);

// --- random feasible models and their data ----------------------------------

// Coefficients drawn i.i.d. N(0, scale^2), then per node the downstream view
// is projected onto the model-set polytope built over a [lo, hi] grid.
Vec sample_feasible_params(const Model& m, Rng& rng, double scale = 0.5, double lo = -0.25,
                           double hi = 1.25, int points_per_dim = 5);

struct GeneratedData {
  Dataset data;   // measured states (noisy when snr_db is finite) and exact inputs
  Mat x_clean;    // noiseless states
  bool ok = true; // false when the implicit step failed or the state diverged
};

// Chained rollout under i.i.d. uniform [0,1] inputs from a uniform [0,1]
// initial state, plus per-channel measurement noise at the given SNR.
GeneratedData gen_model_dataset(const Model& m, const Vec& theta, int T, double snr_db, Rng& rng);

// --- traffic networks --------------------------------------------------------

struct TrafficNet {
  int roads = 0;               // interior road nodes, ids [0, roads)
  std::vector<int> in_nodes;   // entry nodes, one input channel each
  std::vector<int> out_nodes;  // exit nodes, free outflow
  Mat R;                       // R(i, j): share of node j's outflow turning onto node i
  Vec capacity;                // supply is max(2 capacity - density, 0)
  Mat points;                  // road coordinates in the unit square, one row per road

  int size() const { return static_cast<int>(R.rows()); }
  bool is_exit(int i) const;
  bool is_entry(int i) const;
};

// Delaunay triangulation of `roads` random points gives the road adjacency
// (flow in both directions); entries and exits attach to distinct random
// roads; turning ratios are flat Dirichlet over each node's downstream set.
TrafficNet gen_traffic_graph(int roads, int entries, Rng& rng);

// Undirected Delaunay edges of a point set, pairs (i, j) with i < j.
std::vector<std::pair<int, int>> delaunay_edges(const Mat& points);

// demand min(10, rho) and supply max(2 C - rho, 0)
double traffic_demand(double rho);
double traffic_supply(double rho, double capacity);

// flows(i, j): rate from node j onto node i given current densities
Mat traffic_flows(const TrafficNet& net, const Vec& rho);
// d rho / dt, including entry inflows u (one per entry, in in_nodes order) and
// exit drains
Vec traffic_derivative(const TrafficNet& net, const Vec& rho, const Vec& u);

struct InputSignal {
  double hold = 5.0;  // seconds between level changes
  Mat levels;         // one row per hold interval, one column per channel

  int channels() const { return static_cast<int>(levels.cols()); }
  double duration() const { return hold * static_cast<double>(levels.rows()); }
  double value(double t, int channel) const;
};

// Piecewise-constant nonnegative signal: N(mu, sigma) draws clipped at zero.
InputSignal gen_input(double t_seconds, double mu, double sigma, int channels, Rng& rng);

struct TrafficSim {
  Dataset data;  // states: all node densities; inputs: one column per entry
  bool ok = true;
  std::string message;
};

// RK4 from rho(0) = 0 with the input held constant within integrator steps;
// samples every dt_sample seconds starting at t = 0, 2 t_f rows in total for
// the defaults.
TrafficSim simulate_traffic(const TrafficNet& net, const InputSignal& inputs, double t_f,
                            double dt_int = 0.01, double dt_sample = 0.5);

// Identification graph over the traffic nodes: an edge in each direction per
// flow link, self-loops everywhere, one input dimension at each entry.
NetworkGraph traffic_ident_graph(const TrafficNet& net);

void save_traffic_json(const TrafficNet& net, const std::string& path,
                       const std::string& config_hash = "", std::uint64_t seed = 0);
TrafficNet load_traffic_json(const std::string& path);

// --- random regular graphs ---------------------------------------------------

// Simple connected regular graph by the configuration model with rejection;
// node dimensions are one state and one input.  Directed edges both ways per
// undirected edge, plus self-loops.
NetworkGraph gen_regular_graph(int n, int degree, Rng& rng);

}  // namespace netid
