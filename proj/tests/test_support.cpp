#include "test_support.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <queue>
#include <set>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace netid::testing {

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  Vec p = x;
  for (int i = 0; i < x.size(); ++i) {
    p[i] = x[i] + h;
    const double up = f(p);
    p[i] = x[i] - h;
    const double down = f(p);
    p[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h) {
  Vec p = x;
  const Vec f0 = f(x);
  Mat J(f0.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    p[i] = x[i] + h;
    const Vec up = f(p);
    p[i] = x[i] - h;
    const Vec down = f(p);
    p[i] = x[i];
    J.col(i) = (up - down) / (2.0 * h);
  }
  return J;
}

double bisect_root(const std::function<double(double)>& f, double lo, double hi, double tol) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) throw std::invalid_argument("bisect_root: no sign change");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

Vec slow_basis_eval(const MonomialBasis& b, const Vec& args) {
  Vec out(b.size());
  for (int t = 0; t < b.size(); ++t) {
    double v = 1.0;
    for (int j = 0; j < b.num_vars(); ++j) v *= std::pow(args[j], b.exponent(t, j));
    out[t] = v;
  }
  return out;
}

Vec slow_eval_e(const Model& m, const Vec& theta, int i, const Vec& x_i, const Vec& u_i) {
  const MonomialBasis& basis = m.e_basis(i);
  const BlockRef& blk = m.layout().e_block[i];
  Vec out(blk.rows);
  Vec args(1 + u_i.size());
  for (int k = 0; k < blk.rows; ++k) {
    args[0] = x_i[k];
    args.tail(u_i.size()) = u_i;
    const Vec phi = slow_basis_eval(basis, args);
    double v = 0.0;
    for (int t = 0; t < basis.size(); ++t) v += theta[blk.row_begin(k) + t] * phi[t];
    out[k] = v;
  }
  return out;
}

Vec slow_eval_f(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j) {
  const int e = m.edge_index(j, i);
  if (e < 0) throw std::invalid_argument("slow_eval_f: no such edge");
  const BlockRef& blk = m.layout().edge[e].f;
  const MonomialBasis& basis = m.f_basis(j);
  Vec args(x_j.size() + u_j.size());
  args << x_j, u_j;
  const Vec phi = slow_basis_eval(basis, args);
  Vec out(blk.rows);
  for (int k = 0; k < blk.rows; ++k) {
    double v = 0.0;
    for (int t = 0; t < basis.size(); ++t) v += theta[blk.row_begin(k) + t] * phi[t];
    out[k] = v;
  }
  return out;
}

namespace {

// residual of coordinate k of node i between data rows t and t+1
double slow_residual(const Model& m, const Vec& theta, const Dataset& ds, int t, int i, int k) {
  const auto& g = m.graph();
  const auto xi = [&](int row, int node) {
    return ds.x.row(row).segment(g.state_offset[node], g.state_dims[node]).transpose().eval();
  };
  const auto ui = [&](int row, int node) {
    return ds.u.row(row).segment(g.input_offset[node], g.input_dims[node]).transpose().eval();
  };
  double v = slow_eval_e(m, theta, i, xi(t + 1, i), ui(t + 1, i))[k];
  for (int j : upstream_neighbors(g, i))
    v -= slow_eval_f(m, theta, i, j, xi(t, j), ui(t, j))[k];
  return v;
}

double slow_normalizer(const Model& m, const Vec& theta, const Dataset& ds, int t, int i, int k) {
  const auto& g = m.graph();
  const Vec x = ds.x.row(t + 1).segment(g.state_offset[i], g.state_dims[i]).transpose();
  const Vec u = ds.u.row(t + 1).segment(g.input_offset[i], g.input_dims[i]).transpose();
  const MonomialBasis& basis = m.e_basis(i);
  Vec args(1 + u.size());
  args[0] = x[k];
  args.tail(u.size()) = u;
  const BlockRef& blk = m.layout().e_block[i];
  double E = 0.0;
  Vec der(basis.size());
  basis.eval_derivative(args.data(), 0, der.data());
  for (int s = 0; s < basis.size(); ++s) E += theta[blk.row_begin(k) + s] * der[s];
  return 2.0 * E - 1.0;
}

}  // namespace

double naive_lree(const Model& m, const Vec& theta, const Dataset& ds) {
  const auto& g = m.graph();
  double total = 0.0;
  for (int t = 0; t + 1 < ds.length(); ++t)
    for (int i = 0; i < g.num_nodes; ++i)
      for (int k = 0; k < g.state_dims[i]; ++k) {
        const double eps = slow_residual(m, theta, ds, t, i, k);
        const double d = slow_normalizer(m, theta, ds, t, i, k);
        if (d <= 0.0) return std::numeric_limits<double>::infinity();
        total += eps * eps / d;
      }
  return total;
}

double naive_iee(const Model& m, const Vec& theta, const Dataset& ds) {
  const auto& g = m.graph();
  double total = 0.0;
  for (int t = 0; t + 1 < ds.length(); ++t)
    for (int i = 0; i < g.num_nodes; ++i)
      for (int k = 0; k < g.state_dims[i]; ++k) {
        const double eps = slow_residual(m, theta, ds, t, i, k);
        total += eps * eps;
      }
  return total;
}

Vec brute_force_projection(const Mat& G, const Vec& h, const Mat& A, const Vec& b, const Vec& y) {
  const int mg = static_cast<int>(G.rows());
  if (mg > 20) throw std::invalid_argument("brute_force_projection: too many rows to enumerate");
  double best = std::numeric_limits<double>::infinity();
  Vec best_x;
  for (unsigned mask = 0; mask < (1u << mg); ++mask) {
    std::vector<int> active;
    for (int r = 0; r < mg; ++r)
      if (mask & (1u << r)) active.push_back(r);
    Mat C(A.rows() + static_cast<int>(active.size()), y.size());
    Vec d(C.rows());
    C.topRows(A.rows()) = A;
    d.head(A.rows()) = b;
    for (std::size_t r = 0; r < active.size(); ++r) {
      C.row(A.rows() + static_cast<int>(r)) = G.row(active[r]);
      d[A.rows() + static_cast<int>(r)] = h[active[r]];
    }
    Vec x = y;
    Vec mult(C.rows());
    if (C.rows() > 0) {
      const auto cod = C.completeOrthogonalDecomposition();
      x = y - cod.pseudoInverse() * (C * y - d);
      if ((C * x - d).lpNorm<Eigen::Infinity>() > 1e-8) continue;  // inconsistent subset
      mult = C.transpose().completeOrthogonalDecomposition().solve(y - x);
      if ((C.transpose() * mult - (y - x)).lpNorm<Eigen::Infinity>() > 1e-8) continue;
    }
    bool kkt = true;
    for (std::size_t r = 0; r < active.size() && kkt; ++r)
      if (mult[A.rows() + static_cast<int>(r)] < -1e-9) kkt = false;
    if (!kkt) continue;
    if (((G * x - h).array() > 1e-9).any()) continue;
    const double dist = (x - y).squaredNorm();
    if (dist < best) {
      best = dist;
      best_x = x;
    }
  }
  if (!best_x.size()) throw std::runtime_error("brute_force_projection: no KKT point found");
  return best_x;
}

double dense_spectral_radius(const Mat& A) {
  return Eigen::EigenSolver<Mat>(A, false).eigenvalues().array().abs().maxCoeff();
}

double measured_snr_db(const Mat& clean, const Mat& noisy) {
  double acc = 0.0;
  for (int c = 0; c < clean.cols(); ++c) {
    const double sig = clean.col(c).squaredNorm();
    const double noise = (noisy.col(c) - clean.col(c)).squaredNorm();
    acc += 10.0 * std::log10(sig / noise);
  }
  return acc / static_cast<double>(clean.cols());
}

bool connected(int n, const std::vector<std::pair<int, int>>& undirected_edges) {
  if (n <= 0) return false;
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : undirected_edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int w : adj[v])
      if (!seen[w]) {
        seen[w] = 1;
        ++count;
        q.push(w);
      }
  }
  return count == n;
}

namespace {

// strict incircle test against the circumcircle of (a, b, c); orientation-free
bool inside_circumcircle(const Mat& p, int a, int b, int c, int q) {
  const double orient = (p(b, 0) - p(a, 0)) * (p(c, 1) - p(a, 1)) -
                        (p(b, 1) - p(a, 1)) * (p(c, 0) - p(a, 0));
  if (orient == 0.0) return false;
  const double ax = p(a, 0) - p(q, 0), ay = p(a, 1) - p(q, 1);
  const double bx = p(b, 0) - p(q, 0), by = p(b, 1) - p(q, 1);
  const double cx = p(c, 0) - p(q, 0), cy = p(c, 1) - p(q, 1);
  const double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
  const double det =
      ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx);
  return (orient > 0.0 ? det : -det) > 0.0;
}

}  // namespace

std::vector<std::pair<int, int>> slow_delaunay_edges(const Mat& points) {
  const int P = static_cast<int>(points.rows());
  std::set<std::pair<int, int>> out;
  for (int a = 0; a < P; ++a)
    for (int b = a + 1; b < P; ++b)
      for (int c = 0; c < P; ++c) {
        if (c == a || c == b) continue;
        bool empty = true;
        for (int q = 0; q < P && empty; ++q) {
          if (q == a || q == b || q == c) continue;
          if (inside_circumcircle(points, a, b, c, q)) empty = false;
        }
        if (empty) {
          out.insert({a, b});
          break;
        }
      }
  return {out.begin(), out.end()};
}

NetworkGraph single_node_graph(int n, int m) {
  return make_graph(1, {n}, {m}, {{0, 0}});
}

NetworkGraph chain_graph(int nodes) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < nodes; ++i) {
    edges.emplace_back(i, i);
    if (i + 1 < nodes) edges.emplace_back(i, i + 1);
  }
  return make_graph(nodes, std::vector<int>(nodes, 1), std::vector<int>(nodes, 1),
                    std::move(edges));
}

bool cli_available() {
  const char* exe = std::getenv("NETID_CLI");
  return exe != nullptr && *exe != '\0';
}

int run_cli(const std::string& args, std::string* output) {
  const char* exe = std::getenv("NETID_CLI");
  if (!exe || !*exe) throw std::runtime_error("NETID_CLI is not set");
  const std::string cmd = std::string(exe) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string text;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) text += buf;
  const int status = pclose(pipe);
  if (output) *output = text;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return -1;
}

TempDir::TempDir() {
  char tmpl[] = "/tmp/netid_test_XXXXXX";
  if (!mkdtemp(tmpl)) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace netid::testing
