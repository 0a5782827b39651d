#include "netid/optimize.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <Eigen/Cholesky>

namespace netid {

namespace {

Vec gather(const Vec& full, const std::vector<int>& idx) {
  Vec out(idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) out[c] = full[idx[c]];
  return out;
}

void scatter(Vec& full, const std::vector<int>& idx, const Vec& vals) {
  for (std::size_t c = 0; c < idx.size(); ++c) full[idx[c]] = vals[c];
}

// Runs fn(0..n-1) on a temporary thread team; the first exception is rethrown
// on the calling thread after the join.
template <typename Fn>
void parallel_over(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr err;
  auto work = [&] {
    for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> team;
  const int count = std::min(threads, n);
  team.reserve(count);
  for (int t = 0; t < count; ++t) team.emplace_back(work);
  for (auto& th : team) th.join();
  if (err) std::rethrow_exception(err);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

long long admm_bytes_per_iteration(const Model& m) {
  long long coords = 0;
  for (const auto& e : m.layout().edge)
    if (e.source != e.target) coords += e.f.size() + e.slack.size();
  return 3LL * 8LL * coords;
}

Vec prox_newton(const LocalObjective& obj, const Vec& center, double rho, const Vec& warm,
                double grad_tol, int max_iters) {
  const int d = obj.dim();
  if (center.size() != d) throw std::invalid_argument("prox: center size mismatch");
  if (warm.size() != d) throw std::invalid_argument("prox: warm start size mismatch");
  if (!(rho > 0.0)) throw std::invalid_argument("prox: rho must be positive");
  Vec w = warm;
  if (!std::isfinite(obj.value(w)))
    throw std::invalid_argument("prox: warm start outside the objective domain");

  Vec g(d), step(d), trial(d);
  Mat H;
  for (int it = 0; it < max_iters; ++it) {
    const double jv = obj.value_grad_hess(w, g, H);
    g += rho * (w - center);
    const double gn = g.norm();
    if (gn <= grad_tol) break;
    H.diagonal().array() += rho;

    Eigen::LLT<Mat> llt(H);
    if (llt.info() == Eigen::Success) {
      step = llt.solve(-g);
    } else {
      step = Eigen::LDLT<Mat>(H).solve(-g);
    }
    double dec = -g.dot(step);
    if (!(dec > 0.0) || !step.allFinite()) {
      step = -g / (1.0 + H.diagonal().maxCoeff());
      dec = -g.dot(step);
    }

    const double L0 = jv + 0.5 * rho * (w - center).squaredNorm();
    double a = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial = w + a * step;
      const double Lt = obj.value(trial) + 0.5 * rho * (trial - center).squaredNorm();
      if (Lt <= L0 - 0.25 * a * dec) {
        accepted = true;
        break;
      }
      a *= 0.5;
    }
    if (!accepted) break;
    w = trial;
  }
  return w;
}

AdmmResult admm_fit(const Model& m, const Dataset& ds, const ConstraintSystem& cs,
                    const AdmmOptions& opts) {
  const auto& g = m.graph();
  const int N = g.num_nodes;
  if (static_cast<int>(cs.node.size()) != N)
    throw std::invalid_argument("admm: constraint system does not match the graph");
  if (!(opts.penalty_rho > 0.0)) throw std::invalid_argument("admm: rho must be positive");
  const int P = m.num_params();
  const auto& L = m.layout();

  std::vector<LocalObjective> obj;
  obj.reserve(N);
  for (int i = 0; i < N; ++i) obj.emplace_back(m, ds, i, opts.objective);
  std::vector<std::unique_ptr<PolytopeProjector>> proj(N);
  for (int i = 0; i < N; ++i) {
    const auto& nc = cs.node[i];
    proj[i] = std::make_unique<PolytopeProjector>(nc.G, nc.h, nc.A, nc.b, opts.qp);
  }

  AdmmResult res;
  const Vec ident = identity_params(m);
  Vec theta = ident;
  Vec phi = theta;
  Vec v = Vec::Zero(P);
  std::vector<Vec> warm(N);
  for (int i = 0; i < N; ++i) warm[i] = gather(theta, L.upstream_index[i]);

  double rho = opts.penalty_rho;
  const long long bytes = admm_bytes_per_iteration(m);
  const int threads =
      opts.threads > 0 ? opts.threads
                       : std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  const double sqrt_p = std::sqrt(static_cast<double>(P));

  std::vector<double> t1(N, 0.0), t2(N, 0.0);
  std::atomic<bool> projection_trouble{false};
  Vec phi_prev(P);
  bool first = true;

  for (int iter = 1; iter <= opts.stop.max_iterations; ++iter) {
    parallel_over(N, threads, [&](int i) {
      const auto tic = std::chrono::steady_clock::now();
      const auto& idx = L.upstream_index[i];
      const Vec center = gather(phi, idx) - gather(v, idx);
      warm[i] = prox_newton(obj[i], center, rho, warm[i], opts.newton_grad_tol,
                            opts.newton_max_iterations);
      scatter(theta, idx, warm[i]);
      t1[i] = seconds_since(tic);
    });

    phi_prev = phi;
    const bool first_projection = first;
    parallel_over(N, threads, [&](int i) {
      const auto tic = std::chrono::steady_clock::now();
      const auto& idx = L.downstream_index[i];
      const Vec y = gather(theta, idx) + gather(v, idx);
      QpResult r = first_projection ? proj[i]->project(y, gather(ident, idx))
                                    : proj[i]->project(y);
      if (!r.converged) projection_trouble = true;
      scatter(phi, idx, r.x);
      t2[i] = seconds_since(tic);
    });
    first = false;

    v += theta - phi;

    const double r_norm = (theta - phi).norm();
    const double s_norm = rho * (phi - phi_prev).norm();
    const double eps_pri = sqrt_p * opts.stop.eps_abs +
                           opts.stop.eps_rel * std::max(theta.norm(), phi.norm());
    const double eps_dual = sqrt_p * opts.stop.eps_abs + opts.stop.eps_rel * (rho * v).norm();

    res.stats.push_back({iter, r_norm, s_norm,
                         *std::max_element(t1.begin(), t1.end()),
                         *std::max_element(t2.begin(), t2.end()), bytes});
    res.primal_res = r_norm;
    res.dual_res = s_norm;
    res.iterations = iter;

    if (opts.checkpoint_every > 0 && iter % opts.checkpoint_every == 0 &&
        !opts.checkpoint_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof name, "/iter_%06d.json", iter);
      save_params_json(m, phi, opts.checkpoint_dir + name, opts.meta);
    }

    if (r_norm <= eps_pri && s_norm <= eps_dual) {
      res.converged = true;
      break;
    }

    if (opts.adapt_rho) {
      if (r_norm > 10.0 * s_norm) {
        rho *= 2.0;
        v /= 2.0;
      } else if (s_norm > 10.0 * r_norm) {
        rho /= 2.0;
        v *= 2.0;
      }
    }
  }

  res.params = phi;
  res.theta = theta;
  res.dual = v;
  if (projection_trouble) res.message = "a projection missed its tolerance";
  if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
  return res;
}

void write_admm_stats_csv(const std::string& path, const std::vector<IterStats>& stats,
                          const FileMeta& meta) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot write stats file: " + path);
  if (!meta.config_hash.empty() || meta.seed != 0)
    std::fprintf(f, "# config_hash=%s seed=%" PRIu64 "\n",
                 meta.config_hash.empty() ? "-" : meta.config_hash.c_str(), meta.seed);
  std::fprintf(f, "iter,primal_res,dual_res,time_step1_max,time_step2_max,bytes_exchanged\n");
  for (const auto& s : stats)
    std::fprintf(f, "%d,%.9e,%.9e,%.6e,%.6e,%lld\n", s.iter, s.primal_res, s.dual_res,
                 s.time_step1_max, s.time_step2_max, s.bytes_exchanged);
  std::fclose(f);
}

Vec strict_interior_params(const Model& m, double margin) {
  const auto& spec = m.spec();
  const auto& g = m.graph();
  const auto& L = m.layout();
  if (spec.alpha <= margin)
    throw std::invalid_argument("contraction margin leaves no feasible interior");

  int worst_out = 1;
  for (int i = 0; i < g.num_nodes; ++i) {
    int rows = 0;
    for (int id : L.outgoing[i]) rows += L.edge[id].f.rows;
    worst_out = std::max(worst_out, rows);
  }
  const double sigma = spec.slack_contract ? 2.0 : 1.0;
  const double c_f = std::min(1e-3, 0.5 * (spec.alpha - margin) / (worst_out * sigma));

  Vec theta = Vec::Zero(m.num_params());
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto& eb = L.e_block[i];
    const int lin = m.e_basis(i).linear_index(0);
    for (int k = 0; k < eb.rows; ++k) theta[eb.row_begin(k) + lin] = 1.0;
  }
  for (const auto& e : m.layout().edge) {
    const auto& fb = m.f_basis(e.source);
    if (spec.deg_f >= 1) {
      for (int v = 0; v < g.state_dims[e.source] + g.input_dims[e.source]; ++v) {
        const int lin = fb.linear_index(v);
        for (int r = 0; r < e.f.rows; ++r) theta[e.f.row_begin(r) + lin] = c_f;
      }
    }
    if (spec.slack_contract && e.slack.size() > 0) {
      const int cst = m.slack_basis(e.source).constant_index();
      for (int r = 0; r < e.slack.rows; ++r) theta[e.slack.row_begin(r) + cst] = 2.0 * c_f;
    }
  }
  return theta;
}

namespace {

// objective over the unpinned coordinates; pinned ones stay at their values
class GlobalObjective final : public SmoothConvex {
 public:
  GlobalObjective(const Model& m, const Dataset& ds, FitObjective obj, Vec pinned_full,
                  const std::vector<int>& free_of_global, int n_free)
      : full_(std::move(pinned_full)), free_of_global_(free_of_global), n_free_(n_free) {
    const int N = m.graph().num_nodes;
    locals_.reserve(N);
    for (int i = 0; i < N; ++i) locals_.emplace_back(m, ds, i, obj);
  }

  int dim() const override { return n_free_; }

  double value(const Vec& xf) const override {
    Vec full = expand(xf);
    double total = 0.0;
    for (const auto& lo : locals_) {
      total += lo.value(gather(full, lo.vars()));
      if (!std::isfinite(total)) return total;
    }
    return total;
  }

  double value_grad_hess(const Vec& xf, Vec& grad, std::vector<Triplet>& hess) const override {
    Vec full = expand(xf);
    grad = Vec::Zero(n_free_);
    double total = 0.0;
    Vec lg;
    Mat lh;
    for (const auto& lo : locals_) {
      const Vec lw = gather(full, lo.vars());
      total += lo.value_grad_hess(lw, lg, lh);
      if (!std::isfinite(total)) return total;
      const auto& vars = lo.vars();
      for (int c = 0; c < lo.dim(); ++c) {
        const int fc = free_of_global_[vars[c]];
        if (fc < 0) continue;
        grad[fc] += lg[c];
        for (int r = 0; r < lo.dim(); ++r) {
          if (lh(r, c) == 0.0) continue;
          const int fr = free_of_global_[vars[r]];
          if (fr >= 0) hess.emplace_back(fr, fc, lh(r, c));
        }
      }
    }
    return total;
  }

  Vec expand(const Vec& xf) const {
    Vec full = full_;
    for (int gidx = 0; gidx < full.size(); ++gidx)
      if (free_of_global_[gidx] >= 0) full[gidx] = xf[free_of_global_[gidx]];
    return full;
  }

 private:
  Vec full_;
  std::vector<int> free_of_global_;
  int n_free_;
  std::vector<LocalObjective> locals_;
};

}  // namespace

CentralizedResult centralized_fit(const Model& m, const Dataset& ds, const ConstraintSystem& cs,
                                  const CentralizedOptions& opts) {
  CentralizedResult out;
  const int P = m.num_params();
  if (static_cast<int>(cs.node.size()) != m.graph().num_nodes)
    throw std::invalid_argument("fit: constraint system does not match the graph");

  // Equality rows are coefficient pins; resolve them into fixed values.
  Vec pinned_value = Vec::Zero(P);
  std::vector<char> pinned(P, 0);
  for (const auto& nc : cs.node) {
    for (int r = 0; r < nc.A.rows(); ++r) {
      int col = -1;
      for (int c = 0; c < nc.A.cols(); ++c)
        if (nc.A(r, c) != 0.0) {
          if (col >= 0)
            throw std::invalid_argument(
                "fit: only single-coefficient equality rows are supported");
          col = c;
        }
      if (col < 0) continue;
      const int gidx = nc.vars[col];
      const double val = nc.b[r] / nc.A(r, col);
      if (pinned[gidx] && std::abs(pinned_value[gidx] - val) > 1e-12)
        throw std::invalid_argument("fit: conflicting equality rows");
      pinned[gidx] = 1;
      pinned_value[gidx] = val;
    }
  }
  std::vector<int> free_of_global(P, -1);
  int n_free = 0;
  for (int i = 0; i < P; ++i)
    if (!pinned[i]) free_of_global[i] = n_free++;

  // Stack the inequalities over the free coordinates.
  std::vector<Triplet> trip;
  std::vector<double> h_rows;
  for (const auto& nc : cs.node) {
    for (int r = 0; r < nc.G.rows(); ++r) {
      double rhs = nc.h[r];
      int nnz = 0;
      const int row = static_cast<int>(h_rows.size());
      for (int c = 0; c < nc.G.cols(); ++c) {
        const double coef = nc.G(r, c);
        if (coef == 0.0) continue;
        const int gidx = nc.vars[c];
        if (pinned[gidx]) {
          rhs -= coef * pinned_value[gidx];
        } else {
          trip.emplace_back(row, free_of_global[gidx], coef);
          ++nnz;
        }
      }
      if (nnz == 0) {
        // row reduced to 0 <= rhs; its prospective index carries no triplets
        if (rhs < -1e-12) {
          out.message = "constraints are infeasible after pinning";
          return out;
        }
        continue;
      }
      h_rows.push_back(rhs);
    }
  }
  SpMat G(static_cast<int>(h_rows.size()), n_free);
  G.setFromTriplets(trip.begin(), trip.end());
  Vec h = Eigen::Map<const Vec>(h_rows.data(), h_rows.size());

  GlobalObjective fobj(m, ds, opts.objective, pinned_value, free_of_global, n_free);

  Vec start_full = strict_interior_params(m, cs.margin);
  Vec x0(n_free);
  for (int i = 0; i < P; ++i)
    if (free_of_global[i] >= 0) x0[free_of_global[i]] = start_full[i];
  bool strict = std::isfinite(fobj.value(x0));
  if (strict && G.rows() > 0) strict = ((h - G * x0).array() > 0.0).all();
  if (!strict) {
    Phase1Result p1 = max_slack_point(G, h, opts.barrier);
    if (!p1.ok || !std::isfinite(fobj.value(p1.x))) {
      out.message = "no strictly feasible start found";
      return out;
    }
    x0 = p1.x;
  }

  BarrierResult br = barrier_minimize(fobj, G, h, x0, opts.barrier);
  out.converged = br.converged;
  out.centerings = br.centerings;
  out.newton_iterations = br.newton_iterations;
  out.gap = br.gap;
  out.objective = br.objective;
  out.message = br.message;
  out.params = fobj.expand(br.x);
  return out;
}

}  // namespace netid
