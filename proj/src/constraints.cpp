#include "netid/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <unordered_set>

#include <Eigen/LU>

namespace netid {

const char* row_kind_name(RowKind k) {
  switch (k) {
    case RowKind::WellPosed: return "well_posed";
    case RowKind::NonnegState: return "nonneg_state";
    case RowKind::NonnegInput: return "nonneg_input";
    case RowKind::ContractCol: return "contract_col";
    case RowKind::SlackUpper: return "slack_upper";
    case RowKind::SlackLower: return "slack_lower";
    case RowKind::SlackCol: return "slack_col";
    case RowKind::BiasZero: return "bias_zero";
  }
  return "?";
}

SampleSet samples_from_dataset(const Model& m, const Dataset& ds) {
  const auto& g = m.graph();
  validate_dataset(g, ds);
  SampleSet s(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) {
    const int d = g.state_dims[i] + g.input_dims[i];
    s[i].resize(ds.length(), d);
    s[i].leftCols(g.state_dims[i]) = ds.x.middleCols(g.state_offset[i], g.state_dims[i]);
    s[i].rightCols(g.input_dims[i]) = ds.u.middleCols(g.input_offset[i], g.input_dims[i]);
  }
  return s;
}

SampleSet grid_samples(const Model& m, const Dataset& ds, int points_per_dim, double inflate) {
  if (points_per_dim < 2) throw std::invalid_argument("grid_samples: need >= 2 points per dim");
  const auto& g = m.graph();
  validate_dataset(g, ds);
  SampleSet s(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) {
    const int d = g.state_dims[i] + g.input_dims[i];
    double cells = 1;
    for (int v = 0; v < d; ++v) cells *= points_per_dim;
    if (cells > 2e5)
      throw std::invalid_argument("grid_samples: grid too large for node " + std::to_string(i));
    Vec lo(d), hi(d);
    for (int v = 0; v < d; ++v) {
      const bool state = v < g.state_dims[i];
      const auto col = state ? ds.x.col(g.state_offset[i] + v)
                             : ds.u.col(g.input_offset[i] + (v - g.state_dims[i]));
      lo[v] = col.minCoeff();
      hi[v] = col.maxCoeff();
      double span = hi[v] - lo[v];
      if (span < 1e-12) span = 1.0;
      lo[v] -= inflate * span;
      hi[v] += inflate * span;
    }
    const int rows = static_cast<int>(cells);
    s[i].resize(rows, d);
    for (int r = 0; r < rows; ++r) {
      int rem = r;
      for (int v = 0; v < d; ++v) {
        const int idx = rem % points_per_dim;
        rem /= points_per_dim;
        s[i](r, v) = lo[v] + (hi[v] - lo[v]) * idx / (points_per_dim - 1);
      }
    }
  }
  return s;
}

SampleSet box_samples(const Model& m, double lo, double hi, int points_per_dim) {
  if (points_per_dim < 2) throw std::invalid_argument("box_samples: need >= 2 points per dim");
  if (!(lo < hi)) throw std::invalid_argument("box_samples: empty interval");
  const auto& g = m.graph();
  SampleSet s(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) {
    const int d = g.state_dims[i] + g.input_dims[i];
    double cells = 1;
    for (int v = 0; v < d; ++v) cells *= points_per_dim;
    if (cells > 2e5)
      throw std::invalid_argument("box_samples: grid too large for node " + std::to_string(i));
    const int rows = static_cast<int>(cells);
    s[i].resize(rows, d);
    for (int r = 0; r < rows; ++r) {
      int rem = r;
      for (int v = 0; v < d; ++v) {
        const int idx = rem % points_per_dim;
        rem /= points_per_dim;
        s[i](r, v) = lo + (hi - lo) * idx / (points_per_dim - 1);
      }
    }
  }
  return s;
}

SampleSet merge_samples(SampleSet a, const SampleSet& b) {
  if (a.size() != b.size()) throw std::invalid_argument("merge_samples: node count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (b[i].rows() == 0) continue;
    if (a[i].cols() != b[i].cols()) throw std::invalid_argument("merge_samples: width mismatch");
    Mat merged(a[i].rows() + b[i].rows(), a[i].cols());
    merged << a[i], b[i];
    a[i] = std::move(merged);
  }
  return a;
}

int ConstraintSystem::total_inequalities() const {
  int n = 0;
  for (const auto& nc : node) n += static_cast<int>(nc.G.rows());
  return n;
}

int ConstraintSystem::total_equalities() const {
  int n = 0;
  for (const auto& nc : node) n += static_cast<int>(nc.A.rows());
  return n;
}

namespace {

// Accumulates rows over a node's downstream view with exact-duplicate
// elimination; duplicates are the rule for affine models, where every sample
// produces the same rows.
class RowBuffer {
 public:
  explicit RowBuffer(int cols) : cols_(cols) {}

  void add(bool equality, const Vec& coefs, double rhs, RowInfo info) {
    if ((coefs.array() == 0.0).all()) {
      // degenerate bases can zero a row out entirely; keep it only if it
      // actually constrains something
      if (equality ? rhs != 0.0 : rhs < 0.0)
        throw std::invalid_argument("constraint row is contradictory for every coefficient");
      return;
    }
    key_.assign(reinterpret_cast<const char*>(coefs.data()), sizeof(double) * cols_);
    key_.append(reinterpret_cast<const char*>(&rhs), sizeof rhs);
    key_.push_back(equality ? 'e' : 'i');
    if (!seen_.insert(key_).second) return;
    auto& rows = equality ? eq_rows_ : ineq_rows_;
    auto& rhss = equality ? eq_rhs_ : ineq_rhs_;
    auto& infos = equality ? eq_info_ : ineq_info_;
    rows.insert(rows.end(), coefs.data(), coefs.data() + cols_);
    rhss.push_back(rhs);
    infos.push_back(info);
  }

  void dump(NodeConstraints& nc) const {
    const int gi = static_cast<int>(ineq_rhs_.size());
    nc.G.resize(gi, cols_);
    nc.h.resize(gi);
    for (int r = 0; r < gi; ++r) {
      nc.G.row(r) = Eigen::Map<const Vec>(ineq_rows_.data() + static_cast<std::size_t>(r) * cols_,
                                          cols_);
      nc.h[r] = ineq_rhs_[r];
    }
    const int ge = static_cast<int>(eq_rhs_.size());
    nc.A.resize(ge, cols_);
    nc.b.resize(ge);
    for (int r = 0; r < ge; ++r) {
      nc.A.row(r) = Eigen::Map<const Vec>(eq_rows_.data() + static_cast<std::size_t>(r) * cols_,
                                          cols_);
      nc.b[r] = eq_rhs_[r];
    }
    nc.ineq_info = ineq_info_;
    nc.eq_info = eq_info_;
  }

 private:
  int cols_;
  std::string key_;
  std::unordered_set<std::string> seen_;
  std::vector<double> ineq_rows_, eq_rows_;
  std::vector<double> ineq_rhs_, eq_rhs_;
  std::vector<RowInfo> ineq_info_, eq_info_;
};

}  // namespace

ConstraintSystem build_constraints(const Model& m, SampleSet samples, double margin) {
  const auto& spec = m.spec();
  const auto& g = m.graph();
  const auto& L = m.layout();
  if (static_cast<int>(samples.size()) != g.num_nodes)
    throw std::invalid_argument("build_constraints: one sample matrix per node required");
  if (margin < 0) throw std::invalid_argument("build_constraints: negative margin");

  ConstraintSystem cs;
  cs.margin = margin;
  cs.node.resize(g.num_nodes);

  std::vector<int> local(m.num_params(), -1);  // global index -> column in the node view

  for (int i = 0; i < g.num_nodes; ++i) {
    const int n_i = g.state_dims[i];
    const int m_i = g.input_dims[i];
    if (samples[i].rows() == 0)
      throw std::invalid_argument("build_constraints: empty sample set for node " +
                                  std::to_string(i));
    if (samples[i].cols() != n_i + m_i)
      throw std::invalid_argument("build_constraints: sample width mismatch at node " +
                                  std::to_string(i));

    auto& nc = cs.node[i];
    nc.node = i;
    nc.vars = L.downstream_index[i];
    const int dim = static_cast<int>(nc.vars.size());
    for (int c = 0; c < dim; ++c) local[nc.vars[c]] = c;

    const auto& e_blk = L.e_block[i];
    const auto& e_basis = m.e_basis(i);
    const auto& f_basis = m.f_basis(i);
    const int Be = e_basis.size();
    const int Bf = f_basis.size();

    RowBuffer rows(dim);
    Vec row(dim);
    std::vector<double> e_args(1 + m_i), f_args(n_i + m_i);
    Vec dpsi_e(Be), dphi(Bf), sigma;
    if (spec.slack_contract) sigma.resize(m.slack_basis(i).size());

    const double wp_rhs = 0.5 * (1.0 + spec.delta);

    for (int s = 0; s < samples[i].rows(); ++s) {
      for (int v = 0; v < n_i + m_i; ++v) f_args[v] = samples[i](s, v);
      for (int c = 0; c < m_i; ++c) e_args[1 + c] = samples[i](s, n_i + c);

      // well-posedness: one row per coordinate, -E_kk(s) <= -(1+delta)/2
      for (int k = 0; k < n_i; ++k) {
        e_args[0] = samples[i](s, k);
        e_basis.eval_derivative(e_args.data(), 0, dpsi_e.data());
        row.setZero();
        for (int t = 0; t < Be; ++t) row[local[e_blk.row_begin(k) + t]] = -dpsi_e[t];
        rows.add(false, row, -wp_rhs, {RowKind::WellPosed, s, k, -1});
      }

      if (spec.monotone) {
        for (int v = 0; v < n_i + m_i; ++v) {
          f_basis.eval_derivative(f_args.data(), v, dphi.data());
          const bool state = v < n_i;
          for (int id : L.outgoing[i]) {
            const auto& fb = L.edge[id].f;
            for (int r = 0; r < fb.rows; ++r) {
              row.setZero();
              for (int t = 0; t < Bf; ++t) row[local[fb.row_begin(r) + t]] = -dphi[t];
              rows.add(false, row, 0.0,
                       {state ? RowKind::NonnegState : RowKind::NonnegInput, s, r,
                        state ? v : v - n_i});
            }
          }
        }
      }

      if (spec.contract_l1) {
        // per state coordinate c: alpha*E_cc(s) - sum of F column c >= margin
        for (int c = 0; c < n_i; ++c) {
          row.setZero();
          e_args[0] = samples[i](s, c);
          e_basis.eval_derivative(e_args.data(), 0, dpsi_e.data());
          for (int t = 0; t < Be; ++t)
            row[local[e_blk.row_begin(c) + t]] = -spec.alpha * dpsi_e[t];
          f_basis.eval_derivative(f_args.data(), c, dphi.data());
          for (int id : L.outgoing[i]) {
            const auto& fb = L.edge[id].f;
            for (int r = 0; r < fb.rows; ++r)
              for (int t = 0; t < Bf; ++t) row[local[fb.row_begin(r) + t]] += dphi[t];
          }
          rows.add(false, row, -margin, {RowKind::ContractCol, s, c, -1});
        }
      }

      if (spec.slack_contract) {
        const auto& s_basis = m.slack_basis(i);
        const int Bs = s_basis.size();
        s_basis.eval(f_args.data(), sigma.data());
        for (int c = 0; c < n_i; ++c) {
          f_basis.eval_derivative(f_args.data(), c, dphi.data());
          for (int id : L.outgoing[i]) {
            const auto& fb = L.edge[id].f;
            const auto& sb = L.edge[id].slack;
            for (int r = 0; r < fb.rows; ++r) {
              const int srow = r * n_i + c;
              row.setZero();
              for (int t = 0; t < Bf; ++t) row[local[fb.row_begin(r) + t]] = dphi[t];
              for (int t = 0; t < Bs; ++t) row[local[sb.row_begin(srow) + t]] -= sigma[t];
              rows.add(false, row, 0.0, {RowKind::SlackUpper, s, r, c});
              row.setZero();
              for (int t = 0; t < Bf; ++t) row[local[fb.row_begin(r) + t]] = -dphi[t];
              for (int t = 0; t < Bs; ++t) row[local[sb.row_begin(srow) + t]] -= sigma[t];
              rows.add(false, row, 0.0, {RowKind::SlackLower, s, r, c});
            }
          }
          row.setZero();
          e_args[0] = samples[i](s, c);
          e_basis.eval_derivative(e_args.data(), 0, dpsi_e.data());
          for (int t = 0; t < Be; ++t)
            row[local[e_blk.row_begin(c) + t]] = -spec.alpha * dpsi_e[t];
          for (int id : L.outgoing[i]) {
            const auto& sb = L.edge[id].slack;
            for (int r = 0; r < L.edge[id].f.rows; ++r)
              for (int t = 0; t < Bs; ++t) row[local[sb.row_begin(r * n_i + c) + t]] += sigma[t];
          }
          rows.add(false, row, -margin, {RowKind::SlackCol, s, c, -1});
        }
      }
    }

    // Origin equilibrium: constant coefficients pinned to zero blockwise.
    // This implies bias(e^i) = sum_j bias(f^{ij}) = 0 while keeping every
    // equality inside a single node view.
    if (spec.positive && spec.include_bias) {
      const int e_const = e_basis.constant_index();
      for (int k = 0; k < n_i; ++k) {
        row.setZero();
        row[local[e_blk.row_begin(k) + e_const]] = 1.0;
        rows.add(true, row, 0.0, {RowKind::BiasZero, -1, k, -1});
      }
      const int f_const = f_basis.constant_index();
      for (int id : L.outgoing[i]) {
        const auto& fb = L.edge[id].f;
        for (int r = 0; r < fb.rows; ++r) {
          row.setZero();
          row[local[fb.row_begin(r) + f_const]] = 1.0;
          rows.add(true, row, 0.0, {RowKind::BiasZero, -1, r, L.edge[id].target});
        }
      }
    }

    rows.dump(nc);
    for (int c = 0; c < dim; ++c) local[nc.vars[c]] = -1;
  }

  cs.samples = std::move(samples);
  return cs;
}

FeasibilityReport check_feasibility(const ConstraintSystem& cs, const Vec& theta, double tol) {
  FeasibilityReport rep;
  for (const auto& nc : cs.node) {
    Vec view(nc.vars.size());
    for (std::size_t c = 0; c < nc.vars.size(); ++c) view[c] = theta[nc.vars[c]];
    if (nc.G.rows() > 0) {
      Vec slack = nc.G * view - nc.h;
      for (int r = 0; r < slack.size(); ++r) {
        rep.max_violation = std::max(rep.max_violation, slack[r]);
        if (slack[r] > tol)
          rep.items.push_back({nc.node, r, false, slack[r], nc.ineq_info[r].kind});
      }
    }
    if (nc.A.rows() > 0) {
      Vec res = (nc.A * view - nc.b).cwiseAbs();
      for (int r = 0; r < res.size(); ++r) {
        rep.max_equality = std::max(rep.max_equality, res[r]);
        if (res[r] > tol) rep.items.push_back({nc.node, r, true, res[r], nc.eq_info[r].kind});
      }
    }
  }
  std::sort(rep.items.begin(), rep.items.end(),
            [](const auto& a, const auto& b) { return a.violation > b.violation; });
  if (rep.items.size() > 50) rep.items.resize(50);
  return rep;
}

void export_constraints_csv(const ConstraintSystem& cs, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::invalid_argument("cannot write constraints file: " + path);
  std::fprintf(f, "node,system,row,kind,rhs,col,coef\n");
  for (const auto& nc : cs.node) {
    for (int r = 0; r < nc.G.rows(); ++r)
      for (int c = 0; c < nc.G.cols(); ++c)
        if (nc.G(r, c) != 0.0)
          std::fprintf(f, "%d,ineq,%d,%s,%.17g,%d,%.17g\n", nc.node + 1, r,
                       row_kind_name(nc.ineq_info[r].kind), nc.h[r], nc.vars[c], nc.G(r, c));
    for (int r = 0; r < nc.A.rows(); ++r)
      for (int c = 0; c < nc.A.cols(); ++c)
        if (nc.A(r, c) != 0.0)
          std::fprintf(f, "%d,eq,%d,%s,%.17g,%d,%.17g\n", nc.node + 1, r,
                       row_kind_name(nc.eq_info[r].kind), nc.b[r], nc.vars[c], nc.A(r, c));
  }
  std::fclose(f);
}

LinearRealization construct_feasible_linear(const Mat& A, double eps) {
  LinearRealization out;
  if (A.rows() != A.cols() || A.rows() == 0) {
    out.message = "matrix must be square and non-empty";
    return out;
  }
  if (!(eps > 0.0 && eps <= 1.0)) {
    out.message = "eps must lie in (0, 1]";
    return out;
  }
  if ((A.array() < 0.0).any()) {
    out.message = "matrix has negative entries";
    return out;
  }
  const int n = static_cast<int>(A.rows());
  // (I - A')z = 1 has the Neumann-series solution z = sum_k (A')^k 1 >= 1
  // exactly when rho(A) < 1; then z'A - z' = -1' and the column margins
  // 1'(E - F) equal one.
  Mat M = Mat::Identity(n, n) - A.transpose();
  Eigen::PartialPivLU<Mat> lu(M);
  Vec z = lu.solve(Vec::Ones(n));
  const double resid = (M * z - Vec::Ones(n)).lpNorm<Eigen::Infinity>();
  if (!z.allFinite() || resid > 1e-8 * std::max(1.0, z.lpNorm<Eigen::Infinity>()) ||
      z.minCoeff() < 1.0 - 1e-9) {
    out.message = "no positive certificate: spectral radius is not below one";
    return out;
  }
  out.ok = true;
  out.z = z;
  out.E_diag = z;
  out.F = z.asDiagonal() * A;
  // column margin with rate a: a*z_c - (z_c - 1); nonnegative iff
  // a >= (z_c - 1)/z_c
  out.alpha_min = 0.0;
  for (int c = 0; c < n; ++c) out.alpha_min = std::max(out.alpha_min, (z[c] - 1.0) / z[c]);
  return out;
}

}  // namespace netid
