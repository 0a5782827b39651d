#include "netid/objective.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace netid {

const char* fit_objective_name(FitObjective o) {
  return o == FitObjective::Lree ? "lree" : "iee";
}

FitObjective parse_fit_objective(const std::string& name) {
  if (name == "lree") return FitObjective::Lree;
  if (name == "iee") return FitObjective::Iee;
  throw std::invalid_argument("unknown objective: " + name + " (expected lree or iee)");
}

Mat equation_residuals(const Model& m, const Vec& theta, const Dataset& ds) {
  const auto& g = m.graph();
  validate_dataset(g, ds);
  const int T = ds.length();
  Mat eps(T - 1, g.total_state_dim());
  for (int i = 0; i < g.num_nodes; ++i) {
    const int n_i = g.state_dims[i];
    for (int t = 0; t + 1 < T; ++t) {
      Vec rhs = Vec::Zero(n_i);
      for (int j : g.up[i])
        rhs += eval_f(m, theta, i, j,
                      ds.x.row(t).segment(g.state_offset[j], g.state_dims[j]).transpose(),
                      ds.u.row(t).segment(g.input_offset[j], g.input_dims[j]).transpose());
      Vec lhs = eval_e(m, theta, i,
                       ds.x.row(t + 1).segment(g.state_offset[i], n_i).transpose(),
                       ds.u.row(t + 1).segment(g.input_offset[i], g.input_dims[i]).transpose());
      eps.row(t).segment(g.state_offset[i], n_i) = (lhs - rhs).transpose();
    }
  }
  return eps;
}

ResidualSummary residual_summary(const Model& m, const Vec& theta, const Dataset& ds) {
  const auto& g = m.graph();
  ResidualSummary out;
  const Mat eps = equation_residuals(m, theta, ds);
  out.iee = eps.squaredNorm();
  for (int i = 0; i < g.num_nodes && out.well_posed; ++i) {
    const int n_i = g.state_dims[i];
    for (int t = 0; t < eps.rows(); ++t) {
      const Vec E = eval_E_diag(m, theta, i,
                                ds.x.row(t + 1).segment(g.state_offset[i], n_i).transpose(),
                                ds.u.row(t + 1)
                                    .segment(g.input_offset[i], g.input_dims[i])
                                    .transpose());
      for (int k = 0; k < n_i; ++k) {
        const double d = 2.0 * E[k] - 1.0;
        if (d <= 0.0) {
          out.well_posed = false;
          out.fail_node = i;
          out.fail_t = t;
          out.fail_coord = k;
          out.lree = std::numeric_limits<double>::infinity();
          break;
        }
        const double r = eps(t, g.state_offset[i] + k);
        out.lree += r * r / d;
      }
      if (!out.well_posed) break;
    }
  }
  return out;
}

EquationError equation_error(const Model& m, const Vec& theta, const Dataset& ds) {
  const auto& g = m.graph();
  validate_dataset(g, ds);
  EquationError out;
  for (int t = 0; t + 1 < ds.length(); ++t) {
    const StepResult s = solve_step(m, theta, ds.x.row(t).transpose(), ds.u.row(t).transpose(),
                                    ds.u.row(t + 1).transpose());
    if (!s.ok()) {
      out.ok = false;
      out.fail_t = t;
      out.fail_node = s.fail_node;
      return out;
    }
    out.value += (s.x_next.transpose() - ds.x.row(t + 1)).squaredNorm();
  }
  return out;
}

LocalObjective::LocalObjective(const Model& m, const Dataset& ds, int node,
                               FitObjective objective)
    : node_(node), objective_(objective) {
  const auto& g = m.graph();
  validate_dataset(g, ds);
  if (node < 0 || node >= g.num_nodes) throw std::invalid_argument("objective: node out of range");
  const auto& L = m.layout();
  vars_ = L.upstream_index[node];
  T_ = ds.length() - 1;
  const int n_i = g.state_dims[node];
  const int m_i = g.input_dims[node];
  const auto& e_basis = m.e_basis(node);
  n_e_ = e_basis.size();

  std::vector<int> lmap(m.num_params(), -1);
  for (int c = 0; c < dim(); ++c) lmap[vars_[c]] = c;

  const auto& in = L.incoming[node];
  std::vector<Mat> phi(in.size());
  for (std::size_t e = 0; e < in.size(); ++e) {
    const int j = L.edge[in[e]].source;
    const auto& fb = m.f_basis(j);
    phi[e].resize(T_, fb.size());
    std::vector<double> args(g.state_dims[j] + g.input_dims[j]);
    Vec buf(fb.size());
    for (int t = 0; t < T_; ++t) {
      for (int v = 0; v < g.state_dims[j]; ++v) args[v] = ds.x(t, g.state_offset[j] + v);
      for (int v = 0; v < g.input_dims[j]; ++v)
        args[g.state_dims[j] + v] = ds.u(t, g.input_offset[j] + v);
      fb.eval(args.data(), buf.data());
      phi[e].row(t) = buf;
    }
  }

  coord_.resize(n_i);
  std::vector<double> e_args(1 + m_i);
  Vec psi(n_e_), dpsi(n_e_);
  for (int k = 0; k < n_i; ++k) {
    auto& ck = coord_[k];
    int sk = n_e_;
    for (const auto& p : phi) sk += static_cast<int>(p.cols());
    ck.cols.reserve(sk);
    for (int b = 0; b < n_e_; ++b) ck.cols.push_back(lmap[L.e_block[node].row_begin(k) + b]);
    for (std::size_t e = 0; e < in.size(); ++e) {
      const auto& fb = L.edge[in[e]].f;
      for (int b = 0; b < fb.cols; ++b) ck.cols.push_back(lmap[fb.row_begin(k) + b]);
    }
    ck.A.resize(T_, sk);
    ck.B.resize(T_, n_e_);
    for (int t = 0; t < T_; ++t) {
      e_args[0] = ds.x(t + 1, g.state_offset[node] + k);
      for (int v = 0; v < m_i; ++v) e_args[1 + v] = ds.u(t + 1, g.input_offset[node] + v);
      e_basis.eval(e_args.data(), psi.data());
      e_basis.eval_derivative(e_args.data(), 0, dpsi.data());
      ck.A.row(t).head(n_e_) = psi;
      ck.B.row(t) = 2.0 * dpsi;
      int col = n_e_;
      for (const auto& p : phi) {
        ck.A.row(t).segment(col, p.cols()) = -p.row(t);
        col += static_cast<int>(p.cols());
      }
    }
  }
}

double LocalObjective::accumulate(const Vec& local, Vec* grad, Mat* hess) const {
  if (local.size() != dim()) throw std::invalid_argument("objective: view size mismatch");
  if (grad) *grad = Vec::Zero(dim());
  if (hess) *hess = Mat::Zero(dim(), dim());
  double total = 0.0;
  Vec sub, eps, d, w, gsub;
  Mat R, Hsub;
  for (const auto& ck : coord_) {
    const int sk = static_cast<int>(ck.cols.size());
    sub.resize(sk);
    for (int c = 0; c < sk; ++c) sub[c] = local[ck.cols[c]];
    eps.noalias() = ck.A * sub;
    if (objective_ == FitObjective::Iee) {
      total += eps.squaredNorm();
      if (grad) gsub.noalias() = 2.0 * (ck.A.transpose() * eps);
      if (hess) Hsub.noalias() = 2.0 * (ck.A.transpose() * ck.A);
    } else {
      d.noalias() = ck.B * sub.head(n_e_);
      d.array() -= 1.0;
      if ((d.array() <= 0.0).any()) return std::numeric_limits<double>::infinity();
      w = eps.array() / d.array();
      total += (w.array() * eps.array()).sum();
      if (grad) {
        gsub.noalias() = ck.A.transpose() * (2.0 * w);
        gsub.head(n_e_).noalias() -= ck.B.transpose() * w.cwiseAbs2();
      }
      if (hess) {
        R = ck.A;
        R.leftCols(n_e_) -= w.asDiagonal() * ck.B;
        Hsub.noalias() = R.transpose() * (2.0 / d.array()).matrix().asDiagonal() * R;
      }
    }
    if (grad)
      for (int c = 0; c < sk; ++c) (*grad)[ck.cols[c]] += gsub[c];
    if (hess)
      for (int c2 = 0; c2 < sk; ++c2)
        for (int c1 = 0; c1 < sk; ++c1) (*hess)(ck.cols[c1], ck.cols[c2]) += Hsub(c1, c2);
  }
  return total;
}

double LocalObjective::value(const Vec& local) const { return accumulate(local, nullptr, nullptr); }

double LocalObjective::value_grad(const Vec& local, Vec& grad) const {
  return accumulate(local, &grad, nullptr);
}

double LocalObjective::value_grad_hess(const Vec& local, Vec& grad, Mat& hess) const {
  return accumulate(local, &grad, &hess);
}

Mat LocalObjective::residuals(const Vec& local) const {
  if (local.size() != dim()) throw std::invalid_argument("objective: view size mismatch");
  Mat out(T_, static_cast<int>(coord_.size()));
  Vec sub;
  for (std::size_t k = 0; k < coord_.size(); ++k) {
    const auto& ck = coord_[k];
    sub.resize(ck.cols.size());
    for (std::size_t c = 0; c < ck.cols.size(); ++c) sub[c] = local[ck.cols[c]];
    out.col(static_cast<int>(k)) = ck.A * sub;
  }
  return out;
}

}  // namespace netid
