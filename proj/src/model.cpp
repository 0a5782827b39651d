#include "netid/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace netid {

void ModelSpec::validate() const {
  if (deg_e < 1 || deg_f < 1)
    throw std::invalid_argument("ModelSpec: polynomial degrees must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("ModelSpec: alpha must lie in (0, 1)");
  if (!(delta > 0.0)) throw std::invalid_argument("ModelSpec: delta must be positive");
  if (contract_l1 && slack_contract)
    throw std::invalid_argument("ModelSpec: contract_l1 and slack_contract are mutually exclusive");
  if (contract_l1 && !monotone)
    throw std::invalid_argument("ModelSpec: contract_l1 requires the monotone flag");
  if (graph.num_nodes <= 0 || graph.state_offset.empty())
    throw std::invalid_argument("ModelSpec: graph must be finalized and non-empty");
}

void apply_model_set(ModelSpec& spec, ModelSet set) {
  spec.monotone = spec.contract_l1 = spec.slack_contract = false;
  spec.positive = true;
  switch (set) {
    case ModelSet::Unconstrained:
      break;
    case ModelSet::Monotone:
      spec.monotone = true;
      break;
    case ModelSet::MonotoneL1:
      spec.monotone = spec.contract_l1 = true;
      break;
    case ModelSet::SlackL1:
      spec.slack_contract = true;
      break;
  }
}

ModelSet parse_model_set(const std::string& name) {
  if (name == "u") return ModelSet::Unconstrained;
  if (name == "m") return ModelSet::Monotone;
  if (name == "ml1") return ModelSet::MonotoneL1;
  if (name == "c") return ModelSet::SlackL1;
  throw std::invalid_argument("unknown model set '" + name + "' (expected u, m, ml1 or c)");
}

std::string model_set_name(ModelSet set) {
  switch (set) {
    case ModelSet::Unconstrained: return "u";
    case ModelSet::Monotone: return "m";
    case ModelSet::MonotoneL1: return "ml1";
    case ModelSet::SlackL1: return "c";
  }
  return "?";
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const auto& g = spec_.graph;
  const int N = g.num_nodes;

  e_bases_.reserve(N);
  f_bases_.reserve(N);
  if (spec_.slack_contract) s_bases_.reserve(N);
  for (int i = 0; i < N; ++i) {
    e_bases_.emplace_back(1 + g.input_dims[i], spec_.deg_e, spec_.include_bias);
    f_bases_.emplace_back(g.state_dims[i] + g.input_dims[i], spec_.deg_f, spec_.include_bias);
    if (spec_.slack_contract)
      // the slack bounds |F| <= S live on the derivative basis of f, which
      // always includes a constant term
      s_bases_.emplace_back(g.state_dims[i] + g.input_dims[i], spec_.deg_f - 1, true);
  }

  layout_.e_block.resize(N);
  layout_.incoming.resize(N);
  layout_.outgoing.resize(N);
  int offset = 0;
  for (int i = 0; i < N; ++i) {
    layout_.e_block[i] = {offset, g.state_dims[i], e_bases_[i].size()};
    offset += layout_.e_block[i].size();
    for (int j : g.up[i]) {
      ParamLayout::EdgeBlock eb;
      eb.source = j;
      eb.target = i;
      eb.f = {offset, g.state_dims[i], f_bases_[j].size()};
      offset += eb.f.size();
      if (spec_.slack_contract) {
        eb.slack = {offset, g.state_dims[i] * g.state_dims[j], s_bases_[j].size()};
        offset += eb.slack.size();
      }
      const int id = static_cast<int>(layout_.edge.size());
      layout_.edge.push_back(eb);
      layout_.incoming[i].push_back(id);
      layout_.outgoing[j].push_back(id);
      edge_lookup_[{j, i}] = id;
    }
  }
  layout_.total = offset;

  auto push_block = [](std::vector<int>& view, const BlockRef& b) {
    for (int k = 0; k < b.size(); ++k) view.push_back(b.offset + k);
  };
  layout_.upstream_index.resize(N);
  layout_.downstream_index.resize(N);
  for (int i = 0; i < N; ++i) {
    push_block(layout_.upstream_index[i], layout_.e_block[i]);
    for (int id : layout_.incoming[i]) {
      push_block(layout_.upstream_index[i], layout_.edge[id].f);
      if (spec_.slack_contract) push_block(layout_.upstream_index[i], layout_.edge[id].slack);
    }
    push_block(layout_.downstream_index[i], layout_.e_block[i]);
    for (int id : layout_.outgoing[i]) {
      push_block(layout_.downstream_index[i], layout_.edge[id].f);
      if (spec_.slack_contract) push_block(layout_.downstream_index[i], layout_.edge[id].slack);
    }
  }
}

int Model::edge_index(int source, int target) const {
  auto it = edge_lookup_.find({source, target});
  return it == edge_lookup_.end() ? -1 : it->second;
}

namespace {

void check_node(const Model& m, int i) {
  if (i < 0 || i >= m.graph().num_nodes) throw std::invalid_argument("bad node index");
}

void check_dims(const char* what, const Vec& v, int expect) {
  if (v.size() != expect)
    throw std::invalid_argument(std::string(what) + ": expected length " +
                                std::to_string(expect) + ", got " + std::to_string(v.size()));
}

// features of e^i_k at (x_k, u); args buffer provided by the caller
void e_features(const Model& m, int i, double x_k, const Vec& u_i, std::vector<double>& args,
                Vec& out) {
  const auto& basis = m.e_basis(i);
  args[0] = x_k;
  for (int c = 0; c < u_i.size(); ++c) args[1 + c] = u_i[c];
  out.resize(basis.size());
  basis.eval(args.data(), out.data());
}

}  // namespace

Vec eval_e(const Model& m, const Vec& theta, int i, const Vec& x_i, const Vec& u_i) {
  check_node(m, i);
  const auto& g = m.graph();
  check_dims("eval_e: x_i", x_i, g.state_dims[i]);
  check_dims("eval_e: u_i", u_i, g.input_dims[i]);
  const auto& blk = m.layout().e_block[i];
  std::vector<double> args(1 + g.input_dims[i]);
  Vec feats, out(g.state_dims[i]);
  for (int k = 0; k < g.state_dims[i]; ++k) {
    e_features(m, i, x_i[k], u_i, args, feats);
    out[k] = theta.segment(blk.row_begin(k), blk.cols).dot(feats);
  }
  return out;
}

Vec eval_E_diag(const Model& m, const Vec& theta, int i, const Vec& x_i, const Vec& u_i) {
  check_node(m, i);
  const auto& g = m.graph();
  check_dims("eval_E_diag: x_i", x_i, g.state_dims[i]);
  check_dims("eval_E_diag: u_i", u_i, g.input_dims[i]);
  const auto& basis = m.e_basis(i);
  const auto& blk = m.layout().e_block[i];
  std::vector<double> args(1 + g.input_dims[i]);
  Vec dfeats(basis.size()), out(g.state_dims[i]);
  for (int k = 0; k < g.state_dims[i]; ++k) {
    args[0] = x_i[k];
    for (int c = 0; c < u_i.size(); ++c) args[1 + c] = u_i[c];
    basis.eval_derivative(args.data(), 0, dfeats.data());
    out[k] = theta.segment(blk.row_begin(k), blk.cols).dot(dfeats);
  }
  return out;
}

Vec eval_f(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j) {
  check_node(m, i);
  check_node(m, j);
  const int id = m.edge_index(j, i);
  if (id < 0)
    throw std::invalid_argument("eval_f: node " + std::to_string(j) + " is not upstream of " +
                                std::to_string(i));
  const auto& g = m.graph();
  check_dims("eval_f: x_j", x_j, g.state_dims[j]);
  check_dims("eval_f: u_j", u_j, g.input_dims[j]);
  const auto& basis = m.f_basis(j);
  std::vector<double> args(g.state_dims[j] + g.input_dims[j]);
  for (int c = 0; c < x_j.size(); ++c) args[c] = x_j[c];
  for (int c = 0; c < u_j.size(); ++c) args[g.state_dims[j] + c] = u_j[c];
  Vec feats(basis.size());
  basis.eval(args.data(), feats.data());
  const auto& blk = m.layout().edge[id].f;
  Vec out(g.state_dims[i]);
  for (int r = 0; r < blk.rows; ++r)
    out[r] = theta.segment(blk.row_begin(r), blk.cols).dot(feats);
  return out;
}

namespace {

// Jacobian of f^{ij} with respect to argument variables [var_begin, var_end)
Mat f_jacobian(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j,
               int var_begin, int var_end) {
  const auto& g = m.graph();
  const int id = m.edge_index(j, i);
  Mat out = Mat::Zero(g.state_dims[i], var_end - var_begin);
  if (id < 0) return out;  // absent edge: identically zero block
  const auto& basis = m.f_basis(j);
  std::vector<double> args(g.state_dims[j] + g.input_dims[j]);
  for (int c = 0; c < x_j.size(); ++c) args[c] = x_j[c];
  for (int c = 0; c < u_j.size(); ++c) args[g.state_dims[j] + c] = u_j[c];
  Vec dfeats(basis.size());
  const auto& blk = m.layout().edge[id].f;
  for (int v = var_begin; v < var_end; ++v) {
    basis.eval_derivative(args.data(), v, dfeats.data());
    for (int r = 0; r < blk.rows; ++r)
      out(r, v - var_begin) = theta.segment(blk.row_begin(r), blk.cols).dot(dfeats);
  }
  return out;
}

}  // namespace

Mat eval_F_block(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j) {
  check_node(m, i);
  check_node(m, j);
  const auto& g = m.graph();
  check_dims("eval_F_block: x_j", x_j, g.state_dims[j]);
  check_dims("eval_F_block: u_j", u_j, g.input_dims[j]);
  return f_jacobian(m, theta, i, j, x_j, u_j, 0, g.state_dims[j]);
}

Mat eval_K_block(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j) {
  check_node(m, i);
  check_node(m, j);
  const auto& g = m.graph();
  check_dims("eval_K_block: x_j", x_j, g.state_dims[j]);
  check_dims("eval_K_block: u_j", u_j, g.input_dims[j]);
  return f_jacobian(m, theta, i, j, x_j, u_j, g.state_dims[j],
                    g.state_dims[j] + g.input_dims[j]);
}

Mat eval_S_block(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j) {
  check_node(m, i);
  check_node(m, j);
  if (!m.spec().slack_contract)
    throw std::invalid_argument("eval_S_block: model has no slack parameters");
  const int id = m.edge_index(j, i);
  const auto& g = m.graph();
  Mat out = Mat::Zero(g.state_dims[i], g.state_dims[j]);
  if (id < 0) return out;
  const auto& basis = m.slack_basis(j);
  std::vector<double> args(g.state_dims[j] + g.input_dims[j]);
  for (int c = 0; c < x_j.size(); ++c) args[c] = x_j[c];
  for (int c = 0; c < u_j.size(); ++c) args[g.state_dims[j] + c] = u_j[c];
  Vec feats(basis.size());
  basis.eval(args.data(), feats.data());
  const auto& blk = m.layout().edge[id].slack;
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c)
      out(r, c) = theta.segment(blk.row_begin(r * out.cols() + c), blk.cols).dot(feats);
  return out;
}

// --- implicit stepping ------------------------------------------------------

namespace {

// Scalar root of p(x) = rhs where p is coordinate k of e^i with the node
// input frozen.  Newton from x0; after 20 steps without residual contraction
// switch to bisection on a bracket grown geometrically around x0.
struct ScalarSolve {
  double root = 0.0;
  StepStatus status = StepStatus::Ok;
};

ScalarSolve solve_scalar(const MonomialBasis& basis, const double* coefs, std::vector<double>& args,
                         double rhs, double x0, const StepOptions& opts) {
  Vec feats(basis.size()), dfeats(basis.size());
  auto eval_p = [&](double x) {
    args[0] = x;
    basis.eval(args.data(), feats.data());
    double v = 0;
    for (int t = 0; t < basis.size(); ++t) v += coefs[t] * feats[t];
    return v - rhs;
  };
  auto eval_dp = [&](double x) {
    args[0] = x;
    basis.eval_derivative(args.data(), 0, dfeats.data());
    double v = 0;
    for (int t = 0; t < basis.size(); ++t) v += coefs[t] * dfeats[t];
    return v;
  };

  const double scale = std::max(1.0, std::abs(rhs));
  double x = x0;
  double g = eval_p(x);
  double best_x = x, best_g = std::abs(g);
  int stalled = 0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    if (std::abs(g) <= opts.residual_tol * scale) return {x, StepStatus::Ok};
    const double dg = eval_dp(x);
    if (dg <= 0.0 || !std::isfinite(dg)) break;  // left the increasing region
    const double x_new = x - g / dg;
    if (!std::isfinite(x_new) || std::abs(x_new) > opts.bound) break;
    const double g_new = eval_p(x_new);
    if (std::abs(g_new) < best_g) {
      best_g = std::abs(g_new);
      best_x = x_new;
    }
    stalled = (std::abs(g_new) < 0.99 * std::abs(g)) ? 0 : stalled + 1;
    x = x_new;
    g = g_new;
    if (stalled >= 20) break;
  }
  if (best_g <= opts.residual_tol * scale) return {best_x, StepStatus::Ok};

  // bracket by geometric expansion around the warm start
  double lo = x0, hi = x0;
  double glo = eval_p(lo), ghi = glo;
  double h = std::max(1.0, std::abs(x0));
  bool bracketed = false;
  while (std::max(std::abs(lo), std::abs(hi)) <= opts.bound) {
    lo = x0 - h;
    hi = x0 + h;
    glo = eval_p(lo);
    ghi = eval_p(hi);
    if (glo == 0.0) return {lo, StepStatus::Ok};
    if (ghi == 0.0) return {hi, StepStatus::Ok};
    if (glo < 0.0 && ghi > 0.0) {
      bracketed = true;
      break;
    }
    // a decreasing sign pattern means multiple roots off the certified
    // region; take any bracket containing one
    if (glo > 0.0 && ghi < 0.0) {
      std::swap(lo, hi);
      std::swap(glo, ghi);
      bracketed = true;
      break;
    }
    h *= 2.0;
  }
  if (!bracketed) return {best_x, StepStatus::NoBracket};

  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = eval_p(mid);
    if (std::abs(gm) <= opts.residual_tol * scale || std::abs(hi - lo) < 1e-15 * std::max(1.0, std::abs(mid)))
      return {mid, StepStatus::Ok};
    if ((gm < 0.0) == (glo < 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return {0.5 * (lo + hi), StepStatus::MaxIterations};
}

}  // namespace

StepResult solve_step(const Model& m, const Vec& theta, const Vec& x_t, const Vec& u_t,
                      const Vec& u_next, const StepOptions& opts) {
  const auto& g = m.graph();
  check_dims("solve_step: x_t", x_t, g.total_state_dim());
  check_dims("solve_step: u_t", u_t, g.total_input_dim());
  check_dims("solve_step: u_next", u_next, g.total_input_dim());

  StepResult res;
  res.x_next.setZero(g.total_state_dim());
  for (int i = 0; i < g.num_nodes; ++i) {
    Vec rhs = Vec::Zero(g.state_dims[i]);
    for (int j : g.up[i]) {
      rhs += eval_f(m, theta, i, j,
                    x_t.segment(g.state_offset[j], g.state_dims[j]),
                    u_t.segment(g.input_offset[j], g.input_dims[j]));
    }
    const auto& blk = m.layout().e_block[i];
    const auto& basis = m.e_basis(i);
    std::vector<double> args(1 + g.input_dims[i]);
    for (int c = 0; c < g.input_dims[i]; ++c) args[1 + c] = u_next[g.input_offset[i] + c];
    for (int k = 0; k < g.state_dims[i]; ++k) {
      const double warm = x_t[g.state_offset[i] + k];
      auto sol = solve_scalar(basis, theta.data() + blk.row_begin(k), args, rhs[k], warm, opts);
      if (sol.status != StepStatus::Ok) {
        res.status = sol.status;
        res.fail_node = i;
        res.fail_coord = k;
        return res;
      }
      res.x_next[g.state_offset[i] + k] = sol.root;
    }
  }
  return res;
}

SimResult simulate(const Model& m, const Vec& theta, const Vec& x_init, const Mat& u,
                   const StepOptions& opts) {
  const auto& g = m.graph();
  check_dims("simulate: x_init", x_init, g.total_state_dim());
  if (u.cols() != g.total_input_dim())
    throw std::invalid_argument("simulate: input matrix has wrong width");
  const int T = static_cast<int>(u.rows());
  if (T < 1) throw std::invalid_argument("simulate: need at least one input row");

  SimResult res;
  res.x.setZero(T, g.total_state_dim());
  res.x.row(0) = x_init;
  res.steps_ok = 1;
  Vec x = x_init;
  for (int t = 1; t < T; ++t) {
    auto step = solve_step(m, theta, x, u.row(t - 1), u.row(t), opts);
    if (!step.ok()) {
      res.diverged = true;
      res.status = step.status;
      return res;
    }
    x = step.x_next;
    if (x.lpNorm<Eigen::Infinity>() > opts.bound) {
      res.diverged = true;
      return res;
    }
    res.x.row(t) = x;
    res.steps_ok = t + 1;
  }
  return res;
}

// --- data -------------------------------------------------------------------

void validate_dataset(const NetworkGraph& g, const Dataset& ds) {
  if (ds.length() < 2) throw std::invalid_argument("dataset: need at least 2 samples");
  if (ds.x.cols() != g.total_state_dim())
    throw std::invalid_argument("dataset: state width " + std::to_string(ds.x.cols()) +
                                " does not match graph total " +
                                std::to_string(g.total_state_dim()));
  if (ds.u.rows() != ds.x.rows())
    throw std::invalid_argument("dataset: state and input row counts differ");
  if (ds.u.cols() != g.total_input_dim())
    throw std::invalid_argument("dataset: input width does not match graph total");
  if (!ds.x.allFinite() || !ds.u.allFinite())
    throw std::invalid_argument("dataset: non-finite entries");
}

// --- parameter helpers -------------------------------------------------------

Vec identity_params(const Model& m) {
  Vec theta = Vec::Zero(m.num_params());
  for (int i = 0; i < m.graph().num_nodes; ++i) {
    const auto& blk = m.layout().e_block[i];
    const int lin = m.e_basis(i).linear_index(0);
    for (int k = 0; k < blk.rows; ++k) theta[blk.row_begin(k) + lin] = 1.0;
  }
  return theta;
}

Vec params_from_linear(const Model& m, const Vec& E_diag, const Mat& F, const Mat& K) {
  const auto& g = m.graph();
  const int n = g.total_state_dim();
  const int mm = g.total_input_dim();
  if (E_diag.size() != n || F.rows() != n || F.cols() != n || K.rows() != n || K.cols() != mm)
    throw std::invalid_argument("params_from_linear: dimension mismatch");

  Vec theta = Vec::Zero(m.num_params());
  for (int i = 0; i < g.num_nodes; ++i) {
    const auto& blk = m.layout().e_block[i];
    const int lin = m.e_basis(i).linear_index(0);
    for (int k = 0; k < blk.rows; ++k)
      theta[blk.row_begin(k) + lin] = E_diag[g.state_offset[i] + k];
  }
  auto covered = [&](int row, int col_node, bool input) {
    // entry must be zero unless the graph carries the edge
    return input ? K.row(row).segment(g.input_offset[col_node], g.input_dims[col_node]).isZero(0)
                 : F.row(row).segment(g.state_offset[col_node], g.state_dims[col_node]).isZero(0);
  };
  for (int i = 0; i < g.num_nodes; ++i) {
    for (int j = 0; j < g.num_nodes; ++j) {
      const int id = m.edge_index(j, i);
      if (id < 0) {
        for (int r = 0; r < g.state_dims[i]; ++r) {
          const int row = g.state_offset[i] + r;
          if (!covered(row, j, false) || !covered(row, j, true))
            throw std::invalid_argument("params_from_linear: F/K nonzero outside graph edges");
        }
        continue;
      }
      const auto& blk = m.layout().edge[id].f;
      const auto& basis = m.f_basis(j);
      for (int r = 0; r < g.state_dims[i]; ++r) {
        const int row = g.state_offset[i] + r;
        for (int c = 0; c < g.state_dims[j]; ++c)
          theta[blk.row_begin(r) + basis.linear_index(c)] = F(row, g.state_offset[j] + c);
        for (int c = 0; c < g.input_dims[j]; ++c)
          theta[blk.row_begin(r) + basis.linear_index(g.state_dims[j] + c)] =
              K(row, g.input_offset[j] + c);
      }
    }
  }
  return theta;
}

}  // namespace netid
