#pragma once

#include <string>
#include <vector>

#include "netid/model.hpp"

namespace netid {

enum class FitObjective { Lree, Iee };

const char* fit_objective_name(FitObjective o);
FitObjective parse_fit_objective(const std::string& name);  // "lree" | "iee"

// One-step equation residuals eps_{t,k} = e(x_{t+1}, u_{t+1}) - sum_j f(x_t, u_t),
// one row per predicted sample: row t of the result pairs data rows t and t+1.
Mat equation_residuals(const Model& m, const Vec& theta, const Dataset& ds);

struct ResidualSummary {
  double lree = 0.0;  // sum of eps^2 / (2 E_kk - 1); +inf when a denominator is <= 0
  double iee = 0.0;   // sum of eps^2
  bool well_posed = true;
  int fail_node = -1;
  int fail_t = -1;
  int fail_coord = -1;
};

ResidualSummary residual_summary(const Model& m, const Vec& theta, const Dataset& ds);

struct EquationError {
  double value = 0.0;  // sum over t of |x_{t+1} - x_tilde_{t+1}|^2
  bool ok = true;
  int fail_t = -1;     // first data row whose step solve failed
  int fail_node = -1;
};

// Explicit one-step-ahead error: predict row t+1 by solving the implicit
// equation at (x_t, u_t, u_{t+1}) and compare with the recorded row.  For
// affine e this never exceeds the lree value: the per-coordinate deviation is
// eps/E against the bound eps^2/(2E - 1), and (E - 1)^2 >= 0.
EquationError equation_error(const Model& m, const Vec& theta, const Dataset& ds);

// Fitting loss of one node over its upstream coefficient view, with every
// dataset feature row cached at construction.
//
// The loss separates over state coordinates.  For coordinate k and residual
// row t both the error eps = a'w and the normalizer d = b'w - 1 are linear in
// the view w, so the normalized loss eps^2/d is convex wherever d > 0 (the
// well-posedness rows keep d >= delta at the data) and its Hessian is the
// positive semidefinite sum of rank-one terms (2/d) r r' with r = a - (eps/d) b.
// Slack-bound coefficients belong to the view but never enter the loss.
class LocalObjective {
 public:
  LocalObjective(const Model& m, const Dataset& ds, int node, FitObjective objective);

  int node() const { return node_; }
  FitObjective objective() const { return objective_; }
  // global coefficient indices of the view, in local order
  const std::vector<int>& vars() const { return vars_; }
  int dim() const { return static_cast<int>(vars_.size()); }
  int rows() const { return T_; }  // residual rows per coordinate

  // +inf when the normalizer of some term is not positive at `local`; in that
  // case grad and hess are not filled in.
  double value(const Vec& local) const;
  double value_grad(const Vec& local, Vec& grad) const;
  double value_grad_hess(const Vec& local, Vec& grad, Mat& hess) const;

  Mat residuals(const Vec& local) const;  // rows() x n_i

 private:
  struct Coord {
    std::vector<int> cols;  // view indices touched by this coordinate, e-row entries first
    Mat A;                  // rows() x cols.size(): e features, then negated f features
    Mat B;                  // rows() x |e basis|: twice the e derivative features
  };

  double accumulate(const Vec& local, Vec* grad, Mat* hess) const;

  int node_;
  FitObjective objective_;
  int T_ = 0;
  int n_e_ = 0;
  std::vector<int> vars_;
  std::vector<Coord> coord_;
};

}  // namespace netid
