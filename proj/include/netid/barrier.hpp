#pragma once

#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "netid/model.hpp"

namespace netid {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Convex objective with a sparse Hessian, reported as triplets.  value()
// returns +inf outside the domain; gradient and Hessian are only requested at
// domain points.
class SmoothConvex {
 public:
  virtual ~SmoothConvex() = default;
  virtual int dim() const = 0;
  virtual double value(const Vec& x) const = 0;
  virtual double value_grad_hess(const Vec& x, Vec& grad, std::vector<Triplet>& hess) const = 0;
};

struct BarrierOptions {
  double t0 = 1.0;
  double mu = 20.0;         // outer multiplier on t
  double gap_tol = 1e-8;    // stop once (rows + 2 dim) / t falls below this
  double newton_tol = 1e-9; // centering stops at half the squared Newton decrement
  int max_newton = 200;     // per centering
  double box_radius = 1e4;  // every variable is boxed to keep the Hessian nonsingular
};

struct BarrierResult {
  Vec x;
  bool converged = false;
  int centerings = 0;
  int newton_iterations = 0;
  double gap = 0.0;
  double objective = 0.0;
  std::string message;
};

// Minimizes f over {G x <= h, |x_i| <= box_radius} by a log-barrier Newton
// method.  x0 must satisfy G x0 < h strictly and lie inside the box.
BarrierResult barrier_minimize(const SmoothConvex& f, const SpMat& G, const Vec& h, const Vec& x0,
                               const BarrierOptions& opts = {});

// Phase 1: minimizes the largest constraint slack.  ok when a strictly
// feasible point exists within the box.
struct Phase1Result {
  bool ok = false;
  Vec x;
  double margin = 0.0;  // min over rows of h - Gx at the returned point
};

Phase1Result max_slack_point(const SpMat& G, const Vec& h, const BarrierOptions& opts = {});

}  // namespace netid
