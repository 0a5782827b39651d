#pragma once

#include <vector>

#include "netid/model.hpp"

namespace netid {

struct QpOptions {
  double kkt_tol = 1e-8;
  int active_set_row_limit = 500;  // larger systems go to the iterative splitting method
  double over_relax = 1.5;         // splitting relaxation factor, must lie in (0, 2)
  int max_active_set_iters = 0;    // 0 picks a cap from the problem size
  int max_sweeps = 20000;
};

struct QpResult {
  Vec x;
  Vec lambda;  // inequality multipliers, lambda >= 0
  Vec nu;      // equality multipliers
  double kkt_residual = 0.0;
  int iterations = 0;
  bool used_splitting = false;
  bool fallback_engaged = false;  // the size-based choice failed and the other method finished
  bool converged = false;
};

// Euclidean projection onto {x : G x <= h, A x = b} for a fixed polytope.
//
// Systems within the row limit run a primal active-set method (exact
// equality-projection subproblems through a complete orthogonal
// decomposition); larger ones run over-relaxed dual coordinate descent with a
// terminal active-set snap.  Both finish at the same KKT tolerance.  The
// active-set path needs a feasible point the first time; afterwards the
// previous solution and working set warm-start each call.
class PolytopeProjector {
 public:
  PolytopeProjector(Mat G, Vec h, Mat A, Vec b, QpOptions opts = {});

  QpResult project(const Vec& y);
  QpResult project(const Vec& y, const Vec& feasible_start);

  int rows() const { return static_cast<int>(G_.rows()); }
  int equalities() const { return static_cast<int>(A_.rows()); }
  int dim() const { return dim_; }

 private:
  QpResult active_set(const Vec& y, const Vec& x0, const std::vector<int>& w0);
  QpResult splitting(const Vec& y);
  double kkt_residual(const Vec& y, const Vec& x, const Vec& lambda, const Vec& nu) const;
  bool feasible(const Vec& x, double tol) const;
  void remember(const QpResult& r);

  int dim_;
  Mat G_;  // rows normalized to unit length
  Vec h_;
  Mat A_;
  Vec b_;
  QpOptions opts_;

  bool warm_ = false;
  Vec x_warm_;
  std::vector<int> set_warm_;
  Vec lambda_warm_;
};

// One-shot projection without warm-start state.
QpResult project_polytope(const Mat& G, const Vec& h, const Mat& A, const Vec& b, const Vec& y,
                          const QpOptions& opts = {});

}  // namespace netid
