#pragma once

#include <string>
#include <vector>

#include "netid/barrier.hpp"
#include "netid/constraints.hpp"
#include "netid/io.hpp"
#include "netid/objective.hpp"
#include "netid/qp.hpp"

namespace netid {

struct StopCriteria {
  double eps_abs = 1e-4;
  double eps_rel = 1e-3;
  int max_iterations = 2000;
};

struct IterStats {
  int iter = 0;  // 1-based
  double primal_res = 0.0;
  double dual_res = 0.0;
  double time_step1_max = 0.0;  // seconds, slowest node: the wall time of a parallel deployment
  double time_step2_max = 0.0;
  long long bytes_exchanged = 0;
};

struct AdmmOptions {
  FitObjective objective = FitObjective::Lree;
  double penalty_rho = 1.0;
  bool adapt_rho = false;  // residual balancing, factor 2 when one residual is 10x the other
  int threads = 0;         // 0 picks the hardware concurrency
  StopCriteria stop;
  double newton_grad_tol = 1e-9;
  int newton_max_iterations = 100;
  QpOptions qp;
  int checkpoint_every = 0;  // iterations between JSON checkpoints, 0 disables
  std::string checkpoint_dir;
  FileMeta meta;
};

struct AdmmResult {
  Vec params;  // projected copy: satisfies the constraint system
  Vec theta;   // objective copy
  Vec dual;
  bool converged = false;
  int iterations = 0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  std::vector<IterStats> stats;
  std::string message;
};

// Consensus ADMM between the objective (upstream views) and the constraints
// (downstream views).  Per iteration: local prox-Newton solves, one barrier,
// local projections, one barrier, then the dual update; results do not depend
// on the thread schedule.
AdmmResult admm_fit(const Model& m, const Dataset& ds, const ConstraintSystem& cs,
                    const AdmmOptions& opts = {});

void write_admm_stats_csv(const std::string& path, const std::vector<IterStats>& stats,
                          const FileMeta& meta = {});

// Fixed per-iteration traffic: three block transfers per off-diagonal edge
// (coefficients after each half step, duals after the update).
long long admm_bytes_per_iteration(const Model& m);

struct CentralizedOptions {
  FitObjective objective = FitObjective::Lree;
  BarrierOptions barrier;
};

struct CentralizedResult {
  Vec params;
  double objective = 0.0;
  bool converged = false;
  int centerings = 0;
  int newton_iterations = 0;
  double gap = 0.0;
  std::string message;
};

// Whole-network fit by the log-barrier method over the stacked constraint
// system; the reference the distributed solver is measured against.
CentralizedResult centralized_fit(const Model& m, const Dataset& ds, const ConstraintSystem& cs,
                                  const CentralizedOptions& opts = {});

// Identity e plus a small uniform coefficient on the linear f terms (slack
// bounds at twice that), strictly inside every inequality the model sets
// generate.  margin must match the constraint system being targeted.
Vec strict_interior_params(const Model& m, double margin = 1e-6);

// One damped-Newton prox solve min J(w) + (rho/2)|w - center|^2; warm must be
// in the objective domain.
Vec prox_newton(const LocalObjective& obj, const Vec& center, double rho, const Vec& warm,
                double grad_tol = 1e-9, int max_iters = 100);

}  // namespace netid
