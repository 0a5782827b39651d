#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "netid/model.hpp"
#include "netid/rng.hpp"

namespace netid {

struct EvalReport {
  double nse = 0.0;
  double nee = 0.0;
  bool unstable = false;
  bool negative_states = false;
  double contraction_ratio_max = 0.0;
};

struct NeeResult {
  double value = 0.0;
  bool oracle_norm_zero = false;  // denominator vanished, value undefined
};

// Monte-Carlo |a - a*|^2 / |a*|^2 for the explicit one-step maps, sampling
// (x, u) uniformly on [0,1]^{n+m} and holding the input across the step.
NeeResult nee(const Model& model, const Vec& theta, const Model& oracle,
              const Vec& oracle_theta, int n_mc = 10000, std::uint64_t seed = 1);

struct NseResult {
  double value = 0.0;   // infinity when the rollout diverged
  bool unstable = false;
  bool negative_states = false;  // rollout dipped below -1e-9 somewhere
};

// Free-running simulation error: roll the model from the first data row under
// the recorded inputs and compare every later row.
NseResult nse(const Model& model, const Vec& theta, const Dataset& ds);

struct AuditResult {
  int violations = 0;
  int diverged = 0;
};

// Ordered trajectory pairs (x_a >= x_b componentwise, shared input sequence)
// drawn from [lo, hi]; a pair counts as violating when any coordinate drops
// more than 1e-9 below its partner at any step.
AuditResult audit_monotone(const Model& model, const Vec& theta, int n_pairs = 100,
                           std::uint64_t seed = 1, double lo = 0.0, double hi = 1.0,
                           int horizon = 20);

// Nonnegative starts and inputs from [0, hi]; counts trajectories that dip
// below -1e-9 anywhere.
AuditResult audit_positive(const Model& model, const Vec& theta, int n_trials = 100,
                           std::uint64_t seed = 1, double hi = 1.0, int horizon = 20);

// Largest fitted geometric decay rate sup_{t >= t_min} (|dx_t|_1/|dx_0|_1)^{1/t}
// over trajectory pairs sharing inputs; infinity when any pair diverges.
double audit_contraction(const Model& model, const Vec& theta, int n_pairs = 100,
                         int horizon = 50, std::uint64_t seed = 1, double lo = 0.0,
                         double hi = 1.0, int t_min = 5);

// Appends one row (creating the header when the file is new):
// model_id,set_id,nse,unstable,negative,nee
void append_eval_csv(const std::string& path, const std::string& model_id,
                     const std::string& set_id, const EvalReport& report);

double fit_loglog_slope(const std::vector<double>& sizes, const std::vector<double>& times);

}  // namespace netid
