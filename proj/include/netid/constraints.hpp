#pragma once

#include <string>
#include <vector>

#include "netid/model.hpp"

namespace netid {

// One sample matrix per node; each row is a point (x^i, u^i) at which the
// pointwise constraints are imposed.
using SampleSet = std::vector<Mat>;

SampleSet samples_from_dataset(const Model& m, const Dataset& ds);
// uniform grid over the per-node empirical bounding box, inflated on both
// sides by the given fraction of the span
SampleSet grid_samples(const Model& m, const Dataset& ds, int points_per_dim,
                       double inflate = 0.1);
// uniform grid over the same [lo, hi] box in every variable of every node
SampleSet box_samples(const Model& m, double lo, double hi, int points_per_dim);
SampleSet merge_samples(SampleSet a, const SampleSet& b);

enum class RowKind : std::uint8_t {
  WellPosed,     // E_kk(s) >= (1 + delta)/2
  NonnegState,   // F entries >= 0
  NonnegInput,   // K entries >= 0
  ContractCol,   // alpha*E_cc(s) - column sum of F >= margin
  SlackUpper,    // F - S <= 0
  SlackLower,    // -F - S <= 0
  SlackCol,      // alpha*E_cc(s) - column sum of S >= margin
  BiasZero,      // constant coefficients pinned to zero (equality)
};
const char* row_kind_name(RowKind k);

struct RowInfo {
  RowKind kind;
  int sample = -1;  // -1 for sample-independent rows
  int r = -1;       // coordinate / F-row, meaning depends on kind
  int c = -1;       // F-column / input index
};

// Constraints on the downstream view of one node.  Columns of G and A are
// indexed by `vars`, the node's downstream parameter indices in layout
// order.  Identical rows arising from different samples (always the case for
// affine models) are stored once.
struct NodeConstraints {
  int node = 0;
  std::vector<int> vars;
  Mat G;
  Vec h;
  Mat A;
  Vec b;
  std::vector<RowInfo> ineq_info;
  std::vector<RowInfo> eq_info;
};

struct ConstraintSystem {
  double margin = 0.0;  // applied to the contraction column rows
  std::vector<NodeConstraints> node;
  SampleSet samples;
  int total_inequalities() const;
  int total_equalities() const;
};

// Emits, per node i and sample s in S_i: well-posedness rows always; F/K
// nonnegativity under `monotone`; contraction column rows under
// `contract_l1`; slack bound and slack column rows under `slack_contract`;
// zero-bias equalities under `positive` when the basis carries a constant.
// Every row touches only the downstream view of its node, which is what lets
// the projection step run per node.
ConstraintSystem build_constraints(const Model& m, SampleSet samples, double margin = 1e-6);

struct FeasibilityReport {
  double max_violation = 0.0;  // positive part of G*theta - h
  double max_equality = 0.0;   // |A*theta - b|
  struct Item {
    int node;
    int row;
    bool equality;
    double violation;
    RowKind kind;
  };
  std::vector<Item> items;  // rows beyond tol, worst first, capped
  double worst() const { return std::max(max_violation, max_equality); }
  bool feasible(double tol) const { return worst() <= tol; }
};

FeasibilityReport check_feasibility(const ConstraintSystem& cs, const Vec& theta,
                                    double tol = 1e-9);

// sparse triplet export: node,system,row,kind,rhs,col,coef
void export_constraints_csv(const ConstraintSystem& cs, const std::string& path);

// Realization of a nonnegative Schur-stable A as a monotone contracting
// implicit pair: z solves (I - A')z = 1, giving z >= 1, E = diag(z),
// F = E*A, and column margins 1'(E - F) = 1' exactly.  Feasible in the
// ml1 model set for any alpha >= alpha_min.
struct LinearRealization {
  bool ok = false;
  std::string message;
  Vec z;
  Vec E_diag;
  Mat F;
  double alpha_min = 0.0;  // smallest rate with nonnegative column margins
};

// eps in (0, 1]: required column margin 1'(E - F) >= eps, reported in
// `message` if violated (never rescaled silently).
LinearRealization construct_feasible_linear(const Mat& A, double eps);

}  // namespace netid
