#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netid/basis.hpp"
#include "netid/graph.hpp"

namespace netid {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Networked implicit model
//
//   e^i(x^i_{t+1}, u^i_{t+1}) = sum over upstream j of f^{ij}(x^j_t, u^j_t)
//
// with e, f polynomial in monomial features and linear in the coefficients.
// Coordinate k of e^i depends on states only through x^i_k, which keeps the
// Jacobian of e diagonal and all model-set constraints linear in the
// coefficients.
struct ModelSpec {
  NetworkGraph graph;
  int deg_e = 1;
  int deg_f = 1;
  bool include_bias = false;   // constant terms in e and f

  // model-set flags
  bool monotone = false;       // F, K >= 0 on the sampled region
  bool contract_l1 = false;    // column sums 1'(alpha E - F) >= margin (needs monotone)
  bool slack_contract = false; // |F| <= S with 1'(alpha E - S) >= margin (no sign constraint)
  bool positive = false;       // equilibrium pinned at the origin (bias coefficients zero)

  double alpha = 0.95;         // contraction rate bound
  double delta = 1e-3;         // normalization margin: E_kk >= (1 + delta)/2

  void validate() const;       // throws std::invalid_argument
};

// Shorthands for the constraint combinations used in the experiments.
enum class ModelSet { Unconstrained, Monotone, MonotoneL1, SlackL1 };

void apply_model_set(ModelSpec& spec, ModelSet set);
ModelSet parse_model_set(const std::string& name);  // "u" | "m" | "ml1" | "c"
std::string model_set_name(ModelSet set);

// Placement of one coefficient block inside the flat parameter vector.
// Coefficients are stored row-major: row r occupies
// [offset + r*cols, offset + (r+1)*cols).
struct BlockRef {
  int offset = 0;
  int rows = 0;
  int cols = 0;
  int size() const { return rows * cols; }
  int row_begin(int r) const { return offset + r * cols; }
};

struct ParamLayout {
  int total = 0;
  std::vector<BlockRef> e_block;  // per node

  struct EdgeBlock {
    int source = 0;
    int target = 0;
    BlockRef f;      // rows = n_target, cols = |f basis of source|
    BlockRef slack;  // rows = n_target * n_source when slack_contract, else empty
  };
  std::vector<EdgeBlock> edge;            // ordered by (target, source)
  std::vector<std::vector<int>> incoming; // per node: edge ids with that target
  std::vector<std::vector<int>> outgoing; // per node: edge ids with that source

  // Exact partitions of [0, total): the upstream view of node i holds its
  // e-block plus the blocks of incoming edges; the downstream view holds its
  // e-block plus the blocks of outgoing edges.  Every index appears in
  // exactly one upstream view and exactly one downstream view.
  std::vector<std::vector<int>> upstream_index;
  std::vector<std::vector<int>> downstream_index;
};

// Immutable model structure: validated spec, coefficient layout, and the
// per-node feature bases.  All evaluation entry points are reentrant.
class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const NetworkGraph& graph() const { return spec_.graph; }
  const ParamLayout& layout() const { return layout_; }
  int num_params() const { return layout_.total; }

  // features of e^i_k: arguments (x^i_k, u^i_1 .. u^i_m)
  const MonomialBasis& e_basis(int i) const { return e_bases_[i]; }
  // features of f^{ij} and of the slack bound, keyed by the source node j:
  // arguments (x^j, u^j)
  const MonomialBasis& f_basis(int j) const { return f_bases_[j]; }
  const MonomialBasis& slack_basis(int j) const { return s_bases_[j]; }

  int edge_index(int source, int target) const;  // -1 when the edge is absent

 private:
  ModelSpec spec_;
  ParamLayout layout_;
  std::vector<MonomialBasis> e_bases_;
  std::vector<MonomialBasis> f_bases_;
  std::vector<MonomialBasis> s_bases_;
  std::map<std::pair<int, int>, int> edge_lookup_;
};

// --- evaluation -----------------------------------------------------------

Vec eval_e(const Model& m, const Vec& theta, int i, const Vec& x_i, const Vec& u_i);
// contribution of upstream node j to node i; throws when j is not upstream
Vec eval_f(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j);
// diagonal of the Jacobian of e^i with respect to x^i
Vec eval_E_diag(const Model& m, const Vec& theta, int i, const Vec& x_i, const Vec& u_i);
// Jacobian blocks of f^{ij}; zero when j is not upstream of i
Mat eval_F_block(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j);
Mat eval_K_block(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j);
// slack bound S^{ij}(x_j, u_j), n_i x n_j; only valid when slack_contract
Mat eval_S_block(const Model& m, const Vec& theta, int i, int j, const Vec& x_j, const Vec& u_j);

// --- implicit stepping ----------------------------------------------------

enum class StepStatus { Ok, NoBracket, MaxIterations };

struct StepResult {
  Vec x_next;
  StepStatus status = StepStatus::Ok;
  int fail_node = -1;
  int fail_coord = -1;
  bool ok() const { return status == StepStatus::Ok; }
};

struct StepOptions {
  double residual_tol = 1e-10;
  double bound = 1e6;       // give up when the root bracket would exceed this
  int max_iterations = 200; // per scalar coordinate
};

// Solves e^i_k(x, u_next^i) = sum_j f^{ij}(x_t^j, u_t^j) coordinate-wise.
// Newton starts from the matching coordinate of x_t and falls back to
// bracketed bisection after 20 non-contracting steps; the bracket is expanded
// geometrically from the warm start.
StepResult solve_step(const Model& m, const Vec& theta, const Vec& x_t, const Vec& u_t,
                      const Vec& u_next, const StepOptions& opts = {});

struct SimResult {
  Mat x;                 // same row count as the input matrix; row 0 echoes the seed state
  bool diverged = false; // |x|_inf above opts.bound, or a step failed
  int steps_ok = 0;      // number of valid rows (including the seed row)
  StepStatus status = StepStatus::Ok;
};

// Rolls the model forward from x_init.  u has one row per sample, row 0 being
// the input active at the seed state; row t of the result is produced with
// f(x_{t-1}, u_{t-1}) and e(., u_t).  Rows past a divergence are zero.
SimResult simulate(const Model& m, const Vec& theta, const Vec& x_init, const Mat& u,
                   const StepOptions& opts = {});

// --- data -----------------------------------------------------------------

struct Dataset {
  Mat x;  // T x total_state_dim
  Mat u;  // T x total_input_dim
  int length() const { return static_cast<int>(x.rows()); }
};

// throws on dimension mismatch, non-finite entries, or fewer than 2 samples
void validate_dataset(const NetworkGraph& g, const Dataset& ds);

// --- parameter helpers ------------------------------------------------------

// e(x) = x, f = 0: in the objective domain and in every model set
Vec identity_params(const Model& m);

// Affine fill-in: e^i_k = E_diag_k * x^i_k, f rows from F (state) and K
// (input) blocks read through the graph's global offsets.  Requires the
// graph's edges to cover the sparsity of F and K.
Vec params_from_linear(const Model& m, const Vec& E_diag, const Mat& F, const Mat& K);

}  // namespace netid
