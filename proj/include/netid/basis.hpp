#pragma once

#include <vector>

namespace netid {

// Multivariate monomial features.  Terms are ordered by total degree
// (constant first when present), and within a degree lexicographically with
// the earlier variable carrying the higher exponent: for two variables and
// degree 2 the order is 1, x, y, x^2, xy, y^2.
//
// Evaluation builds per-variable power tables by repeated multiplication, so
// no pow() calls appear in inner loops.
class MonomialBasis {
 public:
  // degree >= 0; degree 0 yields only the constant term (or nothing).
  // num_vars 0 degenerates the same way.
  MonomialBasis(int num_vars, int degree, bool include_constant);

  int size() const { return static_cast<int>(exps_.size()) / std::max(nv_, 1); }
  int num_vars() const { return nv_; }
  int degree() const { return deg_; }
  bool has_constant() const { return constant_; }

  // exponent of variable v in term t
  int exponent(int t, int v) const { return exps_[static_cast<std::size_t>(t) * nv_ + v]; }

  // out must hold size() doubles
  void eval(const double* args, double* out) const;
  // derivative of every term with respect to args[var]
  void eval_derivative(const double* args, int var, double* out) const;

  // index of the constant term, -1 when absent
  int constant_index() const { return constant_ ? 0 : -1; }
  // index of the degree-1 term in variable v, -1 when absent
  int linear_index(int v) const { return linear_index_[v]; }

 private:
  int nv_;
  int deg_;
  bool constant_;
  std::vector<int> exps_;  // size() x nv_, row-major
  std::vector<int> linear_index_;
};

// number of monomials in `vars` variables with total degree in [1, degree],
// plus one when the constant is included
long basis_term_count(int vars, int degree, bool include_constant);

}  // namespace netid
