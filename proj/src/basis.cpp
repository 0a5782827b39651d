#include "netid/basis.hpp"

#include <algorithm>
#include <stdexcept>

namespace netid {

namespace {

void enumerate(int remaining, int var, int num_vars, std::vector<int>& current,
               std::vector<int>& out) {
  if (var == num_vars - 1) {
    current[var] = remaining;
    out.insert(out.end(), current.begin(), current.end());
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    current[var] = e;
    enumerate(remaining - e, var + 1, num_vars, current, out);
  }
}

}  // namespace

MonomialBasis::MonomialBasis(int num_vars, int degree, bool include_constant)
    : nv_(num_vars), deg_(degree), constant_(include_constant) {
  if (num_vars < 0 || degree < 0)
    throw std::invalid_argument("MonomialBasis: num_vars and degree must be non-negative");
  if (num_vars == 0) {
    // no variables: the constant is the only representable term
    deg_ = 0;
    nv_ = 1;  // sentinel stride so size() stays well-defined
    if (constant_) exps_.assign(1, 0);
    linear_index_.assign(1, -1);
    return;
  }
  std::vector<int> current(num_vars, 0);
  if (include_constant) exps_.insert(exps_.end(), current.begin(), current.end());
  for (int d = 1; d <= degree; ++d) enumerate(d, 0, num_vars, current, exps_);

  linear_index_.assign(num_vars, -1);
  const int terms = size();
  for (int t = 0; t < terms; ++t) {
    int total = 0;
    for (int v = 0; v < num_vars; ++v) total += exponent(t, v);
    if (total != 1) continue;
    for (int v = 0; v < num_vars; ++v)
      if (exponent(t, v) == 1) linear_index_[v] = t;
  }
}

void MonomialBasis::eval(const double* args, double* out) const {
  const int terms = size();
  if (terms == 0) return;
  // power tables: pw[v * (deg+1) + k] = args[v]^k
  thread_local std::vector<double> pw;
  pw.assign(static_cast<std::size_t>(nv_) * (deg_ + 1), 1.0);
  for (int v = 0; v < nv_; ++v) {
    const double x = (deg_ > 0) ? args[v] : 0.0;
    for (int k = 1; k <= deg_; ++k) pw[v * (deg_ + 1) + k] = pw[v * (deg_ + 1) + k - 1] * x;
  }
  for (int t = 0; t < terms; ++t) {
    double p = 1.0;
    for (int v = 0; v < nv_; ++v) p *= pw[v * (deg_ + 1) + exponent(t, v)];
    out[t] = p;
  }
}

void MonomialBasis::eval_derivative(const double* args, int var, double* out) const {
  const int terms = size();
  if (terms == 0) return;
  if (var < 0 || var >= nv_) throw std::invalid_argument("eval_derivative: bad variable index");
  thread_local std::vector<double> pw;
  pw.assign(static_cast<std::size_t>(nv_) * (deg_ + 1), 1.0);
  for (int v = 0; v < nv_; ++v) {
    const double x = (deg_ > 0) ? args[v] : 0.0;
    for (int k = 1; k <= deg_; ++k) pw[v * (deg_ + 1) + k] = pw[v * (deg_ + 1) + k - 1] * x;
  }
  for (int t = 0; t < terms; ++t) {
    const int e = exponent(t, var);
    if (e == 0) {
      out[t] = 0.0;
      continue;
    }
    double p = static_cast<double>(e) * pw[var * (deg_ + 1) + (e - 1)];
    for (int v = 0; v < nv_; ++v)
      if (v != var) p *= pw[v * (deg_ + 1) + exponent(t, v)];
    out[t] = p;
  }
}

long basis_term_count(int vars, int degree, bool include_constant) {
  if (vars < 0 || degree < 0) throw std::invalid_argument("basis_term_count: negative argument");
  // C(vars + degree, degree) counts all terms of degree <= degree incl. constant
  long total = 1;
  for (int k = 1; k <= degree; ++k) total = total * (vars + k) / k;
  return include_constant ? total : total - 1;
}

}  // namespace netid
