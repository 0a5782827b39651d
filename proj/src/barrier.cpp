#include "netid/barrier.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/SparseCholesky>

namespace netid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double barrier_value(const SmoothConvex& f, const SpMat& G, const Vec& h, double t, double R,
                     const Vec& x, double* f_out = nullptr) {
  const double fx = f.value(x);
  if (f_out) *f_out = fx;
  if (!std::isfinite(fx)) return kInf;
  double phi = t * fx;
  if (G.rows() > 0) {
    const Vec s = h - G * x;
    if ((s.array() <= 0.0).any()) return kInf;
    phi -= s.array().log().sum();
  }
  for (int i = 0; i < x.size(); ++i) {
    const double lo = R + x[i], hi = R - x[i];
    if (lo <= 0.0 || hi <= 0.0) return kInf;
    phi -= std::log(lo) + std::log(hi);
  }
  return phi;
}

}  // namespace

BarrierResult barrier_minimize(const SmoothConvex& f, const SpMat& G, const Vec& h, const Vec& x0,
                               const BarrierOptions& opts) {
  const int n = f.dim();
  if (x0.size() != n) throw std::invalid_argument("barrier: start size mismatch");
  if (G.rows() > 0 && (G.cols() != n || h.size() != G.rows()))
    throw std::invalid_argument("barrier: constraint size mismatch");
  const double R = opts.box_radius;

  BarrierResult res;
  res.x = x0;
  if (!std::isfinite(barrier_value(f, G, h, 1.0, R, x0))) {
    res.message = "start is not strictly feasible";
    return res;
  }

  const double rows = static_cast<double>(G.rows()) + 2.0 * n;
  double t = opts.t0;
  Vec grad(n), g_f(n), step(n), trial(n), slack;
  std::vector<Triplet> trip;
  const SpMat Gt = G.transpose();

  while (true) {
    ++res.centerings;
    for (int it = 0; it < opts.max_newton; ++it) {
      trip.clear();
      const double fx = f.value_grad_hess(res.x, g_f, trip);
      if (!std::isfinite(fx)) {
        res.message = "objective left its domain";
        return res;
      }
      res.objective = fx;
      for (auto& e : trip) e = Triplet(e.row(), e.col(), t * e.value());
      grad = t * g_f;
      if (G.rows() > 0) {
        slack = h - G * res.x;
        const Vec inv = slack.cwiseInverse();
        grad += Gt * inv;
        // G' diag(1/s^2) G, built column by column through the sparse product
        SpMat D(G.rows(), G.rows());
        D.reserve(Eigen::VectorXi::Ones(G.rows()));
        for (int i = 0; i < G.rows(); ++i) D.insert(i, i) = inv[i] * inv[i];
        SpMat GtDG = Gt * D * G;
        for (int c = 0; c < GtDG.outerSize(); ++c)
          for (SpMat::InnerIterator itr(GtDG, c); itr; ++itr)
            trip.emplace_back(itr.row(), itr.col(), itr.value());
      }
      for (int i = 0; i < n; ++i) {
        const double lo = R + res.x[i], hi = R - res.x[i];
        grad[i] += 1.0 / hi - 1.0 / lo;
        trip.emplace_back(i, i, 1.0 / (hi * hi) + 1.0 / (lo * lo));
      }

      SpMat H(n, n);
      H.setFromTriplets(trip.begin(), trip.end());
      Eigen::SimplicialLDLT<SpMat> ldlt;
      double ridge = 0.0;
      for (int attempt = 0;; ++attempt) {
        ldlt.compute(H);
        if (ldlt.info() == Eigen::Success) {
          step = ldlt.solve(-grad);
          if (step.allFinite()) break;
        }
        if (attempt >= 3) {
          res.message = "newton system could not be factored";
          return res;
        }
        ridge = ridge == 0.0 ? 1e-10 : ridge * 100.0;
        SpMat I(n, n);
        I.setIdentity();
        H = H + ridge * I;
      }

      const double decrement2 = -grad.dot(step);
      ++res.newton_iterations;
      if (decrement2 * 0.5 <= opts.newton_tol) break;

      const double phi0 = barrier_value(f, G, h, t, R, res.x);
      double a = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        trial = res.x + a * step;
        const double phi = barrier_value(f, G, h, t, R, trial);
        if (phi <= phi0 - 0.25 * a * decrement2) break;
        a *= 0.5;
        if (ls == 59) a = 0.0;
      }
      if (a == 0.0) break;  // no progress possible at this accuracy
      res.x += a * step;
    }

    res.gap = rows / t;
    if (res.gap <= opts.gap_tol) {
      res.converged = true;
      res.objective = f.value(res.x);
      return res;
    }
    t *= opts.mu;
  }
}

namespace {

// objective (x, s) -> s for the phase-1 problem
class SlackObjective final : public SmoothConvex {
 public:
  explicit SlackObjective(int n) : n_(n) {}
  int dim() const override { return n_ + 1; }
  double value(const Vec& x) const override { return x[n_]; }
  double value_grad_hess(const Vec& x, Vec& grad, std::vector<Triplet>&) const override {
    grad = Vec::Zero(n_ + 1);
    grad[n_] = 1.0;
    return x[n_];
  }

 private:
  int n_;
};

}  // namespace

Phase1Result max_slack_point(const SpMat& G, const Vec& h, const BarrierOptions& opts) {
  Phase1Result out;
  const int n = static_cast<int>(G.cols());
  if (G.rows() == 0) {
    out.ok = true;
    out.x = Vec::Zero(n);
    out.margin = kInf;
    return out;
  }

  SpMat Ge(G.rows(), n + 1);
  std::vector<Triplet> trip;
  trip.reserve(G.nonZeros() + G.rows());
  for (int c = 0; c < G.outerSize(); ++c)
    for (SpMat::InnerIterator it(G, c); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  for (int r = 0; r < G.rows(); ++r) trip.emplace_back(r, n, -1.0);
  Ge.setFromTriplets(trip.begin(), trip.end());

  Vec x0 = Vec::Zero(n + 1);
  x0[n] = std::max(0.0, -h.minCoeff()) + 1.0;
  if (x0[n] >= opts.box_radius) {
    out.x = Vec::Zero(n);
    return out;
  }

  BarrierOptions o = opts;
  o.gap_tol = std::max(opts.gap_tol, 1e-6);
  SlackObjective obj(n);
  BarrierResult r = barrier_minimize(obj, Ge, h, x0, o);
  out.x = r.x.head(n);
  const Vec slack = h - G * out.x;
  out.margin = slack.minCoeff();
  out.ok = r.converged && out.margin > 0.0;
  return out;
}

}  // namespace netid
