#include "netid/qp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/QR>

namespace netid {

namespace {

constexpr double kDropTol = 1e-10;  // multipliers below -kDropTol leave the working set
constexpr double kStepTol = 1e-12;
constexpr double kWarmTol = 1e-12;
constexpr double kFeasTol = 1e-11;  // returned points must sit inside the polytope

}  // namespace

PolytopeProjector::PolytopeProjector(Mat G, Vec h, Mat A, Vec b, QpOptions opts)
    : G_(std::move(G)), h_(std::move(h)), A_(std::move(A)), b_(std::move(b)), opts_(opts) {
  if (G_.rows() != h_.size()) throw std::invalid_argument("projector: G/h row mismatch");
  if (A_.rows() != b_.size()) throw std::invalid_argument("projector: A/b row mismatch");
  if (G_.rows() > 0 && A_.rows() > 0 && G_.cols() != A_.cols())
    throw std::invalid_argument("projector: G/A column mismatch");
  dim_ = static_cast<int>(std::max(G_.cols(), A_.cols()));
  if (!(opts_.over_relax > 0.0 && opts_.over_relax < 2.0))
    throw std::invalid_argument("projector: relaxation factor must lie in (0, 2)");
  if (opts_.kkt_tol <= 0.0) throw std::invalid_argument("projector: tolerance must be positive");

  // Unit-normalize every row; the polytope is unchanged and the dual
  // coordinate steps then have unit curvature.  A zero inequality row is
  // vacuous when its bound is nonnegative and makes the set empty otherwise.
  for (int i = 0; i < G_.rows(); ++i) {
    const double s = G_.row(i).norm();
    if (s == 0.0) {
      if (h_[i] < -1e-12) throw std::invalid_argument("projector: contradictory zero row");
      h_[i] = std::max(h_[i], 0.0);
      continue;
    }
    G_.row(i) /= s;
    h_[i] /= s;
  }
  for (int i = 0; i < A_.rows(); ++i) {
    const double s = A_.row(i).norm();
    if (s == 0.0) {
      if (std::abs(b_[i]) > 1e-12)
        throw std::invalid_argument("projector: contradictory zero equality row");
      b_[i] = 0.0;
      continue;
    }
    A_.row(i) /= s;
    b_[i] /= s;
  }
}

bool PolytopeProjector::feasible(const Vec& x, double tol) const {
  if (G_.rows() > 0 && ((G_ * x - h_).array() > tol).any()) return false;
  if (A_.rows() > 0 && ((A_ * x - b_).array().abs() > tol).any()) return false;
  return true;
}

double PolytopeProjector::kkt_residual(const Vec& y, const Vec& x, const Vec& lambda,
                                       const Vec& nu) const {
  Vec stat = x - y;
  if (G_.rows() > 0) stat += G_.transpose() * lambda;
  if (A_.rows() > 0) stat += A_.transpose() * nu;
  double r = stat.lpNorm<Eigen::Infinity>();
  if (G_.rows() > 0) {
    const Vec viol = G_ * x - h_;
    r = std::max(r, viol.maxCoeff());
    r = std::max(r, (lambda.array() * viol.array()).abs().maxCoeff());
    r = std::max(r, -lambda.minCoeff());
  }
  if (A_.rows() > 0) r = std::max(r, (A_ * x - b_).lpNorm<Eigen::Infinity>());
  return r;
}

QpResult PolytopeProjector::active_set(const Vec& y, const Vec& x0, const std::vector<int>& w0) {
  QpResult res;
  const int m_in = static_cast<int>(G_.rows());
  const int m_eq = static_cast<int>(A_.rows());
  Vec x = x0;
  std::vector<char> in_w(m_in, 0);
  std::vector<int> W;
  for (int i : w0)
    if (i >= 0 && i < m_in && !in_w[i]) {
      in_w[i] = 1;
      W.push_back(i);
    }
  const int cap = opts_.max_active_set_iters > 0 ? opts_.max_active_set_iters
                                                 : 50 * (m_in + dim_) + 100;
  Vec mu;
  for (int it = 0; it < cap; ++it) {
    res.iterations = it + 1;
    const int mw = m_eq + static_cast<int>(W.size());
    const Vec g = y - x;
    Vec p;
    if (mw == 0) {
      p = g;
      mu.resize(0);
    } else {
      Mat Ct(dim_, mw);
      for (int r = 0; r < m_eq; ++r) Ct.col(r) = A_.row(r).transpose();
      for (std::size_t k = 0; k < W.size(); ++k)
        Ct.col(m_eq + static_cast<int>(k)) = G_.row(W[k]).transpose();
      Eigen::CompleteOrthogonalDecomposition<Mat> cod(Ct);
      mu = cod.solve(g);
      p = g - Ct * mu;
    }
    if (p.lpNorm<Eigen::Infinity>() <= kStepTol * std::max(1.0, g.lpNorm<Eigen::Infinity>())) {
      int drop = -1;
      double most_negative = -kDropTol;
      for (std::size_t k = 0; k < W.size(); ++k)
        if (mu[m_eq + static_cast<int>(k)] < most_negative) {
          most_negative = mu[m_eq + static_cast<int>(k)];
          drop = static_cast<int>(k);
        }
      if (drop < 0) {
        res.x = x;
        res.lambda = Vec::Zero(m_in);
        for (std::size_t k = 0; k < W.size(); ++k)
          res.lambda[W[k]] = std::max(0.0, mu[m_eq + static_cast<int>(k)]);
        res.nu = mu.head(m_eq);
        res.kkt_residual = kkt_residual(y, x, res.lambda, res.nu);
        res.converged = res.kkt_residual <= opts_.kkt_tol;
        return res;
      }
      in_w[W[drop]] = 0;
      W.erase(W.begin() + drop);
      continue;
    }
    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < m_in; ++i) {
      if (in_w[i]) continue;
      const double s = G_.row(i).dot(p);
      if (s <= 1e-13) continue;
      const double slack = std::max(0.0, h_[i] - G_.row(i).dot(x));
      const double a = slack / s;
      if (a < alpha) {
        alpha = a;
        blocking = i;
      }
    }
    x += alpha * p;
    if (blocking >= 0 && alpha < 1.0) {
      W.push_back(blocking);
      in_w[blocking] = 1;
    }
  }
  res.x = x;
  res.lambda = Vec::Zero(m_in);
  res.nu = Vec::Zero(m_eq);
  res.kkt_residual = kkt_residual(y, x, res.lambda, res.nu);
  res.converged = false;
  return res;
}

QpResult PolytopeProjector::splitting(const Vec& y) {
  QpResult res;
  res.used_splitting = true;
  const int m_in = static_cast<int>(G_.rows());
  const int m_eq = static_cast<int>(A_.rows());
  Vec lam = (warm_ && lambda_warm_.size() == m_in) ? lambda_warm_ : Vec::Zero(m_in);
  Vec nu = Vec::Zero(m_eq);
  Vec x = y;
  if (m_in > 0) x -= G_.transpose() * lam;

  const double w = opts_.over_relax;
  for (int sweep = 0; sweep < opts_.max_sweeps; ++sweep) {
    res.iterations = sweep + 1;
    for (int i = 0; i < m_in; ++i) {
      if (G_.row(i).squaredNorm() == 0.0) continue;
      const double r = G_.row(i).dot(x) - h_[i];
      const double nl = std::max(0.0, lam[i] + w * r);
      const double dl = nl - lam[i];
      if (dl != 0.0) {
        x -= dl * G_.row(i).transpose();
        lam[i] = nl;
      }
    }
    for (int i = 0; i < m_eq; ++i) {
      if (A_.row(i).squaredNorm() == 0.0) continue;
      const double r = A_.row(i).dot(x) - b_[i];
      if (r != 0.0) {
        x -= (w * r) * A_.row(i).transpose();
        nu[i] += w * r;
      }
    }
    if (sweep % 50 == 49) {
      // refresh x from the multipliers to cancel incremental drift
      x = y;
      if (m_in > 0) x -= G_.transpose() * lam;
      if (m_eq > 0) x -= A_.transpose() * nu;
    }
    res.kkt_residual = kkt_residual(y, x, lam, nu);
    if (res.kkt_residual <= opts_.kkt_tol && feasible(x, kFeasTol)) break;
  }

  // Snap to the face suggested by the multipliers; an exact equality
  // projection usually lands on the solution to machine precision.
  std::vector<int> active;
  for (int i = 0; i < m_in; ++i)
    if (lam[i] > kWarmTol) active.push_back(i);
  const int mw = m_eq + static_cast<int>(active.size());
  if (mw > 0) {
    Mat C(mw, dim_);
    Vec d(mw);
    for (int r = 0; r < m_eq; ++r) {
      C.row(r) = A_.row(r);
      d[r] = b_[r];
    }
    for (std::size_t k = 0; k < active.size(); ++k) {
      C.row(m_eq + static_cast<int>(k)) = G_.row(active[k]);
      d[m_eq + static_cast<int>(k)] = h_[active[k]];
    }
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(C);
    const Vec z = cod.solve(C * y - d);
    const Vec xs = y - z;
    Eigen::CompleteOrthogonalDecomposition<Mat> codt(Mat(C.transpose()));
    const Vec mu = codt.solve(z);
    bool signs_ok = true;
    for (std::size_t k = 0; k < active.size(); ++k)
      if (mu[m_eq + static_cast<int>(k)] < -kDropTol) signs_ok = false;
    if (signs_ok && feasible(xs, 1e-11)) {
      Vec lam_s = Vec::Zero(m_in);
      for (std::size_t k = 0; k < active.size(); ++k)
        lam_s[active[k]] = std::max(0.0, mu[m_eq + static_cast<int>(k)]);
      const double kkt = kkt_residual(y, xs, lam_s, mu.head(m_eq));
      if (kkt <= res.kkt_residual || kkt <= opts_.kkt_tol) {
        res.x = xs;
        res.lambda = lam_s;
        res.nu = mu.head(m_eq);
        res.kkt_residual = kkt;
        res.converged = kkt <= opts_.kkt_tol;
        return res;
      }
    }
  }
  res.x = x;
  res.lambda = lam;
  res.nu = nu;
  res.converged = res.kkt_residual <= opts_.kkt_tol && feasible(x, kFeasTol);
  return res;
}

void PolytopeProjector::remember(const QpResult& r) {
  warm_ = true;
  x_warm_ = r.x;
  lambda_warm_ = r.lambda;
  set_warm_.clear();
  for (int i = 0; i < r.lambda.size(); ++i)
    if (r.lambda[i] > kWarmTol) set_warm_.push_back(i);
}

QpResult PolytopeProjector::project(const Vec& y) {
  if (dim_ == 0 || (G_.rows() == 0 && A_.rows() == 0)) {
    QpResult res;
    res.x = y;
    res.lambda = Vec::Zero(0);
    res.nu = Vec::Zero(0);
    res.converged = true;
    return res;
  }
  if (y.size() != dim_) throw std::invalid_argument("projector: point size mismatch");

  const bool small = rows() + equalities() <= opts_.active_set_row_limit;
  QpResult res;
  if (small) {
    if (warm_) {
      res = active_set(y, x_warm_, set_warm_);
    } else if (feasible(y, 1e-12)) {
      res = active_set(y, y, {});
    } else {
      res = splitting(y);
      res.fallback_engaged = true;
    }
    if (!res.converged && !res.used_splitting) {
      res = splitting(y);
      res.fallback_engaged = true;
    }
  } else {
    res = splitting(y);
    if (!res.converged && warm_) {
      QpResult retry = active_set(y, x_warm_, set_warm_);
      retry.fallback_engaged = true;
      if (retry.converged || retry.kkt_residual < res.kkt_residual) res = retry;
    }
  }
  if (res.converged) remember(res);
  return res;
}

QpResult PolytopeProjector::project(const Vec& y, const Vec& feasible_start) {
  if (dim_ > 0) {
    if (feasible_start.size() != dim_)
      throw std::invalid_argument("projector: start size mismatch");
    if (!feasible(feasible_start, 1e-9))
      throw std::invalid_argument("projector: supplied start is not feasible");
    if (!warm_) {
      x_warm_ = feasible_start;
      lambda_warm_ = Vec::Zero(G_.rows());
      set_warm_.clear();
      warm_ = true;
    }
  }
  return project(y);
}

QpResult project_polytope(const Mat& G, const Vec& h, const Mat& A, const Vec& b, const Vec& y,
                          const QpOptions& opts) {
  PolytopeProjector p(G, h, A, b, opts);
  return p.project(y);
}

}  // namespace netid
