#pragma once

// Dense convex QP machinery. Two pieces:
//   * KktFactor — a reusable factorization of the saddle-point matrix
//     [[H, A'], [A, 0]] for equality-constrained subproblems with many
//     right-hand sides.
//   * BoxQpSolver — an operator-splitting (ADMM) solver for
//     min 1/2 x'Hx + q'x  s.t.  A x = b,  lb <= G x <= ub,
//     with a structure factorization cached across solves. G defaults to the
//     identity (plain per-variable bounds).

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "types.hpp"

namespace deeplcc {

// min 1/2 x'Hx + q'x  s.t.  A x = b. H must be symmetric PSD.
struct EqQp {
  Mat H;
  Vec q;
  Mat A;
  Vec b;

  void validate() const {
    const int n = static_cast<int>(H.rows());
    if (H.cols() != n || q.size() != n) throw std::invalid_argument("EqQp: H/q dimensions");
    const double scale = H.norm();
    if ((H - H.transpose()).norm() > 1e-10 * std::max(scale, 1.0)) {
      throw std::invalid_argument("EqQp: H is not symmetric");
    }
    if (A.size() > 0 && (A.cols() != n || b.size() != A.rows())) {
      throw std::invalid_argument("EqQp: A/b dimensions");
    }
  }
};

class KktFactor {
 public:
  // Factorizes [[H + reg I, A'], [A, -reg I]]. When reg = 0 and the plain
  // matrix is singular, retries once with reg = 1e-9 before giving up.
  KktFactor(const Mat& H, const Mat& A, double reg = 0.0)
      : n_(static_cast<int>(H.rows())), m_(static_cast<int>(A.rows())) {
    if (H.cols() != n_ || (m_ > 0 && A.cols() != n_)) {
      throw std::invalid_argument("KktFactor: dimension mismatch");
    }
    if (reg < 0.0) throw std::invalid_argument("KktFactor: reg must be nonnegative");
    if (!try_factorize(H, A, reg)) {
      if (reg == 0.0 && try_factorize(H, A, 1e-9)) return;
      throw std::runtime_error("KktFactor: KKT matrix is structurally singular");
    }
  }

  int primal_dim() const { return n_; }
  int dual_dim() const { return m_; }
  double reg() const { return reg_; }

  // Solves K w = rhs, refining iteratively until the residual reaches the
  // backward-stable level (well-conditioned systems stop after one pass).
  Vec solve(const Vec& rhs) const {
    if (rhs.size() != n_ + m_) throw std::invalid_argument("KktFactor::solve: rhs size");
    Vec w = lu_.solve(rhs);
    for (int pass = 0; pass < 3; ++pass) {
      const Vec r = rhs - kkt_ * w;
      if (r.norm() <= 1e-13 * (rhs.norm() + kkt_norm_ * w.norm())) break;
      w += lu_.solve(r);
    }
    return w;
  }

  // Minimizer of 1/2 x'Hx + q'x s.t. Ax = b (the dual part is discarded).
  Vec solve_eq(const Vec& q, const Vec& b) const {
    Vec rhs(n_ + m_);
    rhs.head(n_) = -q;
    rhs.tail(m_) = b;
    return solve(rhs).head(n_);
  }

 private:
  bool try_factorize(const Mat& H, const Mat& A, double reg) {
    kkt_.setZero(n_ + m_, n_ + m_);
    kkt_.topLeftCorner(n_, n_) = H + reg * Mat::Identity(n_, n_);
    if (m_ > 0) {
      kkt_.topRightCorner(n_, m_) = A.transpose();
      kkt_.bottomLeftCorner(m_, n_) = A;
      kkt_.bottomRightCorner(m_, m_) = -reg * Mat::Identity(m_, m_);
    }
    lu_.compute(kkt_);
    const Vec d = lu_.matrixLU().diagonal().cwiseAbs();
    if (!(d.minCoeff() > 0.0)) return false;  // exact zero pivot or NaN
    // semantic check: a refined probe solve must reach a backward-stable residual
    const Vec probe = Vec::Ones(n_ + m_);
    Vec w = lu_.solve(probe);
    w += lu_.solve(probe - kkt_ * w);
    const double scale = 1.0 + kkt_.norm() * w.norm();
    const double rres = (kkt_ * w - probe).norm() / scale;
    if (!std::isfinite(rres) || rres > 1e-10) return false;
    reg_ = reg;
    kkt_norm_ = kkt_.norm();
    return true;
  }

  int n_, m_;
  double reg_ = 0.0;
  double kkt_norm_ = 0.0;
  Mat kkt_;
  Eigen::PartialPivLU<Mat> lu_;
};

inline KktFactor factor_kkt(const Mat& H, const Mat& A, double reg = 0.0) {
  return KktFactor(H, A, reg);
}

// Equality-constrained QP plus bounds on G x (rows of G may be any linear
// functionals; an empty G means bounds directly on x). Entries of lb/ub may
// be +-infinity.
struct BoxQp {
  EqQp eq;
  Mat G;
  Vec lb, ub;

  void validate() const {
    eq.validate();
    const int n = static_cast<int>(eq.H.rows());
    const int r = G.size() > 0 ? static_cast<int>(G.rows()) : n;
    if (G.size() > 0 && G.cols() != n) throw std::invalid_argument("BoxQp: G column count");
    if (lb.size() != r || ub.size() != r) throw std::invalid_argument("BoxQp: bound sizes");
    for (int i = 0; i < r; ++i) {
      if (!(lb(i) <= ub(i))) throw std::invalid_argument("BoxQp: lb > ub");
    }
  }
};

enum class QpStatus { Converged, MaxIterations, PrimalInfeasible };

struct QpSettings {
  double tol = 1e-3;
  int max_iter = 4000;
  double rho = 0.1;
  double rho_eq_scale = 1e3;
  double sigma = 1e-6;
  double relax = 1.6;
  int check_every = 5;
};

struct QpWarmState {
  Vec x, z, y;
};

struct BoxQpResult {
  Vec x;
  Vec bound_values;  // projected values of G x; exactly inside [lb, ub]
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  double r_pri = 0.0, r_dual = 0.0;
  double objective = 0.0;
  QpWarmState warm;  // final iterates, reusable as a warm start
};

class BoxQpSolver {
 public:
  BoxQpSolver(const Mat& H, const Mat& A, const Mat& G, QpSettings settings = {})
      : settings_(settings), H_(H), n_(static_cast<int>(H.rows())),
        me_(static_cast<int>(A.rows())),
        identity_bounds_(G.size() == 0) {
    const Mat Gm = identity_bounds_ ? Mat(Mat::Identity(n_, n_)) : G;
    mg_ = static_cast<int>(Gm.rows());
    C_.resize(me_ + mg_, n_);
    if (me_ > 0) C_.topRows(me_) = A;
    C_.bottomRows(mg_) = Gm;

    equilibrate();
    Hs_ = cost_scale_ * (d_.asDiagonal() * H_ * d_.asDiagonal());
    Cs_ = e_.asDiagonal() * C_ * d_.asDiagonal();

    rho_.resize(me_ + mg_);
    rho_.head(me_).setConstant(settings_.rho * settings_.rho_eq_scale);
    rho_.tail(mg_).setConstant(settings_.rho);
    Mat M = Hs_ + settings_.sigma * Mat::Identity(n_, n_) +
            Cs_.transpose() * rho_.asDiagonal() * Cs_;
    llt_.compute(M);
    if (llt_.info() != Eigen::Success) {
      throw std::runtime_error("BoxQpSolver: cost matrix is not positive semidefinite");
    }
  }

  // One solve for the given linear term, equality rhs and bounds. The cached
  // equilibration and factorization only depend on (H, A, G, rho, sigma);
  // iterations run in the scaled space, terminations are checked on the
  // original problem.
  BoxQpResult solve(const Vec& q, const Vec& b, const Vec& lb, const Vec& ub,
                    const QpWarmState* warm = nullptr) const {
    if (q.size() != n_ || b.size() != me_ || lb.size() != mg_ || ub.size() != mg_) {
      throw std::invalid_argument("BoxQpSolver::solve: dimension mismatch");
    }
    Vec lo(me_ + mg_), hi(me_ + mg_);
    lo.head(me_) = b;
    hi.head(me_) = b;
    lo.tail(mg_) = lb;
    hi.tail(mg_) = ub;
    const Vec qs = cost_scale_ * d_.cwiseProduct(q);
    const Vec los = e_.cwiseProduct(lo);
    const Vec his = e_.cwiseProduct(hi);
    double bound_scale = 1.0;
    for (int i = 0; i < lo.size(); ++i) {
      if (std::isfinite(lo(i))) bound_scale = std::max(bound_scale, std::abs(lo(i)));
      if (std::isfinite(hi(i))) bound_scale = std::max(bound_scale, std::abs(hi(i)));
    }

    Vec x = warm && warm->x.size() == n_ ? Vec(warm->x.cwiseQuotient(d_)) : Vec::Zero(n_);
    Vec z = warm && warm->z.size() == me_ + mg_ ? Vec(e_.cwiseProduct(warm->z))
                                                : Vec(Cs_ * x);
    Vec y = warm && warm->y.size() == me_ + mg_
                ? Vec(cost_scale_ * warm->y.cwiseQuotient(e_))
                : Vec::Zero(me_ + mg_);
    z = clamp(z, los, his);

    BoxQpResult res;
    Vec y_prev_check = y;
    int infeasible_streak = 0;
    const double a = settings_.relax;
    int k = 0;
    for (; k < settings_.max_iter; ++k) {
      const Vec rhs = settings_.sigma * x - qs + Cs_.transpose() * (rho_.cwiseProduct(z) - y);
      const Vec xt = llt_.solve(rhs);
      const Vec zc = Cs_ * xt;
      x = a * xt + (1.0 - a) * x;
      const Vec zmix = a * zc + (1.0 - a) * z;
      const Vec z_new = clamp(Vec(zmix + y.cwiseQuotient(rho_)), los, his);
      y += rho_.cwiseProduct(zmix - z_new);
      z = z_new;

      if ((k + 1) % settings_.check_every == 0 || k + 1 == settings_.max_iter) {
        // unscaled residuals
        const Vec cx_u = (Cs_ * x).cwiseQuotient(e_);
        const Vec z_u = z.cwiseQuotient(e_);
        const Vec dual_u =
            (Hs_ * x + qs + Cs_.transpose() * y).cwiseQuotient(d_) / cost_scale_;
        const Vec hx_u = (Hs_ * x).cwiseQuotient(d_) / cost_scale_;
        const Vec cty_u = (Cs_.transpose() * y).cwiseQuotient(d_) / cost_scale_;
        res.r_pri = (cx_u - z_u).lpNorm<Eigen::Infinity>();
        res.r_dual = dual_u.lpNorm<Eigen::Infinity>();
        const double s_pri =
            std::max(cx_u.lpNorm<Eigen::Infinity>(), z_u.lpNorm<Eigen::Infinity>());
        const double s_dual = std::max({hx_u.lpNorm<Eigen::Infinity>(),
                                        q.lpNorm<Eigen::Infinity>(),
                                        cty_u.lpNorm<Eigen::Infinity>()});
        const double tol = settings_.tol;
        if (res.r_pri <= tol * (1.0 + s_pri) && res.r_dual <= tol * (1.0 + s_dual)) {
          res.status = QpStatus::Converged;
          ++k;
          break;
        }
        // the magnitude gate separates genuine dual divergence from slow
        // drift along redundant (consistent) equality rows
        const Vec dy_u = e_.cwiseProduct(y - y_prev_check) / cost_scale_;
        if (dy_u.lpNorm<Eigen::Infinity>() > 1e-7 * bound_scale &&
            primal_infeasibility_certificate(dy_u, lo, hi)) {
          if (++infeasible_streak >= 2) {
            res.status = QpStatus::PrimalInfeasible;
            ++k;
            break;
          }
        } else {
          infeasible_streak = 0;
        }
        y_prev_check = y;
      }
    }
    res.iterations = k;
    Vec x_u = d_.cwiseProduct(x);
    Vec z_u = z.cwiseQuotient(e_);
    const Vec y_u = e_.cwiseProduct(y) / cost_scale_;
    if (identity_bounds_) {
      x_u = clamp(x_u, lb, ub);
      res.bound_values = x_u;
    } else {
      res.bound_values = z_u.tail(mg_);
    }
    res.x = x_u;
    res.objective = 0.5 * x_u.dot(H_ * x_u) + q.dot(x_u);
    res.warm = QpWarmState{x_u, z_u, y_u};
    return res;
  }

  int n() const { return n_; }
  int eq_rows() const { return me_; }
  int bound_rows() const { return mg_; }

 private:
  // Ruiz equilibration of [[H, C'], [C, 0]] plus a curvature rescaling of the
  // cost; tames the orders-of-magnitude spread between the regularization
  // block and the data rows.
  void equilibrate() {
    const int mc = me_ + mg_;
    d_ = Vec::Ones(n_);
    e_ = Vec::Ones(mc);
    for (int pass = 0; pass < 10; ++pass) {
      for (int j = 0; j < n_; ++j) {
        double r = 0.0;
        for (int k2 = 0; k2 < n_; ++k2) r = std::max(r, std::abs(H_(j, k2)) * d_(k2));
        for (int i = 0; i < mc; ++i) r = std::max(r, std::abs(C_(i, j)) * e_(i));
        r *= d_(j);
        if (r > 1e-10) d_(j) /= std::sqrt(r);
      }
      for (int i = 0; i < mc; ++i) {
        double r = 0.0;
        for (int j = 0; j < n_; ++j) r = std::max(r, std::abs(C_(i, j)) * d_(j));
        r *= e_(i);
        if (r > 1e-10) e_(i) /= std::sqrt(r);
      }
    }
    double mean_curv = 0.0;
    for (int j = 0; j < n_; ++j) {
      double col = 0.0;
      for (int k2 = 0; k2 < n_; ++k2) {
        col = std::max(col, std::abs(H_(j, k2)) * d_(j) * d_(k2));
      }
      mean_curv += col;
    }
    mean_curv /= std::max(1, n_);
    cost_scale_ = 1.0 / std::max(1e-3, mean_curv);
  }

  // Farkas-style certificate: a dual direction dy with C'dy ~ 0 whose support
  // function over the constraint box is strictly negative proves there is no
  // x with lo <= Cx <= hi.
  bool primal_infeasibility_certificate(const Vec& dy, const Vec& lo, const Vec& hi) const {
    const double dn = dy.lpNorm<Eigen::Infinity>();
    if (!(dn > 1e-12)) return false;
    if ((C_.transpose() * dy).lpNorm<Eigen::Infinity>() > 1e-8 * dn) return false;
    double support = 0.0;
    for (int i = 0; i < dy.size(); ++i) {
      const double d = dy(i);
      if (d > 1e-14 * dn) {
        if (std::isinf(hi(i))) return false;
        support += hi(i) * d;
      } else if (d < -1e-14 * dn) {
        if (std::isinf(lo(i))) return false;
        support += lo(i) * d;
      }
    }
    return support < -1e-6 * dn;
  }

  QpSettings settings_;
  Mat H_;
  int n_, me_, mg_ = 0;
  bool identity_bounds_;
  Mat C_;
  Mat Hs_, Cs_;       // equilibrated copies used by the iteration
  Vec d_, e_;         // variable / constraint-row scalings
  double cost_scale_ = 1.0;
  Vec rho_;
  Eigen::LLT<Mat> llt_;
};

// One-shot convenience wrapper over BoxQpSolver.
inline BoxQpResult solve_box_qp(const BoxQp& prob, double tol = 1e-3, int max_iter = 4000) {
  prob.validate();
  QpSettings s;
  s.tol = tol;
  s.max_iter = max_iter;
  BoxQpSolver solver(prob.eq.H, prob.eq.A, prob.G, s);
  return solver.solve(prob.eq.q, prob.eq.b, prob.lb, prob.ub);
}

}  // namespace deeplcc
