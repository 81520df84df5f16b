#pragma once

// Centralized data-driven predictive control over the whole chain: one Hankel
// representation of the full system, slack-regularized tracking cost, and a
// receding-horizon controller with a cached structure factorization.

#include <chrono>
#include <optional>
#include <sstream>

#include "cooperative.hpp"
#include "hankel.hpp"
#include "partition.hpp"
#include "qp.hpp"
#include "types.hpp"

namespace deeplcc {

struct CentralWeights {
  double w_v = 1.0;
  double w_s = 0.5;
  double w_u = 0.1;
  double lambda_g = 10.0;
  double lambda_y = 1e4;
};

// CAV-spacing selector over the horizon for the stacked chain output.
inline Mat chain_spacing_selector(const PartitionLayout& layout, int horizon) {
  const int ny = layout.y_dim_total();
  const int n = layout.n_cav();
  Mat sel = Mat::Zero(horizon * n, horizon * ny);
  for (int k = 0; k < horizon; ++k) {
    for (int i = 0; i < n; ++i) {
      sel(k * n + i, k * ny + layout.y_offset(i) + layout.hdv_counts[i] + 1) = 1.0;
    }
  }
  return sel;
}

inline Vec chain_output_weight(const PartitionLayout& layout, double w_v, double w_s) {
  Vec d(layout.y_dim_total());
  for (int i = 0; i < layout.n_cav(); ++i) {
    d.segment(layout.y_offset(i), layout.y_dim(i)) =
        output_weight_one_step(layout.hdv_counts[i], w_v, w_s);
  }
  return d;
}

// The slack on the past-output rows is eliminated algebraically: it only
// appears as Y_p g - y_ini in the cost, so the decision variable is g alone
// with equality rows for the past inputs/references and the future reference
// estimate (zero), and boxes on the predicted inputs and CAV spacing errors.
struct CentralProblem {
  PartitionLayout layout;
  HankelBlocks blocks;
  CentralWeights weights;
  Bounds bounds;

  Mat cost_quad;   // lambda_g I + lambda_y Y_p'Y_p + Y_f'Qbar Y_f + U_f'Rbar U_f
  Mat eq_mat;      // [U_p; E_p; E_f]
  Mat bound_mat;   // [U_f; P Y_f]
  Vec bound_lb, bound_ub;

  int n_cav() const { return layout.n_cav(); }
  int horizon() const { return blocks.horizon; }

  Vec linear_term(const Vec& y_ini) const {
    return -weights.lambda_y * (blocks.y_past.transpose() * y_ini);
  }
  Vec eq_rhs(const Vec& u_ini, const Vec& eps_ini) const {
    Vec b(eq_mat.rows());
    b.head(u_ini.size()) = u_ini;
    b.segment(u_ini.size(), eps_ini.size()) = eps_ini;
    b.tail(blocks.horizon).setZero();
    return b;
  }
  double cost_const(const Vec& y_ini) const {
    return weights.lambda_y * y_ini.squaredNorm();
  }

  BoxQp assemble(const Vec& u_ini, const Vec& eps_ini, const Vec& y_ini) const {
    BoxQp qp;
    qp.eq.H = 2.0 * cost_quad;
    qp.eq.q = 2.0 * linear_term(y_ini);
    qp.eq.A = eq_mat;
    qp.eq.b = eq_rhs(u_ini, eps_ini);
    qp.G = bound_mat;
    qp.lb = bound_lb;
    qp.ub = bound_ub;
    return qp;
  }
};

inline CentralProblem build_central_problem(const PartitionLayout& layout,
                                            const HankelBlocks& blocks,
                                            const CentralWeights& w, const Bounds& bounds) {
  layout.validate();
  if (blocks.u_dim() != layout.n_cav() || blocks.y_dim() != layout.y_dim_total()) {
    throw std::invalid_argument("build_central_problem: blocks do not match layout");
  }
  CentralProblem p;
  p.layout = layout;
  p.blocks = blocks;
  p.weights = w;
  p.bounds = bounds;

  const int n = layout.n_cav();
  const int horizon = blocks.horizon;
  const Vec qbar = replicate_diag(chain_output_weight(layout, w.w_v, w.w_s), horizon);
  p.cost_quad = blocks.y_future.transpose() * qbar.asDiagonal() * blocks.y_future;
  p.cost_quad += w.w_u * blocks.u_future.transpose() * blocks.u_future;
  p.cost_quad += w.lambda_g * Mat::Identity(blocks.g_dim, blocks.g_dim);
  p.cost_quad += w.lambda_y * blocks.y_past.transpose() * blocks.y_past;

  p.eq_mat.resize(blocks.u_past.rows() + blocks.e_past.rows() + blocks.e_future.rows(),
                  blocks.g_dim);
  p.eq_mat.topRows(blocks.u_past.rows()) = blocks.u_past;
  p.eq_mat.middleRows(blocks.u_past.rows(), blocks.e_past.rows()) = blocks.e_past;
  p.eq_mat.bottomRows(blocks.e_future.rows()) = blocks.e_future;

  const Mat spacing_sel = chain_spacing_selector(layout, horizon);
  p.bound_mat.resize(blocks.u_future.rows() + spacing_sel.rows(), blocks.g_dim);
  p.bound_mat.topRows(blocks.u_future.rows()) = blocks.u_future;
  p.bound_mat.bottomRows(spacing_sel.rows()) = spacing_sel * blocks.y_future;
  p.bound_lb.resize(p.bound_mat.rows());
  p.bound_ub.resize(p.bound_mat.rows());
  p.bound_lb.head(horizon * n).setConstant(bounds.a_min);
  p.bound_ub.head(horizon * n).setConstant(bounds.a_max);
  p.bound_lb.tail(horizon * n).setConstant(bounds.s_err_min);
  p.bound_ub.tail(horizon * n).setConstant(bounds.s_err_max);
  return p;
}

// The noise-free centralized formulation: past outputs as hard rows, no
// regularization (the comparator in the equivalence analysis).
inline BoxQp assemble_central_linear(const PartitionLayout& layout, const HankelBlocks& blocks,
                                     double w_v, double w_s, double w_u, const Bounds& bounds,
                                     const Vec& u_ini, const Vec& eps_ini, const Vec& y_ini) {
  const int horizon = blocks.horizon;
  const int n = layout.n_cav();
  BoxQp qp;
  const Vec qbar = replicate_diag(chain_output_weight(layout, w_v, w_s), horizon);
  Mat quad = blocks.y_future.transpose() * qbar.asDiagonal() * blocks.y_future;
  quad += w_u * blocks.u_future.transpose() * blocks.u_future;
  qp.eq.H = 2.0 * quad;
  qp.eq.q = Vec::Zero(blocks.g_dim);

  const int rows_up = static_cast<int>(blocks.u_past.rows());
  const int rows_ep = static_cast<int>(blocks.e_past.rows());
  const int rows_yp = static_cast<int>(blocks.y_past.rows());
  const int rows_ef = static_cast<int>(blocks.e_future.rows());
  qp.eq.A.resize(rows_up + rows_ep + rows_yp + rows_ef, blocks.g_dim);
  qp.eq.b.resize(qp.eq.A.rows());
  qp.eq.A.topRows(rows_up) = blocks.u_past;
  qp.eq.b.head(rows_up) = u_ini;
  qp.eq.A.middleRows(rows_up, rows_ep) = blocks.e_past;
  qp.eq.b.segment(rows_up, rows_ep) = eps_ini;
  qp.eq.A.middleRows(rows_up + rows_ep, rows_yp) = blocks.y_past;
  qp.eq.b.segment(rows_up + rows_ep, rows_yp) = y_ini;
  qp.eq.A.bottomRows(rows_ef) = blocks.e_future;
  qp.eq.b.tail(rows_ef).setZero();

  const Mat spacing_sel = chain_spacing_selector(layout, horizon);
  qp.G.resize(blocks.u_future.rows() + spacing_sel.rows(), blocks.g_dim);
  qp.G.topRows(blocks.u_future.rows()) = blocks.u_future;
  qp.G.bottomRows(spacing_sel.rows()) = spacing_sel * blocks.y_future;
  qp.lb.resize(qp.G.rows());
  qp.ub.resize(qp.G.rows());
  qp.lb.head(horizon * n).setConstant(bounds.a_min);
  qp.ub.head(horizon * n).setConstant(bounds.a_max);
  qp.lb.tail(horizon * n).setConstant(bounds.s_err_min);
  qp.ub.tail(horizon * n).setConstant(bounds.s_err_max);
  return qp;
}

struct CentralStepResult {
  Vec u_apply;   // first input sample per CAV, exactly inside the box
  Vec y_pred;    // predicted output sequence (stacked)
  Vec u_pred;    // predicted input sequence (stacked, projected)
  Vec g;
  double objective = 0.0;  // regularized cost including the slack term
  QpStatus status = QpStatus::MaxIterations;
  int iterations = 0;
  double solve_ms = 0.0;
};

// Receding-horizon driver: the structure factorization is computed once; each
// step only refreshes the linear term and right-hand sides and warm-starts
// the splitting iterations from the previous solution.
class CentralController {
 public:
  CentralController(CentralProblem prob, QpSettings settings = default_settings())
      : prob_(std::move(prob)),
        solver_(2.0 * prob_.cost_quad, prob_.eq_mat, prob_.bound_mat, settings) {}

  static QpSettings default_settings() {
    QpSettings s;
    s.tol = 1e-3;
    s.max_iter = 4000;
    return s;
  }

  CentralStepResult step(const Vec& u_ini, const Vec& eps_ini, const Vec& y_ini) {
    const auto t0 = std::chrono::steady_clock::now();
    const Vec q = 2.0 * prob_.linear_term(y_ini);
    const Vec b = prob_.eq_rhs(u_ini, eps_ini);
    const BoxQpResult r =
        solver_.solve(q, b, prob_.bound_lb, prob_.bound_ub, warm_ ? &*warm_ : nullptr);
    if (r.status == QpStatus::PrimalInfeasible) {
      std::ostringstream msg;
      msg << "central step: QP reported primal infeasibility (iter=" << r.iterations
          << ", r_pri=" << r.r_pri << ", r_dual=" << r.r_dual
          << "); the slack-regularized problem should always be feasible";
      throw std::runtime_error(msg.str());
    }
    warm_ = r.warm;
    CentralStepResult out;
    const int n = prob_.n_cav();
    out.u_pred = r.bound_values.head(prob_.horizon() * n);
    out.u_apply = out.u_pred.head(n);
    out.y_pred = prob_.blocks.y_future * r.x;
    out.g = r.x;
    out.objective = r.objective + prob_.cost_const(y_ini);
    out.status = r.status;
    out.iterations = r.iterations;
    out.solve_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    return out;
  }

  const CentralProblem& problem() const { return prob_; }

 private:
  CentralProblem prob_;
  BoxQpSolver solver_;
  std::optional<QpWarmState> warm_;
};

}  // namespace deeplcc
