#pragma once

// Cooperative data-driven predictive control over the CF-LCC partition:
// per-subsystem quadratic costs in the Hankel combination weights, equality
// domains, coupling between neighbouring subsystems, and reductions of the
// coupled problem to a single QP (used as the centralized reference solve).

#include <vector>

#include "hankel.hpp"
#include "partition.hpp"
#include "qp.hpp"
#include "types.hpp"

namespace deeplcc {

struct CoopWeights {
  double w_v = 1.0;
  double w_s = 0.5;
  double w_u = 0.1;
  double lambda_g = 2.0;
  double lambda_y = 1e4;
};

// Per-step output weight of one subsystem: w_v on each velocity error
// (CAV + m_i HDVs), w_s on the CAV spacing error.
inline Vec output_weight_one_step(int m_i, double w_v, double w_s) {
  Vec d(m_i + 2);
  d.head(m_i + 1).setConstant(w_v);
  d(m_i + 1) = w_s;
  return d;
}

inline Vec replicate_diag(const Vec& d, int horizon) {
  Vec out(d.size() * horizon);
  for (int k = 0; k < horizon; ++k) out.segment(k * d.size(), d.size()) = d;
  return out;
}

// One CF-LCC subsystem reduced to its combination-weight variable: quadratic
// cost g'Qg + 2c'g (+ constant), equality domain A g = b, and the selector
// images of the future output block used by the coupling, spacing and input
// constraints. The matrices depend only on collected data; the linear term
// and right-hand side track the most recent past trajectory.
struct SubsystemProblem {
  HankelBlocks blocks;
  int index = 0;
  int n_subsystems = 1;
  int m_i = 0;
  CoopWeights weights;
  Bounds bounds;

  Mat cost_quad;       // Y_f' Qbar Y_f + w_u U_f'U_f + lambda_g I + lambda_y Y_p'Y_p
  Mat eq_mat;          // [U_p; E_p] rows, plus the future-reference rows for the head
  Mat tail_vel_rows;   // K_i Y_f: predicted tail velocity errors over the horizon
  Mat spacing_rows;    // P_i Y_f: predicted CAV spacing errors over the horizon

  Vec cost_lin;        // -lambda_y Y_p' y_ini
  Vec eq_rhs;
  double cost_const = 0.0;  // lambda_y |y_ini|^2

  bool is_head() const { return index == 0; }
  bool has_successor() const { return index + 1 < n_subsystems; }
  int g_dim() const { return blocks.g_dim; }
  int horizon() const { return blocks.horizon; }

  void set_past(const Vec& u_ini, const Vec& eps_ini, const Vec& y_ini) {
    const int t_ini = blocks.t_ini;
    if (u_ini.size() != t_ini || eps_ini.size() != t_ini ||
        y_ini.size() != t_ini * (m_i + 2)) {
      throw std::invalid_argument("SubsystemProblem::set_past: dimension mismatch");
    }
    cost_lin = -weights.lambda_y * (blocks.y_past.transpose() * y_ini);
    cost_const = weights.lambda_y * y_ini.squaredNorm();
    eq_rhs.resize(eq_mat.rows());
    eq_rhs.head(t_ini) = u_ini;
    eq_rhs.segment(t_ini, t_ini) = eps_ini;
    if (is_head()) eq_rhs.tail(blocks.horizon).setZero();  // future reference estimate
  }

  // f_i(g): the subsystem cost as a function of the combination weights.
  double cost_value(const Vec& g) const {
    return g.dot(cost_quad * g) + 2.0 * cost_lin.dot(g) + cost_const;
  }
};

inline SubsystemProblem build_subsystem_problem(const HankelBlocks& blocks, int index,
                                                int n_subsystems, const CoopWeights& w,
                                                const Bounds& bounds) {
  SubsystemProblem p;
  p.blocks = blocks;
  p.index = index;
  p.n_subsystems = n_subsystems;
  p.m_i = blocks.y_dim() - 2;
  p.weights = w;
  p.bounds = bounds;
  if (blocks.u_dim() != 1) {
    throw std::invalid_argument("build_subsystem_problem: subsystems have scalar inputs");
  }
  const Vec qbar = replicate_diag(output_weight_one_step(p.m_i, w.w_v, w.w_s),
                                  blocks.horizon);
  p.cost_quad = blocks.y_future.transpose() * qbar.asDiagonal() * blocks.y_future;
  p.cost_quad += w.w_u * blocks.u_future.transpose() * blocks.u_future;
  p.cost_quad += w.lambda_g * Mat::Identity(blocks.g_dim, blocks.g_dim);
  p.cost_quad += w.lambda_y * blocks.y_past.transpose() * blocks.y_past;

  const int eq_rows = 2 * blocks.t_ini + (index == 0 ? blocks.horizon : 0);
  p.eq_mat.resize(eq_rows, blocks.g_dim);
  p.eq_mat.topRows(blocks.t_ini) = blocks.u_past;
  p.eq_mat.middleRows(blocks.t_ini, blocks.t_ini) = blocks.e_past;
  if (index == 0) p.eq_mat.bottomRows(blocks.horizon) = blocks.e_future;

  const Selectors sel = build_selectors(p.m_i, blocks.horizon);
  p.tail_vel_rows = sel.tail_velocity * blocks.y_future;
  p.spacing_rows = sel.cav_spacing * blocks.y_future;

  p.cost_lin = Vec::Zero(blocks.g_dim);
  p.eq_rhs = Vec::Zero(eq_rows);
  return p;
}

// Builds all subsystem problems and installs the given past trajectories.
inline std::vector<SubsystemProblem> build_cooperative(
    const std::vector<HankelBlocks>& blocks, const std::vector<CoopWeights>& weights,
    const Bounds& bounds, const std::vector<Vec>& u_ini, const std::vector<Vec>& eps_ini,
    const std::vector<Vec>& y_ini) {
  const int n = static_cast<int>(blocks.size());
  if (static_cast<int>(weights.size()) != n) {
    throw std::invalid_argument("build_cooperative: one weight set per subsystem");
  }
  std::vector<SubsystemProblem> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.push_back(build_subsystem_problem(blocks[i], i, n, weights[i], bounds));
    out.back().set_past(u_ini.at(i), eps_ini.at(i), y_ini.at(i));
  }
  return out;
}

// Sum of the per-subsystem tracking costs over sequences of any common length
// (predicted horizon or a full closed-loop run).
inline double cooperative_cost(const std::vector<Mat>& u_seqs, const std::vector<Mat>& y_seqs,
                               const std::vector<int>& hdv_counts, double w_v, double w_s,
                               double w_u) {
  if (u_seqs.size() != y_seqs.size() || u_seqs.size() != hdv_counts.size()) {
    throw std::invalid_argument("cooperative_cost: sequence count mismatch");
  }
  double total = 0.0;
  for (size_t i = 0; i < u_seqs.size(); ++i) {
    const Vec d = output_weight_one_step(hdv_counts[i], w_v, w_s);
    const Mat& y = y_seqs[i];
    const Mat& u = u_seqs[i];
    if (y.rows() != d.size()) throw std::invalid_argument("cooperative_cost: output dim");
    for (int k = 0; k < y.cols(); ++k) {
      total += y.col(k).dot(d.asDiagonal() * y.col(k));
    }
    total += w_u * u.squaredNorm();
  }
  return total;
}

// Centralized tracking cost of the stacked trajectory (same weights); equals
// cooperative_cost of the partitioned sequences.
inline double chain_cost(const Mat& u, const Mat& y, const PartitionLayout& layout,
                         double w_v, double w_s, double w_u) {
  Vec d(layout.y_dim_total());
  for (int i = 0; i < layout.n_cav(); ++i) {
    d.segment(layout.y_offset(i), layout.y_dim(i)) =
        output_weight_one_step(layout.hdv_counts[i], w_v, w_s);
  }
  double total = 0.0;
  for (int k = 0; k < y.cols(); ++k) total += y.col(k).dot(d.asDiagonal() * y.col(k));
  total += w_u * u.squaredNorm();
  return total;
}

// The coupled problem over the stacked combination weights (one block per
// subsystem) as a single QP: used as the reference solve for the distributed
// algorithm and in the equivalence tests.
inline BoxQp assemble_decomposable(const std::vector<SubsystemProblem>& subs) {
  const int n = static_cast<int>(subs.size());
  int nx = 0, n_eq = 0, horizon = subs.at(0).horizon();
  std::vector<int> off(n + 1, 0);
  for (int i = 0; i < n; ++i) {
    off[i + 1] = off[i] + subs[i].g_dim();
    n_eq += static_cast<int>(subs[i].eq_mat.rows());
  }
  nx = off[n];
  n_eq += (n - 1) * horizon;  // coupling rows

  BoxQp qp;
  qp.eq.H = Mat::Zero(nx, nx);
  qp.eq.q = Vec::Zero(nx);
  qp.eq.A = Mat::Zero(n_eq, nx);
  qp.eq.b = Vec::Zero(n_eq);
  qp.G = Mat::Zero(2 * n * horizon, nx);
  qp.lb = Vec::Zero(2 * n * horizon);
  qp.ub = Vec::Zero(2 * n * horizon);

  int eq_row = 0;
  for (int i = 0; i < n; ++i) {
    const SubsystemProblem& s = subs[i];
    qp.eq.H.block(off[i], off[i], s.g_dim(), s.g_dim()) = 2.0 * s.cost_quad;
    qp.eq.q.segment(off[i], s.g_dim()) = 2.0 * s.cost_lin;
    qp.eq.A.block(eq_row, off[i], s.eq_mat.rows(), s.g_dim()) = s.eq_mat;
    qp.eq.b.segment(eq_row, s.eq_mat.rows()) = s.eq_rhs;
    eq_row += static_cast<int>(s.eq_mat.rows());

    qp.G.block(2 * i * horizon, off[i], horizon, s.g_dim()) = s.blocks.u_future;
    qp.G.block((2 * i + 1) * horizon, off[i], horizon, s.g_dim()) = s.spacing_rows;
    qp.lb.segment(2 * i * horizon, horizon).setConstant(s.bounds.a_min);
    qp.ub.segment(2 * i * horizon, horizon).setConstant(s.bounds.a_max);
    qp.lb.segment((2 * i + 1) * horizon, horizon).setConstant(s.bounds.s_err_min);
    qp.ub.segment((2 * i + 1) * horizon, horizon).setConstant(s.bounds.s_err_max);
  }
  for (int i = 0; i + 1 < n; ++i) {
    // successor reference rows equal the predicted tail velocity of block i
    qp.eq.A.block(eq_row, off[i], horizon, subs[i].g_dim()) = -subs[i].tail_vel_rows;
    qp.eq.A.block(eq_row, off[i + 1], horizon, subs[i + 1].g_dim()) =
        subs[i + 1].blocks.e_future;
    eq_row += horizon;
  }
  return qp;
}

// Total cooperative objective at stacked weights (for comparing solutions of
// the decomposable problem).
inline double decomposable_cost(const std::vector<SubsystemProblem>& subs, const Vec& g_stacked) {
  double total = 0.0;
  int off = 0;
  for (const SubsystemProblem& s : subs) {
    total += s.cost_value(g_stacked.segment(off, s.g_dim()));
    off += s.g_dim();
  }
  return total;
}

// The noise-free cooperative formulation: hard past-output rows, no
// regularization. Feasible only on exact LTI data with a consistent partition.
inline BoxQp assemble_cooperative_linear(const std::vector<HankelBlocks>& blocks,
                                         double w_v, double w_s, double w_u,
                                         const Bounds& bounds,
                                         const std::vector<Vec>& u_ini,
                                         const std::vector<Vec>& eps_ini,
                                         const std::vector<Vec>& y_ini) {
  const int n = static_cast<int>(blocks.size());
  const int horizon = blocks.at(0).horizon;
  std::vector<int> off(n + 1, 0);
  int n_eq = 0;
  for (int i = 0; i < n; ++i) {
    off[i + 1] = off[i] + blocks[i].g_dim;
    n_eq += blocks[i].t_ini * (2 + blocks[i].y_dim());
  }
  n_eq += horizon;            // head future reference = 0
  n_eq += (n - 1) * horizon;  // coupling

  BoxQp qp;
  const int nx = off[n];
  qp.eq.H = Mat::Zero(nx, nx);
  qp.eq.q = Vec::Zero(nx);
  qp.eq.A = Mat::Zero(n_eq, nx);
  qp.eq.b = Vec::Zero(n_eq);
  qp.G = Mat::Zero(2 * n * horizon, nx);
  qp.lb = Vec::Zero(2 * n * horizon);
  qp.ub = Vec::Zero(2 * n * horizon);

  int eq_row = 0;
  for (int i = 0; i < n; ++i) {
    const HankelBlocks& b = blocks[i];
    const int m_i = b.y_dim() - 2;
    const Vec qbar = replicate_diag(output_weight_one_step(m_i, w_v, w_s), horizon);
    Mat quad = b.y_future.transpose() * qbar.asDiagonal() * b.y_future;
    quad += w_u * b.u_future.transpose() * b.u_future;
    qp.eq.H.block(off[i], off[i], b.g_dim, b.g_dim) = 2.0 * quad;

    qp.eq.A.block(eq_row, off[i], b.t_ini, b.g_dim) = b.u_past;
    qp.eq.b.segment(eq_row, b.t_ini) = u_ini.at(i);
    eq_row += b.t_ini;
    qp.eq.A.block(eq_row, off[i], b.t_ini, b.g_dim) = b.e_past;
    qp.eq.b.segment(eq_row, b.t_ini) = eps_ini.at(i);
    eq_row += b.t_ini;
    qp.eq.A.block(eq_row, off[i], b.t_ini * b.y_dim(), b.g_dim) = b.y_past;
    qp.eq.b.segment(eq_row, b.t_ini * b.y_dim()) = y_ini.at(i);
    eq_row += b.t_ini * b.y_dim();

    const Selectors sel = build_selectors(m_i, horizon);
    qp.G.block(2 * i * horizon, off[i], horizon, b.g_dim) = b.u_future;
    qp.G.block((2 * i + 1) * horizon, off[i], horizon, b.g_dim) =
        sel.cav_spacing * b.y_future;
    qp.lb.segment(2 * i * horizon, horizon).setConstant(bounds.a_min);
    qp.ub.segment(2 * i * horizon, horizon).setConstant(bounds.a_max);
    qp.lb.segment((2 * i + 1) * horizon, horizon).setConstant(bounds.s_err_min);
    qp.ub.segment((2 * i + 1) * horizon, horizon).setConstant(bounds.s_err_max);
  }
  qp.eq.A.block(eq_row, off[0], horizon, blocks[0].g_dim) = blocks[0].e_future;
  eq_row += horizon;  // rhs already zero (future head reference estimate)
  for (int i = 0; i + 1 < n; ++i) {
    const Selectors sel = build_selectors(blocks[i].y_dim() - 2, horizon);
    qp.eq.A.block(eq_row, off[i], horizon, blocks[i].g_dim) =
        -(sel.tail_velocity * blocks[i].y_future);
    qp.eq.A.block(eq_row, off[i + 1], horizon, blocks[i + 1].g_dim) =
        blocks[i + 1].e_future;
    eq_row += horizon;
  }
  return qp;
}

}  // namespace deeplcc
