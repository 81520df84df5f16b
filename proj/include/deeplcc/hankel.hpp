#pragma once

// Block-Hankel matrices and persistent-excitation checks. Signals are stored
// one sample per column, so a sequence of T samples of dimension d is a d x T
// matrix. Block-Hankel matrices interleave full sample vectors per block row.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <stdexcept>

#include "types.hpp"

namespace deeplcc {

// Order-l block-Hankel matrix of `seq` (d x T): l block rows, T-l+1 columns.
// Column j stacks samples j, j+1, ..., j+l-1.
inline Mat build_hankel(const Mat& seq, int order) {
  const int dim = static_cast<int>(seq.rows());
  const int len = static_cast<int>(seq.cols());
  if (order < 1 || order > len) {
    throw std::invalid_argument("build_hankel: order must satisfy 1 <= order <= T");
  }
  const int cols = len - order + 1;
  Mat h(dim * order, cols);
  for (int k = 0; k < order; ++k) {
    h.middleRows(k * dim, dim) = seq.middleCols(k, cols);
  }
  return h;
}

// Numerical rank: singular values below rel_tol * sigma_max count as zero.
inline int numerical_rank(const Mat& m, double rel_tol = 1e-8) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Mat> svd(m);
  const Vec& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double cutoff = rel_tol * sv(0);
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++rank;
  }
  return rank;
}

// A sequence is persistently exciting of order l when its order-l block-Hankel
// matrix has full row rank.
inline bool is_persistently_exciting(const Mat& seq, int order,
                                     double rank_tol = 1e-8) {
  const Mat h = build_hankel(seq, order);
  if (h.rows() > h.cols()) return false;
  return numerical_rank(h, rank_tol) == h.rows();
}

// The six data matrices of one (sub)system: past/future splits of the input,
// reference and output Hankel matrices, all sharing g_dim columns.
struct HankelBlocks {
  Mat u_past, u_future;
  Mat e_past, e_future;
  Mat y_past, y_future;
  int t_ini = 0;
  int horizon = 0;
  int g_dim = 0;

  int u_dim() const { return t_ini > 0 ? static_cast<int>(u_past.rows()) / t_ini : 0; }
  int y_dim() const { return t_ini > 0 ? static_cast<int>(y_past.rows()) / t_ini : 0; }
};

inline HankelBlocks split_past_future(const Mat& u, const Mat& eps, const Mat& y,
                                      int t_ini, int horizon) {
  const int len = static_cast<int>(u.cols());
  if (eps.cols() != len || y.cols() != len) {
    throw std::invalid_argument("split_past_future: sequence lengths differ");
  }
  if (t_ini < 1 || horizon < 1 || t_ini + horizon > len) {
    throw std::invalid_argument("split_past_future: need T >= T_ini + N");
  }
  const int order = t_ini + horizon;
  const Mat hu = build_hankel(u, order);
  const Mat he = build_hankel(eps, order);
  const Mat hy = build_hankel(y, order);

  HankelBlocks b;
  b.t_ini = t_ini;
  b.horizon = horizon;
  b.g_dim = len - order + 1;
  const int du = static_cast<int>(u.rows());
  const int de = static_cast<int>(eps.rows());
  const int dy = static_cast<int>(y.rows());
  b.u_past = hu.topRows(t_ini * du);
  b.u_future = hu.bottomRows(horizon * du);
  b.e_past = he.topRows(t_ini * de);
  b.e_future = he.bottomRows(horizon * de);
  b.y_past = hy.topRows(t_ini * dy);
  b.y_future = hy.bottomRows(horizon * dy);
  return b;
}

// Minimum data length for persistent excitation of the required order,
// centralized case: T >= (n+1)(T_ini + N + 2m + 2n) - 1.
inline int min_data_length_centralized(int n_cav, int m_hdv, int t_ini, int horizon) {
  return (n_cav + 1) * (t_ini + horizon + 2 * m_hdv + 2 * n_cav) - 1;
}

// Local (per-subsystem) case: T_i >= 2(T_ini + N + 2 m_i + 2) - 1.
inline int min_data_length_local(int m_i, int t_ini, int horizon) {
  return 2 * (t_ini + horizon + 2 * m_i + 2) - 1;
}

}  // namespace deeplcc
