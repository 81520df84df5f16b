#pragma once

// CF-LCC partition of a mixed vehicle chain: one leading CAV per subsystem
// followed by m_i HDVs. Provides the output-block indexing shared by the
// trajectory, simulation and controller code, and the per-subsystem selector
// matrices used by the cooperative formulation.

#include <numeric>
#include <stdexcept>
#include <vector>

#include "types.hpp"

namespace deeplcc {

struct PartitionLayout {
  std::vector<int> hdv_counts;  // m_i: HDVs behind CAV i, front to rear

  int n_cav() const { return static_cast<int>(hdv_counts.size()); }
  int m_hdv() const { return std::accumulate(hdv_counts.begin(), hdv_counts.end(), 0); }
  int n_vehicles() const { return n_cav() + m_hdv(); }

  // Output block of subsystem i: [v_err CAV, v_err HDV_1..m_i, s_err CAV].
  int y_dim(int i) const { return hdv_counts.at(i) + 2; }
  int y_dim_total() const { return 2 * n_cav() + m_hdv(); }

  // Row offset of subsystem i's block inside the stacked output vector.
  int y_offset(int i) const {
    int off = 0;
    for (int k = 0; k < i; ++k) off += y_dim(k);
    return off;
  }

  // Chain position (0-based among followers, head excluded) of CAV i.
  int cav_position(int i) const {
    int pos = 0;
    for (int k = 0; k < i; ++k) pos += 1 + hdv_counts[k];
    return pos;
  }

  // Index of the velocity-error row, inside the stacked output, of the vehicle
  // immediately ahead of CAV i (the tail vehicle of subsystem i-1). Only
  // defined for i >= 1; for i = 0 that vehicle is the head.
  int predecessor_velocity_row(int i) const {
    if (i < 1 || i >= n_cav()) {
      throw std::out_of_range("predecessor_velocity_row: bad subsystem index");
    }
    return y_offset(i - 1) + hdv_counts[i - 1];
  }

  void validate() const {
    if (hdv_counts.empty()) throw std::invalid_argument("PartitionLayout: no CAVs");
    for (int m : hdv_counts) {
      if (m < 0) throw std::invalid_argument("PartitionLayout: negative m_i");
    }
  }
};

// Per-subsystem selector matrices over an N-step horizon.
//   tail_velocity (K_i): picks the velocity error of the subsystem's last
//     vehicle (HDV m_i, or the CAV itself when m_i = 0) at every step.
//   cav_spacing (P_i): picks the CAV spacing error at every step.
struct Selectors {
  Mat tail_velocity;  // N x N(m_i+2)
  Mat cav_spacing;    // N x N(m_i+2)
};

inline Selectors build_selectors(int m_i, int horizon) {
  if (m_i < 0 || horizon < 1) {
    throw std::invalid_argument("build_selectors: need m_i >= 0 and N >= 1");
  }
  const int block = m_i + 2;
  Selectors s;
  s.tail_velocity = Mat::Zero(horizon, horizon * block);
  s.cav_spacing = Mat::Zero(horizon, horizon * block);
  for (int k = 0; k < horizon; ++k) {
    s.tail_velocity(k, k * block + m_i) = 1.0;
    s.cav_spacing(k, k * block + m_i + 1) = 1.0;
  }
  return s;
}

}  // namespace deeplcc
