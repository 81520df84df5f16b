#pragma once

// Discrete-time linearization of the mixed-traffic dynamics around the
// equilibrium flow, per CF-LCC subsystem and for the whole chain. Used to
// generate noise-free LTI data and as the rollout oracle in tests.

#include <stdexcept>
#include <vector>

#include "ovm.hpp"
#include "partition.hpp"
#include "types.hpp"

namespace deeplcc {

// x(k+1) = a x(k) + b u(k) + h eps(k);  y(k) = c x(k)
struct Lti {
  Mat a, b, h, c;
  int state_dim() const { return static_cast<int>(a.rows()); }
  int input_dim() const { return static_cast<int>(b.cols()); }
  int output_dim() const { return static_cast<int>(c.rows()); }
};

namespace detail {

// Continuous-time CF-LCC subsystem matrices; state ordering
// [v_err cav, v_err hdv_1..m, s_err cav, s_err hdv_1..m].
struct SubsystemCt {
  Mat a, b, h;
};

inline SubsystemCt subsystem_ct(const std::vector<HdvParams>& hdvs, double v_star) {
  const int m = static_cast<int>(hdvs.size());
  const int nx = 2 + 2 * m;
  SubsystemCt s;
  s.a = Mat::Zero(nx, nx);
  s.b = Mat::Zero(nx, 1);
  s.h = Mat::Zero(nx, 1);
  s.b(0, 0) = 1.0;          // CAV acceleration input
  s.a(m + 1, 0) = -1.0;     // CAV spacing: eps - v_err_cav
  s.h(m + 1, 0) = 1.0;
  for (int k = 1; k <= m; ++k) {
    const HdvParams& p = hdvs[k - 1];
    const double s_star = equilibrium_spacing(p, v_star);
    const double slope = desired_velocity_slope(p, s_star);
    if (!(slope > 0.0)) {
      throw std::runtime_error("subsystem_ct: equilibrium at a non-differentiable point");
    }
    const double a1 = p.alpha * slope;
    const double a2 = p.alpha + p.beta;
    const double a3 = p.beta;
    s.a(k, k) = -a2;
    s.a(k, k - 1) = a3;
    s.a(k, m + 1 + k) = a1;
    s.a(m + 1 + k, k - 1) = 1.0;
    s.a(m + 1 + k, k) = -1.0;
  }
  return s;
}

inline Lti discretize(const Mat& ac, const Mat& bc, const Mat& hc, const Mat& c, double dt) {
  Lti d;
  d.a = Mat::Identity(ac.rows(), ac.cols()) + dt * ac;
  d.b = dt * bc;
  d.h = dt * hc;
  d.c = c;
  return d;
}

inline Mat subsystem_output_matrix(int m) {
  Mat c = Mat::Zero(m + 2, 2 + 2 * m);
  for (int k = 0; k <= m; ++k) c(k, k) = 1.0;
  c(m + 1, m + 1) = 1.0;
  return c;
}

}  // namespace detail

// Forward-Euler discretization of one CF-LCC subsystem with m_i = hdvs.size()
// HDVs behind the CAV. The reference input is the velocity error of the
// vehicle immediately ahead of the CAV.
inline Lti linearized_subsystem(const std::vector<HdvParams>& hdvs, double v_star, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("linearized_subsystem: dt must be positive");
  const auto ct = detail::subsystem_ct(hdvs, v_star);
  const int m = static_cast<int>(hdvs.size());
  return detail::discretize(ct.a, ct.b, ct.h, detail::subsystem_output_matrix(m), dt);
}

// Whole-chain linearization: subsystems coupled through the tail-velocity of
// the preceding block. `follower_params` holds one entry per follower slot
// (chain order); entries at CAV slots are ignored.
inline Lti linearized_chain(const PartitionLayout& layout,
                            const std::vector<HdvParams>& follower_params,
                            double v_star, double dt) {
  layout.validate();
  if (static_cast<int>(follower_params.size()) != layout.n_vehicles()) {
    throw std::invalid_argument("linearized_chain: one parameter set per follower required");
  }
  const int n = layout.n_cav();
  std::vector<detail::SubsystemCt> subs(n);
  std::vector<int> x_off(n + 1, 0);
  for (int i = 0; i < n; ++i) {
    std::vector<HdvParams> hdvs;
    const int c = layout.cav_position(i);
    for (int j = 1; j <= layout.hdv_counts[i]; ++j) hdvs.push_back(follower_params[c + j]);
    subs[i] = detail::subsystem_ct(hdvs, v_star);
    x_off[i + 1] = x_off[i] + 2 + 2 * layout.hdv_counts[i];
  }
  const int nx = x_off[n];
  Mat ac = Mat::Zero(nx, nx);
  Mat bc = Mat::Zero(nx, n);
  Mat hc = Mat::Zero(nx, 1);
  Mat c = Mat::Zero(layout.y_dim_total(), nx);
  for (int i = 0; i < n; ++i) {
    const int m_i = layout.hdv_counts[i];
    const int nxi = 2 + 2 * m_i;
    ac.block(x_off[i], x_off[i], nxi, nxi) = subs[i].a;
    bc.block(x_off[i], i, nxi, 1) = subs[i].b;
    if (i == 0) {
      hc.block(x_off[0], 0, nxi, 1) = subs[0].h;
    } else {
      // reference input of block i is the tail velocity error of block i-1
      const int tail_col = x_off[i - 1] + layout.hdv_counts[i - 1];
      ac.block(x_off[i], tail_col, nxi, 1) += subs[i].h;
    }
    c.block(layout.y_offset(i), x_off[i], m_i + 2, nxi) =
        detail::subsystem_output_matrix(m_i);
  }
  return detail::discretize(ac, bc, hc, c, dt);
}

struct RolloutResult {
  Mat y;      // outputs, one column per step
  Vec x_end;  // state after the last step
};

// Simulates y(k) = C x(k), x(k+1) = A x(k) + B u(:,k) + H eps(:,k).
inline RolloutResult lti_rollout(const Lti& sys, const Vec& x0, const Mat& u, const Mat& eps) {
  const int len = static_cast<int>(u.cols());
  if (eps.cols() != len) throw std::invalid_argument("lti_rollout: u/eps length mismatch");
  RolloutResult r;
  r.y.resize(sys.output_dim(), len);
  Vec x = x0;
  for (int k = 0; k < len; ++k) {
    r.y.col(k) = sys.c * x;
    x = sys.a * x + sys.b * u.col(k) + sys.h * eps.col(k);
  }
  r.x_end = x;
  return r;
}

}  // namespace deeplcc
