#pragma once

// Optimal velocity model for human-driven vehicles and the instantaneous
// fuel-rate model used for the economy metric.

#include <cmath>
#include <stdexcept>

#include "types.hpp"

namespace deeplcc {

struct HdvParams {
  double alpha = 0.6;   // spacing-policy sensitivity [1/s]
  double beta = 0.9;    // relative-velocity gain [1/s]
  double s_st = 5.0;    // standstill spacing [m]
  double s_go = 35.0;   // free-flow spacing [m]
  double v_max = 30.0;  // free-flow speed [m/s]

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0) || !(s_st > 0.0) || !(s_go > s_st) ||
        !(v_max > 0.0)) {
      throw std::invalid_argument("HdvParams: invalid parameter set");
    }
  }
};

// Spacing-dependent desired velocity: 0 below s_st, half-cosine ramp on
// (s_st, s_go), v_max above s_go.
inline double desired_velocity(const HdvParams& p, double s) {
  if (s <= p.s_st) return 0.0;
  if (s >= p.s_go) return p.v_max;
  return 0.5 * p.v_max * (1.0 - std::cos(M_PI * (s - p.s_st) / (p.s_go - p.s_st)));
}

// d v_des / d s; zero outside the ramp, and at the kinks.
inline double desired_velocity_slope(const HdvParams& p, double s) {
  if (s <= p.s_st || s >= p.s_go) return 0.0;
  const double w = M_PI / (p.s_go - p.s_st);
  return 0.5 * p.v_max * w * std::sin(w * (s - p.s_st));
}

// OVM acceleration with additive noise, saturated to [a_min, a_max].
inline double hdv_accel(const HdvParams& p, double s, double s_dot, double v,
                        double noise, double a_min = -5.0, double a_max = 2.0) {
  const double a = p.alpha * (desired_velocity(p, s) - v) + p.beta * s_dot + noise;
  return clamp(a, a_min, a_max);
}

// Unique spacing on (s_st, s_go) where the desired velocity equals v_star,
// located by bisection to 1e-10 m.
inline double equilibrium_spacing(const HdvParams& p, double v_star) {
  if (!(v_star > 0.0) || !(v_star < p.v_max)) {
    throw std::invalid_argument(
        "equilibrium_spacing: v_star must lie strictly inside (0, v_max)");
  }
  double lo = p.s_st;
  double hi = p.s_go;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (desired_velocity(p, mid) < v_star) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Instantaneous fuel rate [mL/s] of a vehicle at velocity v (m/s) and
// acceleration a (m/s^2).
inline double fuel_rate(double v, double a) {
  const double r = 0.333 + 0.00108 * v * v + 1.2 * a;
  if (r <= 0.0) return 0.444;
  double f = 0.444 + 0.090 * r * v;
  if (a > 0.0) f += 0.054 * a * a * v;
  return f;
}

}  // namespace deeplcc
