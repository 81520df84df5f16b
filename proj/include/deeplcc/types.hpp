#pragma once

#include <Eigen/Dense>
#include <limits>

namespace deeplcc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Actuation and spacing-error limits shared by the plant and the controllers.
// Spacing-error bounds are relative to the designed CAV equilibrium spacing,
// e.g. s in [5, 40] with s* = 20 gives [-15, 20].
struct Bounds {
  double a_min = -5.0;
  double a_max = 2.0;
  double s_err_min = -15.0;
  double s_err_max = 20.0;
};

inline double clamp(double x, double lo, double hi) {
  return x < lo ? lo : (x > hi ? hi : x);
}

inline Vec clamp(const Vec& x, double lo, double hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

inline Vec clamp(const Vec& x, const Vec& lo, const Vec& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace deeplcc
