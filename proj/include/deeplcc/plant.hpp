#pragma once

// Nonlinear mixed-traffic plant: a head vehicle with a prescribed velocity
// profile, followed by CAVs (double integrators under commanded acceleration)
// and HDVs (noise-corrupted OVM). Forward-Euler stepping at the controller
// sampling interval.

#include <random>
#include <stdexcept>
#include <vector>

#include "ovm.hpp"
#include "partition.hpp"
#include "types.hpp"

namespace deeplcc {

enum class Role { Cav, Hdv };

struct HeadProfile {
  enum class Kind { Constant, PiecewiseAccel, Sinusoid };
  Kind kind = Kind::Constant;
  double base_velocity = 15.0;
  double hold = 1.0;  // initialization time at base velocity before the profile starts

  struct Segment {
    double duration = 0.0;  // s
    double accel = 0.0;     // m/s^2
  };
  std::vector<Segment> segments;  // PiecewiseAccel, applied in order after hold

  double amplitude = 0.0;  // Sinusoid: v = base + amplitude*sin(2*pi*(t-hold)/period)
  double period = 10.0;

  double velocity_at(double t) const {
    const double tp = t - hold;
    if (tp <= 0.0) return base_velocity;
    double v = base_velocity;
    switch (kind) {
      case Kind::Constant:
        break;
      case Kind::Sinusoid:
        v = base_velocity + amplitude * std::sin(2.0 * M_PI * tp / period);
        break;
      case Kind::PiecewiseAccel: {
        double elapsed = 0.0;
        for (const Segment& seg : segments) {
          const double within = std::min(seg.duration, tp - elapsed);
          if (within <= 0.0) break;
          v += seg.accel * within;
          elapsed += seg.duration;
        }
        break;
      }
    }
    return std::max(0.0, v);
  }

  void validate() const {
    if (!(base_velocity >= 0.0)) throw std::invalid_argument("HeadProfile: negative base velocity");
    if (kind == Kind::Sinusoid) {
      if (!(period > 0.0)) throw std::invalid_argument("HeadProfile: period must be positive");
      if (amplitude > base_velocity) {
        throw std::invalid_argument("HeadProfile: sinusoid dips below zero velocity");
      }
    }
    if (kind == Kind::PiecewiseAccel) {
      double v = base_velocity;
      for (const Segment& seg : segments) {
        v += seg.accel * seg.duration;
        if (v < 0.0) throw std::invalid_argument("HeadProfile: schedule dips below zero velocity");
      }
    }
  }
};

// Positions/velocities of head + followers; index 0 is the head vehicle.
struct VehicleChainState {
  Vec position;
  Vec velocity;

  int n_followers() const { return static_cast<int>(position.size()) - 1; }
  double spacing(int follower) const { return position(follower) - position(follower + 1); }
};

class MixedChain {
 public:
  MixedChain(std::vector<Role> roles, std::vector<HdvParams> params,
             double v_star, double s_star_cav, Bounds bounds, double dt)
      : roles_(std::move(roles)), params_(std::move(params)), v_star_(v_star),
        s_star_cav_(s_star_cav), bounds_(bounds), dt_(dt) {
    if (roles_.size() != params_.size()) {
      throw std::invalid_argument("MixedChain: roles/params size mismatch");
    }
    if (!(dt_ > 0.0)) throw std::invalid_argument("MixedChain: dt must be positive");
    ref_spacing_.resize(roles_.size());
    for (size_t i = 0; i < roles_.size(); ++i) {
      params_[i].validate();
      ref_spacing_[i] = roles_[i] == Role::Cav ? s_star_cav_
                                               : equilibrium_spacing(params_[i], v_star_);
    }
  }

  int n_followers() const { return static_cast<int>(roles_.size()); }
  int n_cavs() const {
    int n = 0;
    for (Role r : roles_) n += (r == Role::Cav);
    return n;
  }
  double dt() const { return dt_; }
  double v_star() const { return v_star_; }
  const Bounds& bounds() const { return bounds_; }
  double ref_spacing(int follower) const { return ref_spacing_[follower]; }
  Role role(int follower) const { return roles_[follower]; }

  // All vehicles at v_star with equilibrium spacings, head at position 0.
  VehicleChainState equilibrium_state() const {
    const int nf = n_followers();
    VehicleChainState st;
    st.position.resize(nf + 1);
    st.velocity = Vec::Constant(nf + 1, v_star_);
    st.position(0) = 0.0;
    for (int i = 0; i < nf; ++i) {
      st.position(i + 1) = st.position(i) - ref_spacing_[i];
    }
    return st;
  }

  // Forward-Euler step: head velocity follows the profile's value at t + dt,
  // CAV accelerations are the (saturated) commanded inputs, HDVs follow the
  // OVM with per-step acceleration noise drawn in chain order. Velocities are
  // floored at zero. Returns the realized follower accelerations.
  Vec step(VehicleChainState& st, const HeadProfile& head, double t,
           const Vec& cav_inputs, std::mt19937_64& rng,
           double noise_amplitude = 0.1) const {
    return step_with_head_velocity(st, head.velocity_at(t + dt_), cav_inputs, rng,
                                   noise_amplitude);
  }

  // Same update with the next head velocity prescribed directly (used by the
  // data-collection runs that dither the head around the equilibrium).
  Vec step_with_head_velocity(VehicleChainState& st, double head_velocity_next,
                              const Vec& cav_inputs, std::mt19937_64& rng,
                              double noise_amplitude = 0.1) const {
    const int nf = n_followers();
    if (cav_inputs.size() != n_cavs()) {
      throw std::invalid_argument("MixedChain::step: one input per CAV required");
    }
    std::uniform_real_distribution<double> noise(-noise_amplitude, noise_amplitude);
    Vec accel(nf);
    int cav_idx = 0;
    for (int i = 0; i < nf; ++i) {
      if (roles_[i] == Role::Cav) {
        accel(i) = clamp(cav_inputs(cav_idx++), bounds_.a_min, bounds_.a_max);
      } else {
        const double s = st.spacing(i);
        const double s_dot = st.velocity(i) - st.velocity(i + 1);
        const double delta = noise_amplitude > 0.0 ? noise(rng) : 0.0;
        accel(i) = hdv_accel(params_[i], s, s_dot, st.velocity(i + 1), delta,
                             bounds_.a_min, bounds_.a_max);
      }
    }
    Vec new_v(nf + 1), new_p(nf + 1);
    new_v(0) = std::max(0.0, head_velocity_next);
    new_p(0) = st.position(0) + st.velocity(0) * dt_;
    for (int i = 0; i < nf; ++i) {
      new_v(i + 1) = std::max(0.0, st.velocity(i + 1) + accel(i) * dt_);
      new_p(i + 1) = st.position(i + 1) + st.velocity(i + 1) * dt_;
      accel(i) = (new_v(i + 1) - st.velocity(i + 1)) / dt_;  // realized after the floor
    }
    st.velocity = new_v;
    st.position = new_p;
    return accel;
  }

  // Stacked output per the CF-LCC partition: for each subsystem the velocity
  // errors of CAV and following HDVs, then the CAV spacing error. The spacing
  // reference of a slot follows its realized role, so an all-HDV chain reads
  // zero output at its own equilibrium.
  Vec measure_output(const VehicleChainState& st, const PartitionLayout& layout) const {
    Vec y(layout.y_dim_total());
    int row = 0;
    for (int i = 0; i < layout.n_cav(); ++i) {
      const int c = layout.cav_position(i);
      y(row++) = st.velocity(c + 1) - v_star_;
      for (int j = 1; j <= layout.hdv_counts[i]; ++j) {
        y(row++) = st.velocity(c + 1 + j) - v_star_;
      }
      y(row++) = st.spacing(c) - ref_spacing_[c];
    }
    return y;
  }

  double head_velocity_error(const VehicleChainState& st) const {
    return st.velocity(0) - v_star_;
  }

  // Velocity error of the vehicle immediately ahead of each CAV.
  Vec reference_errors(const VehicleChainState& st, const PartitionLayout& layout) const {
    Vec eps(layout.n_cav());
    for (int i = 0; i < layout.n_cav(); ++i) {
      const int c = layout.cav_position(i);
      eps(i) = st.velocity(c) - v_star_;  // index c is the predecessor of follower c
    }
    return eps;
  }

  double min_spacing(const VehicleChainState& st) const {
    double m = kInf;
    for (int i = 0; i < n_followers(); ++i) m = std::min(m, st.spacing(i));
    return m;
  }

 private:
  std::vector<Role> roles_;
  std::vector<HdvParams> params_;
  std::vector<double> ref_spacing_;
  double v_star_;
  double s_star_cav_;
  Bounds bounds_;
  double dt_;
};

// Chain roles implied by a CF-LCC layout: a CAV leading each block.
inline std::vector<Role> layout_roles(const PartitionLayout& layout) {
  std::vector<Role> roles;
  for (int i = 0; i < layout.n_cav(); ++i) {
    roles.push_back(Role::Cav);
    for (int j = 0; j < layout.hdv_counts[i]; ++j) roles.push_back(Role::Hdv);
  }
  return roles;
}

}  // namespace deeplcc
