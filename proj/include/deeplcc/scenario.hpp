#pragma once

// Experiment configuration: vehicle layout, horizons, weights, head-vehicle
// perturbation, seeds and solver settings, with JSON round-tripping and the
// named presets used by the simulation studies.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "admm.hpp"
#include "partition.hpp"
#include "plant.hpp"
#include "types.hpp"

namespace deeplcc {

struct ScenarioConfig {
  std::string name = "custom";
  std::vector<int> hdv_counts = {2, 2, 2, 2, 2};

  int t_ini = 20;
  int horizon = 50;

  double w_v = 1.0, w_s = 0.5, w_u = 0.1;
  double lambda_g_central = 10.0, lambda_y_central = 1e4;
  double lambda_g_local = 2.0, lambda_y_local = 1e4;

  Bounds bounds;
  double v_star = 15.0, s_star = 20.0, dt = 0.05;
  double hdv_noise = 0.1;

  std::uint64_t hdv_param_seed = 1;
  std::uint64_t noise_seed = 2;
  std::uint64_t data_seed = 3;

  // head-vehicle profile: "constant", "sinusoid" or "brake" (the large-scale
  // emergency-brake schedule)
  std::string head_kind = "sinusoid";
  double head_base = 15.0;
  double head_amplitude = 4.0;
  double head_period = 12.0;

  double init_hold = 1.0;   // seconds at equilibrium before control engages
  double duration = 25.0;   // controlled horizon in seconds

  int data_len_central = 1200;
  int data_len_local = 300;

  double rho = 1.0;
  int admm_max_iterations = 300;
  int admm_delay_steps = 0;
  double admm_delta_abs = 0.1;
  double admm_delta_rel = 1e-3;
  bool parallel = true;

  double qp_tol = 1e-3;
  int qp_max_iter = 6000;

  PartitionLayout layout() const { return PartitionLayout{hdv_counts}; }

  CommPolicy comm_policy() const {
    CommPolicy p;
    p.max_iterations = admm_max_iterations;
    p.delay_steps = admm_delay_steps;
    p.delta_abs = admm_delta_abs;
    p.delta_rel = admm_delta_rel;
    p.parallel = parallel;
    return p;
  }

  HeadProfile head_profile() const {
    HeadProfile h;
    h.base_velocity = head_base;
    h.hold = init_hold;
    if (head_kind == "constant") {
      h.kind = HeadProfile::Kind::Constant;
    } else if (head_kind == "sinusoid") {
      h.kind = HeadProfile::Kind::Sinusoid;
      h.amplitude = head_amplitude;
      h.period = head_period;
    } else if (head_kind == "brake") {
      h.kind = HeadProfile::Kind::PiecewiseAccel;
      h.segments = {{1.0, -5.0}, {3.0, 0.0}, {5.0, 1.0}, {141.0, 0.0}};
    } else {
      throw std::invalid_argument("ScenarioConfig: unknown head profile kind " + head_kind);
    }
    h.validate();
    return h;
  }

  int hold_steps() const { return static_cast<int>(std::lround(init_hold / dt)); }
  int control_steps() const { return static_cast<int>(std::lround(duration / dt)); }

  void validate() const {
    layout().validate();
    if (t_ini < 1 || horizon < 1) throw std::invalid_argument("ScenarioConfig: bad horizons");
    if (!(dt > 0.0)) throw std::invalid_argument("ScenarioConfig: dt must be positive");
    if (hold_steps() < t_ini) {
      throw std::invalid_argument(
          "ScenarioConfig: init_hold must cover T_ini samples of past data");
    }
    if (!(v_star > 0.0) || !(s_star > 0.0)) {
      throw std::invalid_argument("ScenarioConfig: bad equilibrium");
    }
    head_profile();  // validates the profile
  }
};

// Heterogeneous but frozen per-slot OVM parameters (CAV slots included: they
// are exercised when a slot runs as an HDV in the uncontrolled baseline).
inline std::vector<HdvParams> draw_hdv_params(const ScenarioConfig& cfg) {
  std::mt19937_64 rng(cfg.hdv_param_seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<HdvParams> out(cfg.layout().n_vehicles());
  for (HdvParams& p : out) {
    p.alpha = 0.6 + 0.2 * d(rng);
    p.beta = 0.9 + 0.2 * d(rng);
    p.s_go = 35.0 + 5.0 * d(rng);
    p.s_st = 5.0;
    p.v_max = 30.0;
  }
  return out;
}

// HDV counts for a large-scale penetration preset: the listed values repeat
// cyclically from the front; if the cycle overshoots the HDV budget, entries
// are decremented from the rear (never below the listed minimum) until the
// total matches.
inline std::vector<int> spread_hdv_counts(const std::vector<int>& listed, int n_cav,
                                          int m_total) {
  std::vector<int> out(n_cav);
  for (int i = 0; i < n_cav; ++i) out[i] = listed[i % listed.size()];
  const int min_v = *std::min_element(listed.begin(), listed.end());
  int excess = std::accumulate(out.begin(), out.end(), 0) - m_total;
  while (excess > 0) {
    bool changed = false;
    for (int i = n_cav - 1; i >= 0 && excess > 0; --i) {
      if (out[i] > min_v) {
        --out[i];
        --excess;
        changed = true;
      }
    }
    if (!changed) throw std::invalid_argument("spread_hdv_counts: budget unreachable");
  }
  if (excess < 0) throw std::invalid_argument("spread_hdv_counts: listed values too small");
  return out;
}

inline ScenarioConfig scenario_preset(const std::string& name) {
  ScenarioConfig c;
  c.name = name;
  if (name == "moderate") {
    // 15 vehicles, 5 CAVs at positions 1,4,7,10,13; sinusoidal head wave
    c.hdv_counts = {2, 2, 2, 2, 2};
    c.data_len_central = 1200;
    c.data_len_local = 300;
    c.w_v = 1.0;
    c.w_s = 0.5;
    c.w_u = 0.1;
    c.lambda_g_central = 10.0;
    c.lambda_y_central = 1e4;
    c.lambda_g_local = 2.0;
    c.lambda_y_local = 1e4;
    c.head_kind = "sinusoid";
    c.head_amplitude = 4.0;
    c.head_period = 12.0;
    c.duration = 25.0;
  } else if (name == "large5" || name == "large10" || name == "large20") {
    c.head_kind = "brake";
    c.duration = 150.0;
    c.lambda_g_local = 2.0;
    c.lambda_y_local = 1e4;
    if (name == "large5") {
      c.hdv_counts = spread_hdv_counts({16, 17, 19, 20, 23}, 5, 95);
      c.data_len_local = 800;
      c.w_v = 2.0;
      c.w_s = 1.0;
      c.w_u = 0.2;
    } else if (name == "large10") {
      c.hdv_counts = spread_hdv_counts({7, 8, 9, 10, 11}, 10, 90);
      c.data_len_local = 600;
      c.w_v = 1.0;
      c.w_s = 0.5;
      c.w_u = 0.1;
    } else {
      c.hdv_counts = spread_hdv_counts({3, 4, 5, 6, 7}, 20, 80);
      c.data_len_local = 600;
      c.w_v = 1.0;
      c.w_s = 0.5;
      c.w_u = 0.1;
    }
    c.data_len_central = 0;  // the centralized controller is not run at this scale
  } else {
    throw std::invalid_argument("scenario_preset: unknown preset " + name);
  }
  c.validate();
  return c;
}

inline void to_json(nlohmann::json& j, const Bounds& b) {
  j = {{"a_min", b.a_min},
       {"a_max", b.a_max},
       {"s_err_min", b.s_err_min},
       {"s_err_max", b.s_err_max}};
}

inline void from_json(const nlohmann::json& j, Bounds& b) {
  j.at("a_min").get_to(b.a_min);
  j.at("a_max").get_to(b.a_max);
  j.at("s_err_min").get_to(b.s_err_min);
  j.at("s_err_max").get_to(b.s_err_max);
}

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  j = {{"name", c.name},
       {"hdv_counts", c.hdv_counts},
       {"t_ini", c.t_ini},
       {"horizon", c.horizon},
       {"w_v", c.w_v},
       {"w_s", c.w_s},
       {"w_u", c.w_u},
       {"lambda_g_central", c.lambda_g_central},
       {"lambda_y_central", c.lambda_y_central},
       {"lambda_g_local", c.lambda_g_local},
       {"lambda_y_local", c.lambda_y_local},
       {"bounds", c.bounds},
       {"v_star", c.v_star},
       {"s_star", c.s_star},
       {"dt", c.dt},
       {"hdv_noise", c.hdv_noise},
       {"hdv_param_seed", c.hdv_param_seed},
       {"noise_seed", c.noise_seed},
       {"data_seed", c.data_seed},
       {"head_kind", c.head_kind},
       {"head_base", c.head_base},
       {"head_amplitude", c.head_amplitude},
       {"head_period", c.head_period},
       {"init_hold", c.init_hold},
       {"duration", c.duration},
       {"data_len_central", c.data_len_central},
       {"data_len_local", c.data_len_local},
       {"rho", c.rho},
       {"admm_max_iterations", c.admm_max_iterations},
       {"admm_delay_steps", c.admm_delay_steps},
       {"admm_delta_abs", c.admm_delta_abs},
       {"admm_delta_rel", c.admm_delta_rel},
       {"parallel", c.parallel},
       {"qp_tol", c.qp_tol},
       {"qp_max_iter", c.qp_max_iter}};
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  j.at("name").get_to(c.name);
  j.at("hdv_counts").get_to(c.hdv_counts);
  j.at("t_ini").get_to(c.t_ini);
  j.at("horizon").get_to(c.horizon);
  j.at("w_v").get_to(c.w_v);
  j.at("w_s").get_to(c.w_s);
  j.at("w_u").get_to(c.w_u);
  j.at("lambda_g_central").get_to(c.lambda_g_central);
  j.at("lambda_y_central").get_to(c.lambda_y_central);
  j.at("lambda_g_local").get_to(c.lambda_g_local);
  j.at("lambda_y_local").get_to(c.lambda_y_local);
  j.at("bounds").get_to(c.bounds);
  j.at("v_star").get_to(c.v_star);
  j.at("s_star").get_to(c.s_star);
  j.at("dt").get_to(c.dt);
  j.at("hdv_noise").get_to(c.hdv_noise);
  j.at("hdv_param_seed").get_to(c.hdv_param_seed);
  j.at("noise_seed").get_to(c.noise_seed);
  j.at("data_seed").get_to(c.data_seed);
  j.at("head_kind").get_to(c.head_kind);
  j.at("head_base").get_to(c.head_base);
  j.at("head_amplitude").get_to(c.head_amplitude);
  j.at("head_period").get_to(c.head_period);
  j.at("init_hold").get_to(c.init_hold);
  j.at("duration").get_to(c.duration);
  j.at("data_len_central").get_to(c.data_len_central);
  j.at("data_len_local").get_to(c.data_len_local);
  j.at("rho").get_to(c.rho);
  j.at("admm_max_iterations").get_to(c.admm_max_iterations);
  j.at("admm_delay_steps").get_to(c.admm_delay_steps);
  j.at("admm_delta_abs").get_to(c.admm_delta_abs);
  j.at("admm_delta_rel").get_to(c.admm_delta_rel);
  j.at("parallel").get_to(c.parallel);
  j.at("qp_tol").get_to(c.qp_tol);
  j.at("qp_max_iter").get_to(c.qp_max_iter);
}

inline void save_scenario(const std::string& path, const ScenarioConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_scenario: cannot open " + path);
  nlohmann::json j = cfg;
  out << j.dump(2) << "\n";
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_scenario: cannot open " + path);
  nlohmann::json j;
  in >> j;
  ScenarioConfig cfg = j.get<ScenarioConfig>();
  cfg.validate();
  return cfg;
}

}  // namespace deeplcc
