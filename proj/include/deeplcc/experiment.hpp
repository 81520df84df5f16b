#pragma once

// Closed-loop experiment machinery: offline data collection with excitation,
// receding-horizon runs under the three controller modes, imperfect-condition
// sweeps, and CSV emission for trajectories, per-step solver stats and
// summaries.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "admm.hpp"
#include "central.hpp"
#include "cooperative.hpp"
#include "csv.hpp"
#include "ovm.hpp"
#include "plant.hpp"
#include "scenario.hpp"
#include "trajectory.hpp"

namespace deeplcc {

enum class ControllerMode { None, Central, Distributed };

inline std::string mode_name(ControllerMode m) {
  switch (m) {
    case ControllerMode::None: return "none";
    case ControllerMode::Central: return "central";
    case ControllerMode::Distributed: return "distributed";
  }
  return "?";
}

inline ControllerMode parse_mode(const std::string& s) {
  if (s == "none") return ControllerMode::None;
  if (s == "central") return ControllerMode::Central;
  if (s == "distributed") return ControllerMode::Distributed;
  throw std::invalid_argument("unknown controller mode: " + s);
}

struct CollectedData {
  TrajectoryLog central;                // excitation run of the full chain
  std::vector<TrajectoryLog> local;     // partitioned, truncated to the local length
  int attempts = 1;                     // excitation rejections + 1
};

// Simulates the noisy nonlinear plant from equilibrium under excitation
// inputs: the head holds the equilibrium velocity plus an integrated
// acceleration dither, each CAV applies an i.i.d. uniform input plus a weak
// stabilizing feedback that keeps the spacing random walk bounded over long
// records. The recorded input is the total applied acceleration. Collection
// is rejected and redrawn if the excitation assumptions fail.
inline CollectedData collect_data(const ScenarioConfig& cfg, bool want_central,
                                  int max_attempts = 5) {
  cfg.validate();
  const PartitionLayout layout = cfg.layout();
  const int n = layout.n_cav();
  const int len = want_central ? std::max(cfg.data_len_central, cfg.data_len_local)
                               : cfg.data_len_local;
  if (len < cfg.t_ini + cfg.horizon) {
    throw std::invalid_argument("collect_data: data length below T_ini + N");
  }
  const auto params = draw_hdv_params(cfg);
  const MixedChain chain(layout_roles(layout), params, cfg.v_star, cfg.s_star,
                         cfg.bounds, cfg.dt);

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::mt19937_64 input_rng(cfg.data_seed + 1000003ULL * attempt);
    std::mt19937_64 noise_rng(cfg.noise_seed + 999983ULL * attempt);
    std::uniform_real_distribution<double> dither(-1.0, 1.0);

    VehicleChainState st = chain.equilibrium_state();
    double head_v = cfg.v_star;
    TrajectoryLog log;
    log.dt = cfg.dt;
    log.u.resize(n, len);
    log.eps.resize(1, len);
    log.y.resize(layout.y_dim_total(), len);

    for (int k = 0; k < len; ++k) {
      const Vec y = chain.measure_output(st, layout);
      Vec u(n);
      for (int i = 0; i < n; ++i) {
        const int c = layout.cav_position(i);
        const double v_err = st.velocity(c + 1) - cfg.v_star;
        const double s_err = st.spacing(c) - cfg.s_star;
        u(i) = dither(input_rng) - 0.3 * v_err + 0.05 * s_err;
      }
      log.u.col(k) = u;
      log.eps(0, k) = chain.head_velocity_error(st);
      log.y.col(k) = y;
      head_v += cfg.dt * dither(input_rng);
      chain.step_with_head_velocity(st, head_v, u, noise_rng, cfg.hdv_noise);
    }

    bool exciting = true;
    if (want_central) {
      const int order = cfg.t_ini + cfg.horizon + 2 * n + 2 * layout.m_hdv();
      exciting = is_persistently_exciting(log.u, order);
    }
    auto locals = partition_centralized_log(log, layout);
    for (int i = 0; i < n && exciting; ++i) {
      locals[i].u = locals[i].u.leftCols(cfg.data_len_local).eval();
      locals[i].eps = locals[i].eps.leftCols(cfg.data_len_local).eval();
      locals[i].y = locals[i].y.leftCols(cfg.data_len_local).eval();
      const int order = cfg.t_ini + cfg.horizon + 2 + 2 * layout.hdv_counts[i];
      exciting = is_persistently_exciting(locals[i].u, order);
    }
    if (!exciting) continue;

    CollectedData out;
    out.central = std::move(log);
    out.local = std::move(locals);
    out.attempts = attempt + 1;
    return out;
  }
  throw std::runtime_error("collect_data: excitation check failed after retries");
}

struct RunMetrics {
  double real_cost = 0.0;
  double fuel_total = 0.0;      // mL over all followers, controlled window
  double mean_iterations = 0.0;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  int steps = 0;
  double min_spacing = kInf;
  bool collision = false;
  long messages = 0;

  Mat velocity;   // (V+1) x steps, head first
  Mat spacing;    // V x steps
  Mat accel;      // V x steps (realized)
  Mat inputs;     // n x steps (applied CAV inputs; zero in the HDV baseline)
  Mat outputs;    // ny x steps (measured stacked output)
  Mat eps_row;    // 1 x steps (head velocity error)
  std::vector<int> iterations;       // distributed, per step
  std::vector<double> solve_ms;      // per step
  std::vector<ResidualReport> residuals;  // distributed, per step
};

namespace detail {

// Rolling past window of width t_ini, oldest first.
struct PastBuffer {
  Mat u, eps, y;
  int filled = 0;
  void init(int nu, int ny, int t_ini) {
    u = Mat::Zero(nu, t_ini);
    eps = Mat::Zero(1, t_ini);
    y = Mat::Zero(ny, t_ini);
  }
  void push(const Vec& u_k, double eps_k, const Vec& y_k) {
    const int w = static_cast<int>(u.cols());
    u.leftCols(w - 1) = u.rightCols(w - 1).eval();
    eps.leftCols(w - 1) = eps.rightCols(w - 1).eval();
    y.leftCols(w - 1) = y.rightCols(w - 1).eval();
    u.col(w - 1) = u_k;
    eps(0, w - 1) = eps_k;
    y.col(w - 1) = y_k;
    filled = std::min(filled + 1, w);
  }
  Vec stacked_u() const {
    Vec out(u.size());
    for (int k = 0; k < u.cols(); ++k) out.segment(k * u.rows(), u.rows()) = u.col(k);
    return out;
  }
  Vec stacked_eps() const { return eps.row(0).transpose(); }
  Vec stacked_y() const {
    Vec out(y.size());
    for (int k = 0; k < y.cols(); ++k) out.segment(k * y.rows(), y.rows()) = y.col(k);
    return out;
  }
};

}  // namespace detail

// Steps the plant and the chosen controller at the sampling interval over the
// configured horizon. The first init_hold seconds run at equilibrium with
// zero inputs to fill the past windows; cost and fuel accumulate over the
// controlled window only.
inline RunMetrics run_closed_loop(const ScenarioConfig& cfg, ControllerMode mode,
                                  const CollectedData& data) {
  cfg.validate();
  const PartitionLayout layout = cfg.layout();
  const int n = layout.n_cav();
  const int ny = layout.y_dim_total();
  const int nf = layout.n_vehicles();
  const auto params = draw_hdv_params(cfg);

  const std::vector<Role> roles = mode == ControllerMode::None
                                      ? std::vector<Role>(nf, Role::Hdv)
                                      : layout_roles(layout);
  const MixedChain chain(roles, params, cfg.v_star, cfg.s_star, cfg.bounds, cfg.dt);
  const HeadProfile head = cfg.head_profile();

  // controllers
  std::optional<CentralController> central;
  std::optional<DistributedSolver> distributed;
  if (mode == ControllerMode::Central) {
    if (data.central.length() < cfg.data_len_central || cfg.data_len_central <= 0) {
      throw std::invalid_argument("run_closed_loop: centralized data missing");
    }
    TrajectoryLog log = data.central;
    log.u = log.u.leftCols(cfg.data_len_central).eval();
    log.eps = log.eps.leftCols(cfg.data_len_central).eval();
    log.y = log.y.leftCols(cfg.data_len_central).eval();
    CentralWeights w{cfg.w_v, cfg.w_s, cfg.w_u, cfg.lambda_g_central, cfg.lambda_y_central};
    QpSettings qs;
    qs.tol = cfg.qp_tol;
    qs.max_iter = cfg.qp_max_iter;
    central.emplace(build_central_problem(layout, split_past_future(log, cfg.t_ini, cfg.horizon),
                                          w, cfg.bounds),
                    qs);
  } else if (mode == ControllerMode::Distributed) {
    if (static_cast<int>(data.local.size()) != n) {
      throw std::invalid_argument("run_closed_loop: local data missing");
    }
    std::vector<HankelBlocks> blocks;
    std::vector<Vec> u0(n), e0(n), y0(n);
    for (int i = 0; i < n; ++i) {
      blocks.push_back(split_past_future(data.local[i], cfg.t_ini, cfg.horizon));
      u0[i] = Vec::Zero(cfg.t_ini);
      e0[i] = Vec::Zero(cfg.t_ini);
      y0[i] = Vec::Zero(cfg.t_ini * layout.y_dim(i));
    }
    CoopWeights w{cfg.w_v, cfg.w_s, cfg.w_u, cfg.lambda_g_local, cfg.lambda_y_local};
    auto subs = build_cooperative(blocks, std::vector<CoopWeights>(n, w), cfg.bounds,
                                  u0, e0, y0);
    distributed.emplace(std::move(subs), cfg.rho, cfg.comm_policy());
  }

  // past windows
  detail::PastBuffer central_past;
  central_past.init(n, ny, cfg.t_ini);
  std::vector<detail::PastBuffer> local_past(n);
  for (int i = 0; i < n; ++i) local_past[i].init(1, layout.y_dim(i), cfg.t_ini);

  const int hold_steps = cfg.hold_steps();
  const int control_steps = cfg.control_steps();
  const int total_steps = hold_steps + control_steps;

  RunMetrics m;
  m.velocity.resize(nf + 1, control_steps);
  m.spacing.resize(nf, control_steps);
  m.accel.resize(nf, control_steps);
  m.inputs = Mat::Zero(n, control_steps);
  m.outputs.resize(ny, control_steps);
  m.eps_row.resize(1, control_steps);

  const Vec cost_diag = chain_output_weight(layout, cfg.w_v, cfg.w_s);

  std::mt19937_64 noise_rng(cfg.noise_seed);
  VehicleChainState st = chain.equilibrium_state();

  for (int k = 0; k < total_steps; ++k) {
    const bool controlled = k >= hold_steps;
    const double t = k * cfg.dt;
    const Vec y = chain.measure_output(st, layout);
    const double eps = chain.head_velocity_error(st);
    const Vec eps_subs = chain.reference_errors(st, layout);

    Vec u = Vec::Zero(n);
    double solve_ms = 0.0;
    if (controlled && mode == ControllerMode::Central) {
      const CentralStepResult r = central->step(central_past.stacked_u(),
                                                central_past.stacked_eps(),
                                                central_past.stacked_y());
      u = r.u_apply;
      solve_ms = r.solve_ms;
      m.solve_ms.push_back(r.solve_ms);
    } else if (controlled && mode == ControllerMode::Distributed) {
      std::vector<Vec> up(n), ep(n), yp(n);
      for (int i = 0; i < n; ++i) {
        up[i] = local_past[i].stacked_u();
        ep[i] = local_past[i].stacked_eps();
        yp[i] = local_past[i].stacked_y();
      }
      const AdmmStepResult r = distributed->step(up, ep, yp);
      u = r.u_apply;
      solve_ms = r.stats.wall_ms;
      m.solve_ms.push_back(r.stats.wall_ms);
      m.iterations.push_back(r.stats.iterations);
      m.residuals.push_back(r.stats.residuals);
      m.messages += r.stats.messages;
    }
    (void)solve_ms;

    // record past for the next solves
    central_past.push(u, eps, y);
    for (int i = 0; i < n; ++i) {
      Vec ui(1);
      ui << u(i);
      local_past[i].push(ui, eps_subs(i), y.segment(layout.y_offset(i), layout.y_dim(i)));
    }

    const Vec applied = mode == ControllerMode::None ? Vec(Vec::Zero(0)) : u;
    const Vec pre_velocity = st.velocity;
    const Vec accel = chain.step(st, head, t, applied, noise_rng, cfg.hdv_noise);

    if (controlled) {
      const int idx = k - hold_steps;
      m.real_cost += y.dot(cost_diag.asDiagonal() * y);
      if (mode != ControllerMode::None) m.real_cost += cfg.w_u * u.squaredNorm();
      for (int i = 0; i < nf; ++i) {
        m.fuel_total += cfg.dt * fuel_rate(pre_velocity(i + 1), accel(i));
      }
      m.velocity.col(idx) = pre_velocity;
      for (int i = 0; i < nf; ++i) m.spacing(i, idx) = st.position(i) - st.position(i + 1);
      m.accel.col(idx) = accel;
      if (mode != ControllerMode::None) m.inputs.col(idx) = u;
      m.outputs.col(idx) = y;
      m.eps_row(0, idx) = eps;
      m.steps = idx + 1;
      m.min_spacing = std::min(m.min_spacing, chain.min_spacing(st));
      if (m.min_spacing <= 0.0) {
        m.collision = true;
        m.velocity.conservativeResize(Eigen::NoChange, m.steps);
        m.spacing.conservativeResize(Eigen::NoChange, m.steps);
        m.accel.conservativeResize(Eigen::NoChange, m.steps);
        m.inputs.conservativeResize(Eigen::NoChange, m.steps);
        m.outputs.conservativeResize(Eigen::NoChange, m.steps);
        m.eps_row.conservativeResize(Eigen::NoChange, m.steps);
        break;
      }
    }
  }

  if (!m.iterations.empty()) {
    m.mean_iterations = std::accumulate(m.iterations.begin(), m.iterations.end(), 0.0) /
                        static_cast<double>(m.iterations.size());
  }
  if (!m.solve_ms.empty()) {
    m.mean_solve_ms = std::accumulate(m.solve_ms.begin(), m.solve_ms.end(), 0.0) /
                      static_cast<double>(m.solve_ms.size());
    m.max_solve_ms = *std::max_element(m.solve_ms.begin(), m.solve_ms.end());
  }
  return m;
}

// Peak absolute deviation of one vehicle's velocity from the equilibrium.
inline double velocity_oscillation_amplitude(const RunMetrics& m, int vehicle_row,
                                             double v_star) {
  return (m.velocity.row(vehicle_row).array() - v_star).abs().maxCoeff();
}

struct SweepCondition {
  int max_iterations = 300;
  int delay_steps = 0;
};

struct SweepCell {
  SweepCondition condition;
  double mean_cost = 0.0;
  double degradation_pct = 0.0;  // vs the ideal distributed run
};

// Mean real-cost degradation of the distributed controller under iteration
// caps and communication delays, relative to the ideal run, seed by seed.
inline std::vector<SweepCell> sweep_imperfect(const ScenarioConfig& base,
                                              const std::vector<SweepCondition>& conditions,
                                              const std::vector<std::uint64_t>& seeds) {
  double ideal_sum = 0.0;
  std::vector<double> cond_sum(conditions.size(), 0.0);
  for (const std::uint64_t seed : seeds) {
    ScenarioConfig cfg = base;
    cfg.data_seed = base.data_seed + seed;
    cfg.noise_seed = base.noise_seed + seed;
    const CollectedData data = collect_data(cfg, /*want_central=*/false);
    ScenarioConfig ideal = cfg;
    ideal.admm_max_iterations = 300;
    ideal.admm_delay_steps = 0;
    ideal_sum += run_closed_loop(ideal, ControllerMode::Distributed, data).real_cost;
    for (size_t c = 0; c < conditions.size(); ++c) {
      ScenarioConfig varied = cfg;
      varied.admm_max_iterations = conditions[c].max_iterations;
      varied.admm_delay_steps = conditions[c].delay_steps;
      cond_sum[c] += run_closed_loop(varied, ControllerMode::Distributed, data).real_cost;
    }
  }
  const double ideal_mean = ideal_sum / static_cast<double>(seeds.size());
  std::vector<SweepCell> cells;
  for (size_t c = 0; c < conditions.size(); ++c) {
    SweepCell cell;
    cell.condition = conditions[c];
    cell.mean_cost = cond_sum[c] / static_cast<double>(seeds.size());
    cell.degradation_pct = 100.0 * (cell.mean_cost - ideal_mean) / ideal_mean;
    cells.push_back(cell);
  }
  return cells;
}

// ---- Reporting -------------------------------------------------------------

// Physical trajectory table: time, per-vehicle velocity/spacing/acceleration
// and the applied inputs.
inline void write_physical_csv(const std::string& path, const ScenarioConfig& cfg,
                               const RunMetrics& m) {
  std::vector<std::string> header{"t"};
  const int nf = static_cast<int>(m.spacing.rows());
  header.push_back("v_head");
  for (int i = 0; i < nf; ++i) header.push_back("v_" + std::to_string(i + 1));
  for (int i = 0; i < nf; ++i) header.push_back("s_" + std::to_string(i + 1));
  for (int i = 0; i < nf; ++i) header.push_back("a_" + std::to_string(i + 1));
  for (int i = 0; i < m.inputs.rows(); ++i) header.push_back("u_" + std::to_string(i + 1));
  std::vector<std::vector<double>> rows;
  rows.reserve(m.steps);
  for (int k = 0; k < m.steps; ++k) {
    std::vector<double> row;
    row.push_back((cfg.hold_steps() + k) * cfg.dt);
    for (int i = 0; i <= nf; ++i) row.push_back(m.velocity(i, k));
    for (int i = 0; i < nf; ++i) row.push_back(m.spacing(i, k));
    for (int i = 0; i < nf; ++i) row.push_back(m.accel(i, k));
    for (int i = 0; i < m.inputs.rows(); ++i) row.push_back(m.inputs(i, k));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

// The measured closed-loop (u, eps, y) in the trajectory-log format, suitable
// for recomputing the tracking cost offline.
inline TrajectoryLog measured_log(const ScenarioConfig& cfg, const RunMetrics& m) {
  TrajectoryLog log;
  log.dt = cfg.dt;
  log.u = m.inputs.leftCols(m.steps);
  log.eps = m.eps_row.leftCols(m.steps);
  log.y = m.outputs.leftCols(m.steps);
  return log;
}

// Per-step solver statistics (distributed runs).
inline void write_stats_csv(const std::string& path, const ScenarioConfig& cfg,
                            const RunMetrics& m) {
  std::vector<std::string> header{"step", "iterations", "solve_ms",
                                  "r_pri_1", "r_pri_2", "r_pri_3", "r_pri_4",
                                  "r_dual_1", "r_dual_2", "r_dual_3", "r_dual_4"};
  std::vector<std::vector<double>> rows;
  for (size_t k = 0; k < m.iterations.size(); ++k) {
    std::vector<double> row{static_cast<double>(k),
                            static_cast<double>(m.iterations[k]), m.solve_ms[k]};
    for (int g = 0; g < 4; ++g) row.push_back(m.residuals[k].r_pri[g]);
    for (int g = 0; g < 4; ++g) row.push_back(m.residuals[k].r_dual[g]);
    rows.push_back(std::move(row));
  }
  (void)cfg;
  write_csv(path, header, rows);
}

// Gnuplot-ready velocity heatmap: one row per vehicle, one column per sample.
inline void write_heatmap_dat(const std::string& path, const RunMetrics& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_heatmap_dat: cannot open " + path);
  for (int i = 0; i < m.velocity.rows(); ++i) {
    for (int k = 0; k < m.steps; ++k) {
      out << format_double(m.velocity(i, k)) << (k + 1 < m.steps ? " " : "");
    }
    out << "\n";
  }
}

struct SummaryRow {
  std::string scenario;
  std::string mode;
  std::uint64_t seed = 0;
  RunMetrics metrics;
};

inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_summary_csv: cannot open " + path);
  out << "scenario,mode,seed,steps,real_cost,fuel_ml,mean_iterations,mean_solve_ms,"
         "min_spacing,collision,messages\n";
  for (const SummaryRow& r : rows) {
    out << r.scenario << "," << r.mode << "," << r.seed << "," << r.metrics.steps << ","
        << format_double(r.metrics.real_cost) << "," << format_double(r.metrics.fuel_total)
        << "," << format_double(r.metrics.mean_iterations) << ","
        << format_double(r.metrics.mean_solve_ms) << ","
        << format_double(r.metrics.min_spacing) << "," << (r.metrics.collision ? 1 : 0)
        << "," << r.metrics.messages << "\n";
  }
}

// Emits the full set of artifacts for one run under dir/prefix_*.
inline void report_run(const std::string& dir, const std::string& prefix,
                       const ScenarioConfig& cfg, const RunMetrics& m) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string base = dir + "/" + prefix;
  write_physical_csv(base + "_trajectory.csv", cfg, m);
  write_trajectory_csv(base + "_measured.csv", measured_log(cfg, m), cfg.layout());
  write_trajectory_sidecar(base + "_measured.json", measured_log(cfg, m), cfg.layout());
  write_heatmap_dat(base + "_heatmap.dat", m);
  if (!m.iterations.empty()) write_stats_csv(base + "_admm_stats.csv", cfg, m);
}

}  // namespace deeplcc
