// Acceptance suite: every criterion prints one PASS/FAIL line with its
// measured values; the process exit code is the number of failures.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <thread>
#include <vector>

#include "deeplcc/experiment.hpp"
#include "test_helpers.hpp"

using namespace deeplcc;
using deeplcc::testing::LtiScenario;
using deeplcc::testing::make_lti_scenario;
using deeplcc::testing::partition_pasts;

namespace {

int failures = 0;
std::chrono::steady_clock::time_point t_start;

void begin(const char* name) {
  std::printf("== %s\n", name);
  std::fflush(stdout);
  t_start = std::chrono::steady_clock::now();
}

void verdict(int index, bool ok, const std::string& detail) {
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  std::printf("[%s] criterion %d: %s (%.1f s)\n", ok ? "PASS" : "FAIL", index,
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// ---- 1. fundamental-lemma exactness on a CF-LCC subsystem ------------------

void criterion_1() {
  begin("fundamental-lemma exactness (subsystem, m_i = 2, T_i = 300)");
  const PartitionLayout layout{{2}};
  const int t_ini = 20, horizon = 50;
  const LtiScenario sc = make_lti_scenario(layout, 300, t_ini, horizon, 1001);
  const HankelBlocks b = split_past_future(sc.data, t_ini, horizon);
  const bool pe = is_persistently_exciting(sc.data.u, t_ini + horizon + 2 + 2 * 2);

  Mat A(b.u_past.rows() + b.e_past.rows() + b.y_past.rows() + b.u_future.rows() +
            b.e_future.rows(),
        b.g_dim);
  A << b.u_past, b.e_past, b.y_past, b.u_future, b.e_future;
  const auto solver = A.completeOrthogonalDecomposition();

  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Mat u_plan(1, horizon), e_plan(1, horizon);
    for (int k = 0; k < horizon; ++k) {
      u_plan(0, k) = d(rng);
      e_plan(0, k) = d(rng);
    }
    Vec rhs(A.rows());
    rhs << sc.u_ini, sc.eps_ini, sc.y_ini, u_plan.row(0).transpose(),
        e_plan.row(0).transpose();
    const Vec g = solver.solve(rhs);
    const RolloutResult oracle = lti_rollout(sc.chain, sc.x_t, u_plan, e_plan);
    const Vec y_pred = b.y_future * g;
    for (int k = 0; k < horizon; ++k) {
      worst = std::max(worst, (y_pred.segment(k * 4, 4) - Vec(oracle.y.col(k)))
                                  .lpNorm<Eigen::Infinity>());
    }
  }
  verdict(1, pe && worst <= 1e-6,
          fmt("PE holds, max |y_pred - y_rollout| = %.3g over 50 input pairs "
              "(tolerance 1e-6)",
              worst));
}

// ---- 2. centralized / cooperative equivalence ------------------------------

void criterion_2() {
  begin("linear centralized vs cooperative equivalence (n = 2, m = 2)");
  const PartitionLayout layout{{1, 1}};
  const int t_ini = 10, horizon = 15;
  const LtiScenario sc = make_lti_scenario(layout, 140, t_ini, horizon, 2002, 1.0, 0.5, 0.3);
  const HankelBlocks central_blocks = split_past_future(sc.data, t_ini, horizon);
  const auto logs = partition_centralized_log(sc.data, layout);
  const auto pasts = partition_pasts(sc);
  std::vector<HankelBlocks> local_blocks;
  for (const auto& log : logs) local_blocks.push_back(split_past_future(log, t_ini, horizon));

  const BoxQp central_qp =
      assemble_central_linear(layout, central_blocks, 1.0, 0.5, 0.1, Bounds{},
                              sc.u_ini, sc.eps_ini, sc.y_ini);
  const BoxQp coop_qp = assemble_cooperative_linear(local_blocks, 1.0, 0.5, 0.1, Bounds{},
                                                    pasts.u_ini, pasts.eps_ini, pasts.y_ini);
  const BoxQpResult rc = solve_box_qp(central_qp, 1e-9, 400000);
  const BoxQpResult rl = solve_box_qp(coop_qp, 1e-9, 400000);
  const double vc = rc.objective;
  const double vl = rl.objective;
  const double rel = std::abs(vc - vl) / std::max({std::abs(vc), std::abs(vl), 1e-12});
  verdict(2,
          rc.status == QpStatus::Converged && rl.status == QpStatus::Converged &&
              rel <= 1e-5,
          fmt("V_central = %.8g, sum V_i = %.8g, relative gap = %.3g (tolerance 1e-5)",
              vc, vl, rel));
}

// ---- 3. distributed solver vs centralized reference solve ------------------

void criterion_3() {
  begin("distributed solves vs centralized reference on 20 random instances");
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> n_pick(2, 3), m_pick(0, 2);
  const double amp = 150.0;
  int ok_count = 0;
  double worst_rel = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const int n = n_pick(rng);
    const int t_ini = 4, horizon = 6;
    std::vector<HankelBlocks> blocks(n);
    std::vector<Vec> u_ini(n), e_ini(n), y_ini(n);
    CoopWeights wi;
    wi.w_v = 0.5 + u01(rng);
    wi.w_s = 0.3 + u01(rng);
    wi.w_u = 0.1 + 0.3 * u01(rng);
    wi.lambda_g = 1.0 + 4.0 * u01(rng);
    wi.lambda_y = 2.0 + 6.0 * u01(rng);
    Bounds bounds;
    bounds.a_min = -amp;
    bounds.a_max = 0.4 * amp;
    bounds.s_err_min = -3 * amp;
    bounds.s_err_max = 4 * amp;
    for (int i = 0; i < n; ++i) {
      const int m_i = m_pick(rng);
      const int T = 60 + 10 * m_i;
      Mat u(1, T), e(1, T), y(m_i + 2, T);
      for (int k = 0; k < u.size(); ++k) u(k) = amp * d(rng);
      for (int k = 0; k < e.size(); ++k) e(k) = amp * d(rng);
      for (int k = 0; k < y.size(); ++k) y(k) = amp * d(rng);
      blocks[i] = split_past_future(u, e, y, t_ini, horizon);
      u_ini[i] = Vec::NullaryExpr(t_ini, [&](int) { return amp * d(rng); });
      e_ini[i] = Vec::NullaryExpr(t_ini, [&](int) { return amp * d(rng); });
      y_ini[i] = Vec::NullaryExpr(t_ini * (m_i + 2), [&](int) { return 2 * amp * d(rng); });
    }
    auto subs = build_cooperative(blocks, std::vector<CoopWeights>(n, wi), bounds,
                                  u_ini, e_ini, y_ini);
    const BoxQp qp = assemble_decomposable(subs);
    const BoxQpResult oracle = solve_box_qp(qp, 1e-10, 300000);
    const double obj_oracle = decomposable_cost(subs, oracle.x);

    // run to the field stopping tolerances (no round cap for the accuracy claim)
    CommPolicy pol;
    pol.max_iterations = 60000;
    DistributedSolver solver(subs, 1.0, pol);
    solver.step(u_ini, e_ini, y_ini);
    Vec g_stacked(qp.eq.H.rows());
    int off = 0;
    for (int i = 0; i < n; ++i) {
      g_stacked.segment(off, subs[i].g_dim()) = solver.iterates()[i].g;
      off += subs[i].g_dim();
    }
    const double obj = decomposable_cost(subs, g_stacked);
    const double gap = std::abs(obj - obj_oracle);
    const bool ok = oracle.status == QpStatus::Converged &&
                    gap <= std::max(1e-2 * std::abs(obj_oracle), 1e-3);
    worst_rel = std::max(worst_rel, gap / std::max(std::abs(obj_oracle), 1e-12));
    if (ok) ++ok_count;
  }
  verdict(3, ok_count == 20,
          fmt("%d/20 instances within max(1e-2 rel, 1e-3 abs); worst relative gap %.3g",
              ok_count, worst_rel));
}

// ---- 4. moderate-scale cost ordering ---------------------------------------

struct ModerateResult {
  double hdv = 0, central = 0, distributed = 0;
};

ModerateResult moderate_seed_run(int seed) {
  ScenarioConfig cfg = scenario_preset("moderate");
  cfg.data_seed += seed;
  cfg.noise_seed += seed;
  cfg.parallel = false;  // seeds already run two at a time
  const CollectedData data = collect_data(cfg, /*want_central=*/true);
  ModerateResult r;
  r.hdv = run_closed_loop(cfg, ControllerMode::None, data).real_cost;
  r.central = run_closed_loop(cfg, ControllerMode::Central, data).real_cost;
  r.distributed = run_closed_loop(cfg, ControllerMode::Distributed, data).real_cost;
  return r;
}

void criterion_4() {
  begin("moderate-scale cost ordering over 20 seeded runs");
  const int n_seeds = 20;
  std::vector<ModerateResult> results(n_seeds);
  std::atomic<int> next{0};
  auto worker = [&] {
    int s;
    while ((s = next.fetch_add(1)) < n_seeds) results[s] = moderate_seed_run(s);
  };
  std::thread a(worker), b(worker);
  a.join();
  b.join();
  double hdv = 0, cen = 0, dis = 0;
  for (const auto& r : results) {
    hdv += r.hdv;
    cen += r.central;
    dis += r.distributed;
  }
  hdv /= n_seeds;
  cen /= n_seeds;
  dis /= n_seeds;
  const bool ok = cen <= dis && dis <= 1.35 * cen && cen <= 0.7 * hdv && dis <= 0.7 * hdv;
  verdict(4, ok,
          fmt("mean real cost: all-HDV %.4g, central %.4g, distributed %.4g "
              "(distributed/central = %.3f, central/all-HDV = %.3f)",
              hdv, cen, dis, dis / cen, cen / hdv));
}

// ---- 5 & 6. large-scale wave dampening, fuel and iteration economy ---------

void criteria_5_and_6() {
  begin("large-scale brake scenario, 20% penetration");
  ScenarioConfig cfg = scenario_preset("large20");
  const CollectedData data = collect_data(cfg, /*want_central=*/false);
  const RunMetrics hdv = run_closed_loop(cfg, ControllerMode::None, data);
  const RunMetrics dist = run_closed_loop(cfg, ControllerMode::Distributed, data);

  const double fuel_reduction = 100.0 * (hdv.fuel_total - dist.fuel_total) / hdv.fuel_total;
  const double amp_hdv = velocity_oscillation_amplitude(hdv, 100, cfg.v_star);
  const double amp_dist = velocity_oscillation_amplitude(dist, 100, cfg.v_star);
  const double amp_reduction = 100.0 * (amp_hdv - amp_dist) / amp_hdv;
  const bool ok5 = !dist.collision && fuel_reduction >= 25.0 && amp_reduction >= 50.0;
  verdict(5, ok5,
          fmt("fuel reduction %.2f%% (>= 25%%), vehicle-100 oscillation %.2f -> %.2f m/s, "
              "reduction %.1f%% (>= 50%%)%s",
              fuel_reduction, amp_hdv, amp_dist, amp_reduction,
              dist.collision ? ", COLLISION" : ""));

  t_start = std::chrono::steady_clock::now();
  const bool ok6 = dist.mean_iterations >= 4.0 && dist.mean_iterations <= 20.0 &&
                   dist.mean_solve_ms < 500.0;
  verdict(6, ok6,
          fmt("mean rounds per step %.2f (in [4, 20]), mean step wall %.1f ms (< 500 ms)",
              dist.mean_iterations, dist.mean_solve_ms));
}

// ---- 7. imperfect-condition robustness -------------------------------------

void criterion_7() {
  begin("imperfect-condition degradation over 10 seeds");
  ScenarioConfig cfg = scenario_preset("moderate");
  cfg.data_len_central = 0;  // distributed only
  const std::vector<SweepCondition> conds{{1, 0}, {1, 4}};
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < 10; ++s) seeds.push_back(s);
  const auto cells = sweep_imperfect(cfg, conds, seeds);
  const double deg_cap = cells[0].degradation_pct;
  const double deg_cap_delay = cells[1].degradation_pct;
  const bool ok = deg_cap < 15.0 && deg_cap_delay < 20.0;
  verdict(7, ok,
          fmt("1 round: %.2f%% (< 15%%); 1 round + 0.2 s delay: %.2f%% (< 20%%)",
              deg_cap, deg_cap_delay));
}

// ---- 8. randomized invariant suites ----------------------------------------

void criterion_8() {
  begin("randomized invariant suites, 1000 cases each");
  std::mt19937_64 rng(8008);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  int bad = 0;
  std::string first_fail;

  auto fail = [&](const std::string& what) {
    ++bad;
    if (first_fail.empty()) first_fail = what;
  };

  // Hankel shift structure
  {
    std::uniform_int_distribution<int> dim_pick(1, 4), len_pick(3, 30);
    for (int rep = 0; rep < 1000; ++rep) {
      const int dim = dim_pick(rng), len = len_pick(rng);
      std::uniform_int_distribution<int> ord(1, len);
      const int l = ord(rng);
      Mat seq(dim, len);
      for (int i = 0; i < seq.size(); ++i) seq(i) = d(rng);
      const Mat h = build_hankel(seq, l);
      bool ok = h.rows() == dim * l && h.cols() == len - l + 1;
      for (int k = 0; ok && k + 1 < l; ++k) {
        for (int j = 0; ok && j + 1 < h.cols(); ++j) {
          ok = (h.block((k + 1) * dim, j, dim, 1) - h.block(k * dim, j + 1, dim, 1))
                   .norm() == 0.0;
        }
      }
      if (!ok) fail("hankel shift");
    }
  }

  // persistent-excitation monotonicity
  {
    std::uniform_int_distribution<int> len_pick(14, 40);
    for (int rep = 0; rep < 1000; ++rep) {
      const int len = len_pick(rng);
      Mat seq(1, len);
      for (int i = 0; i < len; ++i) seq(0, i) = d(rng);
      std::uniform_int_distribution<int> ord(2, len / 2);
      const int l = ord(rng);
      if (is_persistently_exciting(seq, l)) {
        for (int lp = 1; lp < l; ++lp) {
          if (!is_persistently_exciting(seq, lp)) {
            fail("pe monotonicity");
            break;
          }
        }
      }
    }
  }

  // partition round trip
  {
    std::uniform_int_distribution<int> n_pick(1, 4), m_pick(0, 3), len_pick(2, 10);
    for (int rep = 0; rep < 1000; ++rep) {
      PartitionLayout layout;
      const int n = n_pick(rng);
      for (int i = 0; i < n; ++i) layout.hdv_counts.push_back(m_pick(rng));
      const int len = len_pick(rng);
      TrajectoryLog log;
      log.u.resize(n, len);
      log.eps.resize(1, len);
      log.y.resize(layout.y_dim_total(), len);
      for (int i = 0; i < log.u.size(); ++i) log.u(i) = d(rng);
      for (int i = 0; i < log.eps.size(); ++i) log.eps(i) = d(rng);
      for (int i = 0; i < log.y.size(); ++i) log.y(i) = d(rng);
      const auto parts = partition_centralized_log(log, layout);
      bool ok = true;
      for (int i = 0; i < n && ok; ++i) {
        ok = (parts[i].u - log.u.row(i)).norm() == 0.0 &&
             (parts[i].y - log.y.middleRows(layout.y_offset(i), layout.y_dim(i))).norm() ==
                 0.0;
      }
      for (int i = 0; i + 1 < n && ok; ++i) {
        const Selectors sel = build_selectors(layout.hdv_counts[i], 1);
        for (int k = 0; k < len && ok; ++k) {
          ok = parts[i + 1].eps(0, k) == (sel.tail_velocity * parts[i].y.col(k))(0);
        }
      }
      if (!ok) fail("partition round trip");
    }
  }

  // selector extraction
  {
    std::uniform_int_distribution<int> m_pick(0, 5), n_pick(1, 8);
    for (int rep = 0; rep < 1000; ++rep) {
      const int m = m_pick(rng), horizon = n_pick(rng);
      const Selectors s = build_selectors(m, horizon);
      Vec y(horizon * (m + 2));
      for (int i = 0; i < y.size(); ++i) y(i) = d(rng);
      const Vec tail = s.tail_velocity * y, spac = s.cav_spacing * y;
      bool ok = true;
      for (int k = 0; k < horizon && ok; ++k) {
        ok = tail(k) == y(k * (m + 2) + m) && spac(k) == y(k * (m + 2) + m + 1);
      }
      if (!ok) fail("selector extraction");
    }
  }

  // projection idempotence
  {
    for (int rep = 0; rep < 1000; ++rep) {
      Vec v(8);
      for (int i = 0; i < 8; ++i) v(i) = 30.0 * d(rng);
      const double lo = -3.0 + d(rng), hi = 3.0 + d(rng);
      const Vec once = clamp(v, lo, hi);
      if ((clamp(once, lo, hi) - once).lpNorm<Eigen::Infinity>() != 0.0) {
        fail("projection idempotence");
      }
    }
  }

  // box and equality feasibility of the distributed update steps
  {
    std::uniform_int_distribution<int> m_pick(0, 2);
    for (int rep = 0; rep < 1000; ++rep) {
      const int m_i = m_pick(rng);
      const int t_ini = 3, horizon = 4;
      const int T = 40;
      Mat u(1, T), e(1, T), y(m_i + 2, T);
      for (int k = 0; k < u.size(); ++k) u(k) = d(rng);
      for (int k = 0; k < e.size(); ++k) e(k) = d(rng);
      for (int k = 0; k < y.size(); ++k) y(k) = d(rng);
      SubsystemProblem sub = build_subsystem_problem(
          split_past_future(u, e, y, t_ini, horizon), rep % 2, 2, CoopWeights{}, Bounds{});
      const Vec u_ini = Vec::NullaryExpr(t_ini, [&](int) { return d(rng); });
      const Vec e_ini = Vec::NullaryExpr(t_ini, [&](int) { return d(rng); });
      const Vec y_ini =
          Vec::NullaryExpr(t_ini * (m_i + 2), [&](int) { return d(rng); });
      sub.set_past(u_ini, e_ini, y_ini);
      const SubsystemFactors fac = prefactor(sub, 1.0);
      AdmmIterate it;
      it.init_zero(sub.g_dim(), horizon, sub.has_successor());
      for (int i = 0; i < it.z.size(); ++i) it.z(i) = d(rng);
      for (int i = 0; i < it.mu.size(); ++i) it.mu(i) = d(rng);
      for (int i = 0; i < horizon; ++i) {
        it.s(i) = d(rng);
        it.u(i) = d(rng);
        it.phi(i) = 20.0 * d(rng);
        it.theta(i) = 20.0 * d(rng);
      }
      Vec fwd = Vec::NullaryExpr(horizon, [&](int) { return d(rng); });
      it.g_new = update_weights(sub, fac, it, sub.is_head() ? nullptr : &fwd, 1.0);
      if ((sub.eq_mat * it.g_new - sub.eq_rhs).norm() >
          1e-8 * (1.0 + sub.eq_rhs.norm())) {
        fail("equality feasibility");
      }
      Vec bwd = Vec::NullaryExpr(horizon, [&](int) { return d(rng); });
      update_copy_and_boxes(sub, fac, it, sub.has_successor() ? &bwd : nullptr, 1.0);
      const Bounds bb;
      if (it.u_new.minCoeff() < bb.a_min || it.u_new.maxCoeff() > bb.a_max ||
          it.s_new.minCoeff() < bb.s_err_min || it.s_new.maxCoeff() > bb.s_err_max) {
        fail("box feasibility");
      }
    }
  }

  verdict(8, bad == 0,
          bad == 0 ? "6 suites x 1000 randomized cases, all invariants held"
                   : fmt("%d case(s) failed, first: %s", bad, first_fail.c_str()));
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  const auto t0 = std::chrono::steady_clock::now();
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_8();
  criterion_4();
  criteria_5_and_6();
  criterion_7();
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s: %d failure(s), total %.1f s\n", failures == 0 ? "OK" : "FAILED",
              failures, total);
  return failures;
}
