#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <numeric>

#include "deeplcc/scenario.hpp"

using namespace deeplcc;
using Catch::Approx;

TEST_CASE("scenario config round-trips through JSON losslessly") {
  ScenarioConfig cfg = scenario_preset("moderate");
  cfg.data_seed = 999;
  cfg.admm_delay_steps = 4;
  cfg.qp_tol = 2.5e-4;
  const std::string path = "/tmp/deeplcc_test_cfg.json";
  save_scenario(path, cfg);
  const ScenarioConfig back = load_scenario(path);
  nlohmann::json a = cfg, b = back;
  REQUIRE(a == b);
  std::remove(path.c_str());
}

TEST_CASE("moderate preset pins the published parameter set") {
  const ScenarioConfig c = scenario_preset("moderate");
  REQUIRE(c.hdv_counts == std::vector<int>{2, 2, 2, 2, 2});
  REQUIRE(c.layout().n_vehicles() == 15);
  REQUIRE(c.t_ini == 20);
  REQUIRE(c.horizon == 50);
  REQUIRE(c.w_v == 1.0);
  REQUIRE(c.w_s == 0.5);
  REQUIRE(c.w_u == 0.1);
  REQUIRE(c.lambda_g_central == 10.0);
  REQUIRE(c.lambda_y_central == 1e4);
  REQUIRE(c.lambda_g_local == 2.0);
  REQUIRE(c.lambda_y_local == 1e4);
  REQUIRE(c.data_len_central == 1200);
  REQUIRE(c.data_len_local == 300);
  REQUIRE(c.v_star == 15.0);
  REQUIRE(c.s_star == 20.0);
  REQUIRE(c.dt == 0.05);
  REQUIRE(c.bounds.a_min == -5.0);
  REQUIRE(c.bounds.a_max == 2.0);
  REQUIRE(c.bounds.s_err_min == -15.0);
  REQUIRE(c.bounds.s_err_max == 20.0);
  REQUIRE(c.rho == 1.0);
  REQUIRE(c.admm_max_iterations == 300);
  REQUIRE(c.admm_delta_abs == 0.1);
  REQUIRE(c.admm_delta_rel == 1e-3);
}

TEST_CASE("large-scale presets pin the published table") {
  const ScenarioConfig c5 = scenario_preset("large5");
  REQUIRE(c5.hdv_counts == std::vector<int>{16, 17, 19, 20, 23});
  REQUIRE(c5.layout().n_vehicles() == 100);
  REQUIRE(c5.data_len_local == 800);
  REQUIRE(c5.w_v == 2.0);
  REQUIRE(c5.w_s == 1.0);
  REQUIRE(c5.w_u == 0.2);
  REQUIRE(c5.lambda_g_local == 2.0);
  REQUIRE(c5.lambda_y_local == 1e4);

  const ScenarioConfig c10 = scenario_preset("large10");
  REQUIRE(c10.hdv_counts ==
          std::vector<int>{7, 8, 9, 10, 11, 7, 8, 9, 10, 11});
  REQUIRE(c10.layout().n_vehicles() == 100);
  REQUIRE(c10.data_len_local == 600);
  REQUIRE(c10.w_v == 1.0);

  const ScenarioConfig c20 = scenario_preset("large20");
  REQUIRE(c20.layout().n_cav() == 20);
  REQUIRE(c20.layout().m_hdv() == 80);
  REQUIRE(c20.layout().n_vehicles() == 100);
  for (int m : c20.hdv_counts) {
    REQUIRE(m >= 3);
    REQUIRE(m <= 7);
  }
  REQUIRE(c20.data_len_local == 600);
}

TEST_CASE("brake head profile follows the published schedule") {
  const ScenarioConfig c = scenario_preset("large5");
  const HeadProfile h = c.head_profile();
  // one second hold, then brake to 10, cruise, recover to 15
  REQUIRE(h.velocity_at(0.5) == Approx(15.0));
  REQUIRE(h.velocity_at(2.0) == Approx(10.0));
  REQUIRE(h.velocity_at(4.9) == Approx(10.0));
  REQUIRE(h.velocity_at(10.0) == Approx(15.0));
  REQUIRE(h.velocity_at(150.0) == Approx(15.0));
}

TEST_CASE("hdv parameter draws are heterogeneous, frozen and in range") {
  ScenarioConfig c = scenario_preset("moderate");
  const auto a = draw_hdv_params(c);
  const auto b = draw_hdv_params(c);
  REQUIRE(a.size() == 15);
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].alpha == b[i].alpha);
    REQUIRE(a[i].alpha >= 0.4);
    REQUIRE(a[i].alpha <= 0.8);
    REQUIRE(a[i].beta >= 0.7);
    REQUIRE(a[i].beta <= 1.1);
    REQUIRE(a[i].s_go >= 30.0);
    REQUIRE(a[i].s_go <= 40.0);
    REQUIRE(a[i].s_st == 5.0);
    REQUIRE(a[i].v_max == 30.0);
  }
  c.hdv_param_seed = 77;
  const auto other = draw_hdv_params(c);
  REQUIRE(other[0].alpha != a[0].alpha);
}

TEST_CASE("hdv-count spreading meets the budget from the listed values") {
  const auto exact = spread_hdv_counts({16, 17, 19, 20, 23}, 5, 95);
  REQUIRE(std::accumulate(exact.begin(), exact.end(), 0) == 95);
  const auto trimmed = spread_hdv_counts({3, 4, 5, 6, 7}, 20, 80);
  REQUIRE(trimmed.size() == 20);
  REQUIRE(std::accumulate(trimmed.begin(), trimmed.end(), 0) == 80);
  REQUIRE(*std::min_element(trimmed.begin(), trimmed.end()) >= 3);
  REQUIRE(*std::max_element(trimmed.begin(), trimmed.end()) <= 7);
  REQUIRE_THROWS_AS(spread_hdv_counts({1, 1}, 3, 50), std::invalid_argument);
}

TEST_CASE("config validation rejects an init hold shorter than the past window") {
  ScenarioConfig c = scenario_preset("moderate");
  c.init_hold = 0.5;  // 10 samples < T_ini = 20
  REQUIRE_THROWS_AS(c.validate(), std::invalid_argument);
}
