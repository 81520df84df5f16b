// Command-line driver for the data collection runs, closed-loop experiments,
// imperfect-condition sweeps and report emission.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

#include "deeplcc/experiment.hpp"
#include "deeplcc/scenario.hpp"

using namespace deeplcc;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool have_seed = false;
};

ScenarioConfig resolve_config(const CommonOpts& o) {
  ScenarioConfig cfg;
  if (!o.config_path.empty()) {
    cfg = load_scenario(o.config_path);
  } else if (!o.preset.empty()) {
    cfg = scenario_preset(o.preset);
  } else {
    throw CLI::ValidationError("either --config or --preset is required");
  }
  if (o.have_seed) {
    cfg.data_seed += o.seed;
    cfg.noise_seed += o.seed;
  }
  return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "scenario config JSON path");
  cmd->add_option("--preset", o.preset,
                  "built-in scenario: moderate, large5, large10, large20");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--seed", o.seed, "seed offset applied to data/noise seeds")
      ->each([&](const std::string&) { o.have_seed = true; });
}

void print_metrics(const std::string& label, const RunMetrics& m) {
  std::printf("%s: steps=%d real_cost=%.6g fuel_ml=%.6g", label.c_str(), m.steps,
              m.real_cost, m.fuel_total);
  if (!m.iterations.empty()) {
    std::printf(" mean_iters=%.2f", m.mean_iterations);
  }
  if (!m.solve_ms.empty()) {
    std::printf(" mean_solve_ms=%.3f max_solve_ms=%.3f", m.mean_solve_ms, m.max_solve_ms);
  }
  std::printf(" min_spacing=%.3f%s\n", m.min_spacing, m.collision ? " COLLISION" : "");
}

int cmd_collect(const CommonOpts& o) {
  const ScenarioConfig cfg = resolve_config(o);
  const bool want_central = cfg.data_len_central > 0;
  const CollectedData data = collect_data(cfg, want_central);
  fs::create_directories(o.out_dir);
  const PartitionLayout layout = cfg.layout();
  if (want_central) {
    write_trajectory_csv(o.out_dir + "/central_data.csv", data.central, layout);
    write_trajectory_sidecar(o.out_dir + "/central_data.json", data.central, layout);
  }
  for (size_t i = 0; i < data.local.size(); ++i) {
    const PartitionLayout sub{{layout.hdv_counts[i]}};
    const std::string base = o.out_dir + "/local_data_" + std::to_string(i + 1);
    write_trajectory_csv(base + ".csv", data.local[i], sub);
    write_trajectory_sidecar(base + ".json", data.local[i], sub);
  }
  std::printf("collected %s data after %d attempt(s): %zu local log(s) of length %d%s\n",
              cfg.name.c_str(), data.attempts, data.local.size(), cfg.data_len_local,
              want_central
                  ? (", central log of length " + std::to_string(cfg.data_len_central)).c_str()
                  : "");
  return 0;
}

int cmd_run(CommonOpts& o, std::string mode_str, int max_iter, int delay_steps) {
  ScenarioConfig cfg = resolve_config(o);
  if (max_iter > 0) cfg.admm_max_iterations = max_iter;
  if (delay_steps >= 0) cfg.admm_delay_steps = delay_steps;
  const ControllerMode mode = parse_mode(mode_str);
  const CollectedData data =
      collect_data(cfg, mode == ControllerMode::Central && cfg.data_len_central > 0);
  const RunMetrics m = run_closed_loop(cfg, mode, data);
  const std::string prefix = cfg.name + "_" + mode_str + "_seed" + std::to_string(o.seed);
  report_run(o.out_dir, prefix, cfg, m);
  write_summary_csv(o.out_dir + "/" + prefix + "_summary.csv",
                    {{cfg.name, mode_str, o.seed, m}});
  print_metrics(prefix, m);
  if (m.collision) {
    std::fprintf(stderr, "error: spacing reached zero, run aborted at step %d\n", m.steps);
    return 2;
  }
  return 0;
}

int cmd_compare(CommonOpts& o, int n_seeds) {
  const ScenarioConfig base = resolve_config(o);
  const bool with_central = base.data_len_central > 0;
  std::vector<SummaryRow> rows;
  std::map<std::string, double> cost_sum;
  std::map<std::string, int> count;
  for (int s = 0; s < n_seeds; ++s) {
    ScenarioConfig cfg = base;
    cfg.data_seed = base.data_seed + s;
    cfg.noise_seed = base.noise_seed + s;
    const CollectedData data = collect_data(cfg, with_central);
    std::vector<ControllerMode> modes{ControllerMode::None, ControllerMode::Distributed};
    if (with_central) modes.insert(modes.begin() + 1, ControllerMode::Central);
    for (ControllerMode mode : modes) {
      const RunMetrics m = run_closed_loop(cfg, mode, data);
      const std::string label = mode_name(mode);
      print_metrics(cfg.name + "/" + label + "/seed" + std::to_string(s), m);
      rows.push_back({cfg.name, label, static_cast<std::uint64_t>(s), m});
      cost_sum[label] += m.real_cost;
      count[label] += 1;
      if (m.collision && mode != ControllerMode::None) {
        std::fprintf(stderr, "error: collision in a controlled run\n");
        return 2;
      }
    }
  }
  fs::create_directories(o.out_dir);
  write_summary_csv(o.out_dir + "/" + base.name + "_compare_summary.csv", rows);
  std::printf("---\n");
  for (const auto& [label, sum] : cost_sum) {
    std::printf("mean real cost %-12s %.6g\n", label.c_str(), sum / count[label]);
  }
  if (with_central && cost_sum.count("central") && cost_sum.count("distributed")) {
    std::printf("distributed / central cost ratio: %.4f\n",
                cost_sum["distributed"] / cost_sum["central"]);
  }
  return 0;
}

int cmd_sweep(CommonOpts& o, int n_seeds) {
  const ScenarioConfig base = resolve_config(o);
  const std::vector<SweepCondition> conditions{{300, 0}, {2, 0}, {1, 0},
                                               {300, 4}, {2, 4}, {1, 4}};
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < n_seeds; ++s) seeds.push_back(s);
  const auto cells = sweep_imperfect(base, conditions, seeds);
  fs::create_directories(o.out_dir);
  std::vector<std::string> header{"max_iterations", "delay_steps", "mean_cost",
                                  "degradation_pct"};
  std::vector<std::vector<double>> rows;
  std::printf("%-16s %-12s %-14s %s\n", "max_iterations", "delay_steps", "mean_cost",
              "degradation_pct");
  for (const SweepCell& c : cells) {
    rows.push_back({static_cast<double>(c.condition.max_iterations),
                    static_cast<double>(c.condition.delay_steps), c.mean_cost,
                    c.degradation_pct});
    std::printf("%-16d %-12d %-14.6g %.3f%%\n", c.condition.max_iterations,
                c.condition.delay_steps, c.mean_cost, c.degradation_pct);
  }
  write_csv(o.out_dir + "/" + base.name + "_sweep.csv", header, rows);
  return 0;
}

int cmd_report(const std::string& dir) {
  // aggregate every *_summary.csv in the directory into per-mode means
  std::map<std::string, std::pair<double, int>> cost;
  std::map<std::string, std::pair<double, int>> fuel;
  std::map<std::string, std::pair<double, int>> iters;
  std::map<std::string, std::pair<double, int>> solve;
  int files = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() < 12 || name.substr(name.size() - 12) != "_summary.csv") continue;
    ++files;
    std::ifstream in(entry.path());
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::vector<std::string> cells;
      std::string cell;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (cells.size() < 11) continue;
      const std::string key = cells[0] + "/" + cells[1];
      cost[key].first += std::stod(cells[4]);
      cost[key].second += 1;
      fuel[key].first += std::stod(cells[5]);
      fuel[key].second += 1;
      iters[key].first += std::stod(cells[6]);
      iters[key].second += 1;
      solve[key].first += std::stod(cells[7]);
      solve[key].second += 1;
    }
  }
  if (files == 0) {
    std::fprintf(stderr, "error: no *_summary.csv files under %s\n", dir.c_str());
    return 2;
  }
  std::ofstream out(dir + "/aggregate.csv");
  out << "scenario_mode,runs,mean_real_cost,mean_fuel_ml,mean_iterations,mean_solve_ms\n";
  std::printf("%-28s %5s %14s %14s %12s %12s\n", "scenario/mode", "runs", "mean_cost",
              "mean_fuel", "mean_iters", "mean_ms");
  for (const auto& [key, c] : cost) {
    const double mc = c.first / c.second;
    const double mf = fuel[key].first / fuel[key].second;
    const double mi = iters[key].first / iters[key].second;
    const double ms = solve[key].first / solve[key].second;
    out << key << "," << c.second << "," << format_double(mc) << "," << format_double(mf)
        << "," << format_double(mi) << "," << format_double(ms) << "\n";
    std::printf("%-28s %5d %14.6g %14.6g %12.3f %12.3f\n", key.c_str(), c.second, mc, mf,
                mi, ms);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data-driven predictive leading cruise control experiments"};
  app.require_subcommand(1);

  CommonOpts collect_opts, run_opts, compare_opts, sweep_opts;
  std::string run_mode = "distributed";
  int run_max_iter = 0;
  int run_delay = -1;
  int compare_seeds = 5;
  int sweep_seeds = 5;
  std::string report_dir = "out";

  CLI::App* collect = app.add_subcommand("collect", "simulate an excitation run and store logs");
  add_common(collect, collect_opts);

  CLI::App* run = app.add_subcommand("run", "one closed-loop run under a controller mode");
  add_common(run, run_opts);
  run->add_option("--mode", run_mode, "none | central | distributed");
  run->add_option("--max-iter", run_max_iter, "cap on rounds per control step");
  run->add_option("--delay-steps", run_delay, "message delay in control steps");

  CLI::App* compare = app.add_subcommand("compare", "run all controller modes over seeds");
  add_common(compare, compare_opts);
  compare->add_option("--seeds", compare_seeds, "number of seeded repetitions");

  CLI::App* sweep = app.add_subcommand("sweep", "imperfect-condition degradation table");
  add_common(sweep, sweep_opts);
  sweep->add_option("--seeds", sweep_seeds, "number of seeded repetitions");

  CLI::App* report = app.add_subcommand("report", "aggregate summary files in a directory");
  report->add_option("--out", report_dir, "directory holding *_summary.csv files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect->parsed()) return cmd_collect(collect_opts);
    if (run->parsed()) return cmd_run(run_opts, run_mode, run_max_iter, run_delay);
    if (compare->parsed()) return cmd_compare(compare_opts, compare_seeds);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, sweep_seeds);
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
