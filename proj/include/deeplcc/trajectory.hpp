#pragma once

// Input/reference/output trajectory records, the raw material behind the data
// Hankel matrices, plus their CSV serialization (one sample per row, sidecar
// JSON for dt and layout) and the centralized-to-local partition.

#include <string>
#include <vector>

#include <json.hpp>

#include "csv.hpp"
#include "hankel.hpp"
#include "partition.hpp"
#include "types.hpp"

namespace deeplcc {

struct TrajectoryLog {
  Mat u;       // control inputs, one column per sample (n_u x T)
  Mat eps;     // reference input, 1 x T
  Mat y;       // outputs (n_y x T)
  double dt = 0.05;

  int length() const { return static_cast<int>(u.cols()); }

  void validate() const {
    const int len = length();
    if (len < 1 || eps.cols() != len || y.cols() != len) {
      throw std::invalid_argument("TrajectoryLog: sequence lengths differ or T < 1");
    }
    if (eps.rows() != 1) throw std::invalid_argument("TrajectoryLog: eps must be scalar per sample");
    if (!(dt > 0.0)) throw std::invalid_argument("TrajectoryLog: dt must be positive");
  }
};

inline HankelBlocks split_past_future(const TrajectoryLog& log, int t_ini, int horizon) {
  log.validate();
  return split_past_future(log.u, log.eps, log.y, t_ini, horizon);
}

// Splits a centralized log into per-subsystem logs. Subsystem i keeps its own
// input row and output block; its reference input is the head-vehicle row for
// i = 0 and the predecessor tail-velocity row of the output otherwise.
inline std::vector<TrajectoryLog> partition_centralized_log(const TrajectoryLog& log,
                                                            const PartitionLayout& layout) {
  log.validate();
  layout.validate();
  const int n = layout.n_cav();
  if (log.u.rows() != n || log.y.rows() != layout.y_dim_total()) {
    throw std::invalid_argument("partition_centralized_log: log does not match layout");
  }
  std::vector<TrajectoryLog> out(n);
  for (int i = 0; i < n; ++i) {
    TrajectoryLog& li = out[i];
    li.dt = log.dt;
    li.u = log.u.row(i);
    li.y = log.y.middleRows(layout.y_offset(i), layout.y_dim(i));
    li.eps = (i == 0) ? log.eps : Mat(log.y.row(layout.predecessor_velocity_row(i)));
  }
  return out;
}

// ---- CSV serialization ----------------------------------------------------

inline std::vector<std::string> trajectory_header(const PartitionLayout& layout) {
  std::vector<std::string> h;
  const int n = layout.n_cav();
  for (int i = 0; i < n; ++i) h.push_back("u_" + std::to_string(i + 1));
  h.push_back("eps");
  for (int i = 0; i < n; ++i) {
    h.push_back("v_err_cav" + std::to_string(i + 1));
    for (int j = 0; j < layout.hdv_counts[i]; ++j) {
      h.push_back("v_err_hdv" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
    }
    h.push_back("s_err_cav" + std::to_string(i + 1));
  }
  return h;
}

inline void write_trajectory_csv(const std::string& path, const TrajectoryLog& log,
                                 const PartitionLayout& layout) {
  log.validate();
  std::vector<std::vector<double>> rows;
  const int len = log.length();
  const int nu = static_cast<int>(log.u.rows());
  const int ny = static_cast<int>(log.y.rows());
  rows.reserve(len);
  for (int k = 0; k < len; ++k) {
    std::vector<double> row;
    row.reserve(nu + 1 + ny);
    for (int i = 0; i < nu; ++i) row.push_back(log.u(i, k));
    row.push_back(log.eps(0, k));
    for (int i = 0; i < ny; ++i) row.push_back(log.y(i, k));
    rows.push_back(std::move(row));
  }
  write_csv(path, trajectory_header(layout), rows);
}

inline void write_trajectory_sidecar(const std::string& path, const TrajectoryLog& log,
                                     const PartitionLayout& layout) {
  nlohmann::json j;
  j["dt"] = log.dt;
  j["T"] = log.length();
  j["hdv_counts"] = layout.hdv_counts;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectory_sidecar: cannot open " + path);
  out << j.dump(2) << "\n";
}

inline TrajectoryLog read_trajectory_csv(const std::string& csv_path,
                                         const std::string& sidecar_path) {
  const CsvTable t = read_csv(csv_path);
  std::ifstream in(sidecar_path);
  if (!in) throw std::runtime_error("read_trajectory_csv: cannot open " + sidecar_path);
  nlohmann::json j;
  in >> j;
  PartitionLayout layout{j.at("hdv_counts").get<std::vector<int>>()};
  const int n = layout.n_cav();
  const int ny = layout.y_dim_total();
  const int len = static_cast<int>(t.rows.size());
  if (static_cast<int>(t.header.size()) != n + 1 + ny) {
    throw std::runtime_error("read_trajectory_csv: column count does not match layout");
  }
  TrajectoryLog log;
  log.dt = j.at("dt").get<double>();
  log.u.resize(n, len);
  log.eps.resize(1, len);
  log.y.resize(ny, len);
  for (int k = 0; k < len; ++k) {
    for (int i = 0; i < n; ++i) log.u(i, k) = t.rows[k][i];
    log.eps(0, k) = t.rows[k][n];
    for (int i = 0; i < ny; ++i) log.y(i, k) = t.rows[k][n + 1 + i];
  }
  log.validate();
  if (len != j.at("T").get<int>()) {
    throw std::runtime_error("read_trajectory_csv: sidecar T does not match row count");
  }
  return log;
}

}  // namespace deeplcc
