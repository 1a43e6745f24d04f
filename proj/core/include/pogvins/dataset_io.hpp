#pragma once

#include <string>
#include <vector>

#include "pogvins/kv_config.hpp"
#include "pogvins/sim.hpp"

namespace pogvins {

/// Scenario keys understood by `simulate`. Throws ConfigInvalid.
ScenarioConfig scenario_config_from_kv(const KvConfig& kv);
KvConfig scenario_config_to_kv(const ScenarioConfig& config);

/// Writes imu.csv, features.csv, gnss_rover.csv, gnss_base.csv, truth.csv and meta into
/// `dir` (created if missing). Throws IoError.
void write_dataset(const ScenarioDataset& ds, const std::string& dir);

/// Reads a dataset directory. Truth biases and landmarks are not stored and come back
/// zero/empty. Throws IoError or ParseError.
ScenarioDataset read_dataset(const std::string& dir);

/// Pose/velocity time series in the truth.csv layout.
struct TrajectorySample {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Mat3 attitude = Mat3::Identity();
};

void write_trajectory_csv(const std::vector<TrajectorySample>& traj, const std::string& path);
std::vector<TrajectorySample> read_trajectory_csv(const std::string& path);

std::vector<TrajectorySample> to_trajectory(const std::vector<NavState>& states);

/// Minimal CSV table: exact header match, numeric cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const std::string& path, const std::vector<std::string>& expected_header);
void write_csv(const std::string& path, const CsvTable& table);

}  // namespace pogvins
