#pragma once

#include <utility>
#include <vector>

#include "pogvins/dataset_io.hpp"

namespace pogvins {

struct Stats {
  double max = 0.0;
  double avg = 0.0;
  double rms = 0.0;
  double p95 = 0.0;  // nearest rank
};

/// Throws InvalidArgument on an empty series.
Stats compute_stats(const std::vector<double>& values);

/// Sorted (value, cumulative fraction) pairs; fraction k/n for the k-th smallest.
std::vector<std::pair<double, double>> empirical_cdf(const std::vector<double>& values);

struct MetricsOptions {
  double match_tolerance = 0.005;  // s
  /// Rigidly align the estimate so its first matched pose equals truth (drifting modes).
  bool align_first_pose = false;
  /// Also report errors divided by the travelled truth length.
  bool normalize_by_length = false;
};

struct ErrorReport {
  std::vector<double> timestamps;
  std::vector<Vec3> error_rfu;          // right, front, up (m)
  std::vector<double> translation_err;  // m
  std::vector<double> rotation_err;     // deg
  Stats translation;
  Stats rotation;

  bool normalized = false;
  double trajectory_length = 0.0;  // m, over the matched span
  Stats translation_pct;           // % of trajectory length
  Stats rotation_per_m;            // deg/m
};

/// Nearest-neighbour matches each estimate sample to truth. Throws NoOverlap when nothing
/// matches.
ErrorReport compute_metrics(const std::vector<TrajectorySample>& estimate,
                            const std::vector<TrajectorySample>& truth,
                            const MetricsOptions& options = {});

/// Local right/front/up axes at a pose, as rows of the returned matrix (ECEF -> RFU).
Mat3 rfu_rotation(const TrajectorySample& reference);

}  // namespace pogvins
