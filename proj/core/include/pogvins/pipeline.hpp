#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pogvins/gnss_rtk.hpp"
#include "pogvins/kv_config.hpp"
#include "pogvins/metrics.hpp"
#include "pogvins/swf_filter.hpp"

namespace pogvins {

enum class RunMode { kPoVins, kMsckf, kGi, kMGvins, kPoGvins };

std::string to_string(RunMode mode);
/// Accepts "PO-VINS", "MSCKF", "GI", "M-GVINS", "PO-GVINS". Throws ModeUnsupported.
RunMode parse_run_mode(const std::string& text);

bool uses_gnss(RunMode mode);
bool uses_camera(RunMode mode);
bool uses_po(RunMode mode);

enum class InitMode {
  kTruthPerturbed,  // truth at t0 plus seeded noise of the configured sigmas
  kCoarseAlign,     // DD code positions + accelerometer leveling (GNSS modes only)
};

struct RunConfig {
  RunMode mode = RunMode::kPoGvins;
  std::string dataset_path;
  std::string output_dir;
  int window_size = kDefaultWindowSize;
  double theta_min = kDefaultThetaMin;
  double ratio_test = 3.0;
  double igg_k0 = 1.5;
  double igg_k1 = 3.0;
  double chi2_confidence = 0.95;
  int max_iterations = 5;
  bool robust = true;
  bool ambiguity_resolution = true;
  bool po_noise_propagation = true;
  double po_min_parallax = kDefaultPoMinParallax;

  InitMode init = InitMode::kTruthPerturbed;
  double init_position_sigma = 0.3;    // m
  double init_velocity_sigma = 0.05;   // m/s
  double init_attitude_sigma_deg = 0.3;
  std::uint64_t init_seed_offset = 1000;

  /// Throws ConfigInvalid (ModeUnsupported for an unknown mode).
  static RunConfig from_kv(const KvConfig& kv);
  KvConfig to_kv() const;
  void validate() const;
};

enum class StepKind { kImu, kCamera, kGnss };

/// Called after every filter step with the post-step state.
using StepCallback = std::function<void(StepKind, double, const FilterState&)>;

struct PipelineStats {
  int camera_updates = 0;
  int visual_tracks_used = 0;
  int visual_tracks_rejected = 0;
  int gnss_updates = 0;
  int gnss_rows_rejected = 0;
  int fix_attempts = 0;
  int fixes_accepted = 0;
  int update_failures = 0;  // numerical failures that left the state unchanged
};

struct PipelineResult {
  std::vector<TrajectorySample> trajectory;  // IMU rate
  ErrorReport report;
  std::vector<double> nees_timestamps;       // camera epochs
  std::vector<double> nees;                  // 6-DoF pose NEES
  PipelineStats stats;
};

/// Runs the full event loop over an in-memory dataset. Throws ModeUnsupported when the
/// dataset lacks the sensors the mode needs.
PipelineResult run_pipeline(const ScenarioDataset& ds, const RunConfig& cfg,
                            const StepCallback& on_step = {});

/// Loads cfg.dataset_path first. Throws IoError / ParseError.
PipelineResult run_pipeline(const RunConfig& cfg, const StepCallback& on_step = {});

/// Initial state and 15x15 covariance as chosen by cfg.init.
std::pair<NavState, MatX> initialize(const ScenarioDataset& ds, const RunConfig& cfg);

}  // namespace pogvins
