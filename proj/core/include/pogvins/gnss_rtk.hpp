#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "pogvins/ins.hpp"
#include "pogvins/swf_filter.hpp"

namespace pogvins {

struct GnssObservation {
  SatId sat_id = 0;
  double pseudorange = 0.0;    // m
  double carrier_phase = 0.0;  // cycles
  double wavelength = 0.0;     // m
  Vec3 sat_position = Vec3::Zero();
  double elevation = 0.0;      // rad

  /// Throws InvalidArgument when outside the plausible GNSS ranges.
  void validate() const;
};

struct GnssEpoch {
  double timestamp = 0.0;
  std::vector<GnssObservation> observations;
};

struct DdObservation {
  SatId sat_id = 0;
  SatId ref_sat_id = 0;
  double dd_pseudorange = 0.0;  // m
  double dd_phase = 0.0;        // m (cycles times wavelength)
  double wavelength = 0.0;      // m
  Vec3 sat_position = Vec3::Zero();
  Vec3 ref_sat_position = Vec3::Zero();
  // Base-side positions kept separately so a moving-base variant stays possible.
  Vec3 base_sat_position = Vec3::Zero();
  Vec3 base_ref_sat_position = Vec3::Zero();
};

/// Elevation-dependent zenith sigmas.
struct GnssNoise {
  double code_sigma = 0.3;     // m
  double phase_sigma = 0.003;  // m
  double min_elevation = 5.0 * 3.14159265358979323846 / 180.0;
};

/// One epoch of double differences plus their correlated noise.
struct DdEpoch {
  double timestamp = 0.0;
  SatId ref_sat_id = 0;
  std::vector<DdObservation> obs;
  MatX code_covariance;   // m^2
  MatX phase_covariance;  // m^2
};

/// Geometric range from the antenna (r + R l_a) and its Jacobian w.r.t. [dr, phi].
struct RangePrediction {
  double range = 0.0;
  Eigen::Matrix<double, 1, 6> jacobian = Eigen::Matrix<double, 1, 6>::Zero();
  Vec3 line_of_sight = Vec3::Zero();  // unit vector satellite -> antenna
};
RangePrediction predict_range(const Vec3& position, const Mat3& attitude, const Vec3& lever_arm,
                              const Vec3& sat_position);
inline RangePrediction predict_range(const NavState& nav, const Vec3& lever_arm,
                                     const Vec3& sat_position) {
  return predict_range(nav.position, nav.attitude, lever_arm, sat_position);
}

/// Between-receiver then between-satellite differences against the highest-elevation
/// common satellite. Throws InsufficientSatellites with fewer than two common satellites.
DdEpoch double_difference(const GnssEpoch& rover, const GnssEpoch& base,
                          const GnssNoise& noise = {});

struct AmbiguityEntry {
  double float_value = 0.0;            // cycles, mirrors the filter state
  std::optional<long> fixed_value;     // set after a passed ratio test
  Eigen::Index state_index = 0;        // index into FilterState::ambiguities
};

/// DD ambiguities keyed by (sat_id, ref_sat_id).
struct AmbiguitySet {
  std::map<std::pair<SatId, SatId>, AmbiguityEntry> entries;

  std::optional<SatId> reference() const;
  /// Throws InvalidArgument when indices do not map 1-1 onto the filter state.
  void validate(const FilterState& fs) const;
};

struct AmbiguityChanges {
  int added = 0;
  int removed = 0;
  bool reference_switched = false;
  bool reset = false;  // reference switch impossible, all entries dropped
};

/// Adds, removes and re-references DD ambiguity states so that the set matches `dd`.
AmbiguityChanges manage_ambiguities(AmbiguitySet& amb, const DdEpoch& dd, FilterState& fs);

/// N^{s,k'} = N^{s,k} - N^{k',k}; the old reference becomes N^{k,k'} = -N^{k',k}.
/// Exposed for testing on integer vectors; `new_ref_index` is the position of (k',k).
MatX reference_switch_matrix(Eigen::Index size, Eigen::Index new_ref_index);

/// Three-segment IGG-III weight.
double igg3_weight(double standardized_residual, double k0 = 1.5, double k1 = 3.0);

struct RtkOptions {
  Vec3 lever_arm = Vec3::Zero();
  Vec3 base_position = Vec3::Zero();
  double k0 = 1.5;
  double k1 = 3.0;
  int max_iterations = 5;
  double convergence_tol = 1e-8;
  bool use_code = true;
  bool use_phase = true;
  bool robust = true;
};

struct RtkReport {
  UpdateStatus status = UpdateStatus::kNoMeasurements;
  int iterations = 0;
  int rows_used = 0;
  int rows_rejected = 0;
  std::vector<double> code_weights;   // final weight per DD code row, in dd.obs order
  std::vector<double> phase_weights;
  VecX correction;
  double correction_norm = 0.0;
};

/// Predicted DD code/phase and their Jacobian rows at the current state.
struct DdLinearization {
  VecX code_residual;   // h(x) - z, m
  VecX phase_residual;  // h(x) - z, m
  MatX code_jacobian;   // rows x fs.dim()
  MatX phase_jacobian;
};
DdLinearization linearize_dd(const FilterState& fs, const DdEpoch& dd, const AmbiguitySet& amb,
                             const RtkOptions& opts);

/// Iterated EKF with IGG-III reweighting at every iteration. Phase rows need an
/// ambiguity entry for their pair; code rows do not.
RtkReport rtk_update(FilterState& fs, const DdEpoch& dd, const AmbiguitySet& amb,
                     const RtkOptions& opts);

struct LambdaResult {
  std::vector<long> fixed;           // best integer candidate
  std::vector<long> second;          // runner-up
  double ratio = 0.0;                // second-best cost / best cost
  bool accepted = false;
  MatX z_transform;                  // integer, unimodular
};

/// Integer least squares by LAMBDA decorrelation and search. Never throws for a failed
/// ratio test (accepted = false is the float fallback). Throws NotPositiveDefinite.
LambdaResult lambda_fix(const VecX& float_amb, const MatX& q_amb, double ratio_threshold = 3.0);

struct FixReport {
  bool attempted = false;
  bool accepted = false;
  double ratio = 0.0;
  int fixed_count = 0;
};

/// Runs LAMBDA over all ambiguity states and, on acceptance, conditions every correlated
/// state on the integers and holds them with a small variance floor.
FixReport resolve_ambiguities(FilterState& fs, AmbiguitySet& amb, double ratio_threshold = 3.0,
                              double hold_variance = 1e-6);

/// DD code-only least-squares antenna position (used for coarse alignment).
Vec3 solve_dd_position(const DdEpoch& dd, const Vec3& base_position, const Vec3& initial_guess,
                       int max_iterations = 10);

}  // namespace pogvins
