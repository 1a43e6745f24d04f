#pragma once

#include <map>
#include <vector>

#include "pogvins/ins.hpp"
#include "pogvins/po_geometry.hpp"

namespace pogvins {

inline constexpr int kCloneDim = 6;  // [dr, phi], same convention as NavState
inline constexpr int kDefaultWindowSize = 10;

/// Nominal body pose stored for a clone.
struct Clone {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
  Mat3 attitude = Mat3::Identity();
};

/// Joint nominal state and error covariance.
///
/// Covariance layout: [15 IMU errors | 6 per clone in id order | 1 per ambiguity].
struct FilterState {
  NavState nav;
  std::map<CloneId, Clone> clones;
  VecX ambiguities;  // float DD ambiguities, cycles
  MatX covariance = MatX::Zero(kImuErrorDim, kImuErrorDim);
  int window_size = kDefaultWindowSize;

  Eigen::Index dim() const { return covariance.rows(); }
  Eigen::Index clone_offset(CloneId id) const;  // throws InvalidArgument if absent
  Eigen::Index ambiguity_offset() const {
    return kImuErrorDim + kCloneDim * static_cast<Eigen::Index>(clones.size());
  }
  /// Throws InvalidArgument when the covariance dimension or window bound is broken.
  void validate() const;
};

FilterState make_filter_state(const NavState& nav, const MatX& imu_covariance,
                              int window_size = kDefaultWindowSize);

/// IMU propagation of the nominal state and of the joint covariance. The covariance
/// step uses the error model at the interval start with the mean specific force.
void propagate_filter(FilterState& fs, const ImuSample& previous, const ImuSample& sample,
                      const NoiseParams& noise, const MechanizationOptions& opts = {});

/// Clones the current body pose. Throws WindowFull when the window already holds
/// `window_size` clones.
void augment_clone(FilterState& fs, CloneId id);

/// Deletes the oldest clone. Tracks lose their observations in that frame; tracks whose
/// base pair referenced it get a fresh selection (or none if fewer than two views remain
/// or the geometry is degenerate).
void marginalize_oldest(FilterState& fs, std::map<FeatureId, FeatureTrack>* tracks = nullptr,
                        const CameraExtrinsics& ext = {}, double theta_min = kDefaultThetaMin);

/// Deletes arbitrary error-state indices (rows and columns) from the covariance. Only
/// ambiguity indices may be removed this way; clones go through marginalize_oldest.
void remove_ambiguity_states(FilterState& fs, const std::vector<Eigen::Index>& ambiguity_indices);

/// Appends ambiguity states with the given float values and variances (uncorrelated).
void append_ambiguity_states(FilterState& fs, const VecX& values, const VecX& variances);

/// Applies the error estimate dx to every nominal component (IMU, clones, ambiguities).
void apply_correction(FilterState& fs, const Eigen::Ref<const VecX>& dx);

/// Camera poses of all clones.
CameraPoseMap clone_camera_poses(const FilterState& fs, const CameraExtrinsics& ext);

/// Accept iff r^T (H P H^T + R)^-1 r is below the chi-square quantile at dim(r) dof.
/// Throws SingularInnovation when the innovation covariance is not invertible.
bool chi2_gate(const VecX& residual, const MatX& H, const MatX& P, const MatX& R,
               double confidence = 0.95);

/// Cached chi-square quantile.
double chi2_quantile(int dof, double confidence = 0.95);

inline constexpr double kDefaultPoMinParallax = 0.02;

struct VisualUpdateOptions {
  double pixel_sigma = 1.0;
  double theta_min = kDefaultThetaMin;
  double chi2_confidence = 0.95;
  bool gate = true;
  /// PO only: include the base-frame bearing noise in each residual's covariance
  /// (sigma^2 G G^T). Off means independent sigma^2 I per residual row.
  bool po_noise_propagation = true;
  /// PO only: tracks whose best base pair has sin(parallax) below this are skipped. The
  /// depth ratio becomes strongly nonlinear in pixel noise well before theta_min.
  double po_min_parallax = kDefaultPoMinParallax;
  int max_iterations = 5;          // PO only
  double convergence_tol = 1e-8;   // PO only
};

enum class UpdateStatus {
  kApplied,
  kNoMeasurements,
  kAllTracksRejected,
  kAllObservationsRejected,
};

struct UpdateReport {
  UpdateStatus status = UpdateStatus::kNoMeasurements;
  int tracks_used = 0;
  int tracks_rejected = 0;
  int rows = 0;
  int iterations = 0;
  double correction_norm = 0.0;
  VecX correction;
};

/// Stacked PO residual and Jacobian of one track at the given clone poses.
struct TrackLinearization {
  VecX residual;
  MatX jacobian;  // rows x fs.dim(), nonzero only in clone columns
  BasePair base;
  /// Residual w.r.t. the pixels of every observation in the track (2 columns per
  /// observation, track order). Residual covariance is sigma^2 G G^T.
  MatX noise_jacobian;
};

/// Builds the PO rows for every observing frame l != i. Throws DegenerateGeometry
/// when no base pair clears theta_min; observations landing behind a camera are skipped.
TrackLinearization linearize_po_track(const FilterState& fs, const FeatureTrack& track,
                                      const CameraIntrinsics& intrinsics,
                                      const CameraExtrinsics& ext, double theta_min,
                                      const BasePair* fixed_base = nullptr);

/// MSCKF rows of one track after projection onto the left null space of H_f.
struct MsckfLinearization {
  VecX residual;
  MatX jacobian;
  Vec3 point = Vec3::Zero();
};
/// Orthonormal basis A (m x (m - rank)) with A^T H = 0 for a full-column-rank H.
MatX left_null_space(const MatX& h);

MsckfLinearization linearize_msckf_track(const FilterState& fs, const FeatureTrack& track,
                                         const CameraIntrinsics& intrinsics,
                                         const CameraExtrinsics& ext, double theta_min);

/// Iterated EKF update with PO residuals of all tracks, batched in feature-id order.
UpdateReport po_update(FilterState& fs, const std::vector<FeatureTrack>& tracks,
                       const CameraIntrinsics& intrinsics, const CameraExtrinsics& ext,
                       const VisualUpdateOptions& opts = {});

/// Single EKF update with null-space projected reprojection residuals.
UpdateReport msckf_update(FilterState& fs, const std::vector<FeatureTrack>& tracks,
                          const CameraIntrinsics& intrinsics, const CameraExtrinsics& ext,
                          const VisualUpdateOptions& opts = {});

/// Whitened linear measurement: residual = h(x) - z, noise covariance I.
struct WhitenedRows {
  VecX residual;
  MatX jacobian;
};

/// Kalman gain and Joseph-form covariance update for whitened rows. Returns the gain.
/// Only columns where the Jacobian is nonzero enter the products.
MatX joseph_update(MatX& covariance, const MatX& jacobian);

/// Shrinks a tall whitened system to at most its column rank via thin QR.
void compress_rows(WhitenedRows& rows);

}  // namespace pogvins
