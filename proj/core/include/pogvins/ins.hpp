#pragma once

#include <vector>

#include "pogvins/earth.hpp"
#include "pogvins/types.hpp"

namespace pogvins {

struct ImuSample {
  double timestamp = 0.0;
  Vec3 angular_rate = Vec3::Zero();    // rad/s, body frame
  Vec3 specific_force = Vec3::Zero();  // m/s^2, body frame
};

/// Nominal navigation state in the Earth-fixed frame.
///
/// Error-state convention, matching the continuous error model used by the filter:
///   dr = r_hat - r,  dv = v_hat - v,  R = (I + [phi]x) R_hat,
///   dba = ba - ba_hat,  dbg = bg - bg_hat.
/// Error-state order is [dr, dv, phi, dba, dbg].
struct NavState {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Mat3 attitude = Mat3::Identity();  // body -> Earth
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
};

inline constexpr int kImuErrorDim = 15;
inline constexpr int kPos = 0;
inline constexpr int kVel = 3;
inline constexpr int kAtt = 6;
inline constexpr int kBa = 9;
inline constexpr int kBg = 12;

/// Continuous-time noise spectral densities.
struct NoiseParams {
  double gyro_noise_density = 4.3633e-5;    // rad/s/sqrt(Hz)   (0.15 deg/sqrt(hr))
  double accel_noise_density = 1.0e-3;      // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 5.2525e-6;        // rad/s^2/sqrt(Hz) (65 deg/hr reached after 1 hr)
  double accel_bias_walk = 1.6344e-4;       // m/s^3/sqrt(Hz)   (1 mg reached after 1 hr)
  double position_noise_density = 1.0e-4;   // m/sqrt(s), set to 0 to disable
  double gyro_bias_sigma = 3.1515e-4;       // rad/s  (65 deg/hr)
  double accel_bias_sigma = 9.80665e-3;     // m/s^2  (1 mg)

  void validate() const;
  static NoiseParams zero();
};

struct MechanizationOptions {
  EarthParams earth;
  bool earth_rotation = true;
  bool gravity = true;
};

/// Propagates with the sample held constant over [state.timestamp, state.timestamp + dt].
NavState propagate_nav(const NavState& state, const ImuSample& sample, double dt,
                       const MechanizationOptions& opts = {});

/// Propagates from state.timestamp to sample.timestamp, interpolating rates linearly
/// between `previous` (taken at state.timestamp) and `sample`.
NavState propagate_nav(const NavState& state, const ImuSample& previous, const ImuSample& sample,
                       const MechanizationOptions& opts = {});

struct ErrorStateModel {
  Mat15 F = Mat15::Zero();
  Mat15x12 G = Mat15x12::Zero();
};

/// Error dynamics at the given state; `sample` supplies the specific force.
ErrorStateModel error_state_matrices(const NavState& state, const ImuSample& sample,
                                     const MechanizationOptions& opts = {});

/// First-order discretization: Phi = I + F dt, Qd = G Qc G^T dt. The IMU block is the
/// leading 15x15; remaining rows/cols (clones, ambiguities) only see Phi on the IMU side.
/// Throws CovarianceNotPSD when a diagonal entry goes negative.
void propagate_covariance_inplace(MatX& covariance, const ErrorStateModel& model,
                                  const NoiseParams& noise, double dt);
MatX propagate_covariance(const MatX& covariance, const ErrorStateModel& model,
                          const NoiseParams& noise, double dt);

/// Applies an estimated error (convention above) to the nominal state.
void apply_imu_correction(NavState& state, const Eigen::Ref<const VecX>& dx);

/// Error of `estimate` relative to `truth` in the filter's convention.
Eigen::Matrix<double, 15, 1> nav_error(const NavState& estimate, const NavState& truth);

struct PositionFix {
  double timestamp = 0.0;
  Vec3 position = Vec3::Zero();
};

/// Heading/pitch/roll of the body (x forward, y left, z up) in the local ENU frame.
/// `yaw` follows the navigation convention: azimuth from north, clockwise.
struct Attitude {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
};
Attitude attitude_in_local_frame(const Mat3& body_to_ecef, const Vec3& position,
                                 const EarthParams& earth = {});

/// Body->ENU rotation from ZYX angles where `heading_enu` is measured counter-clockwise
/// from east, and pitch is positive nose-down about the body y (left) axis.
Mat3 body_to_enu(double heading_enu, double pitch, double roll);

/// GNSS-velocity / accelerometer-leveling coarse alignment. Position, velocity and
/// acceleration come from a cubic fit to the fixes within +-half_window of an epoch;
/// the specific force is averaged with the fit's equivalent kernel. Returns the state at
/// the first epoch with a full window and horizontal speed >= min_speed. Biases are zero.
NavState coarse_align(const std::vector<PositionFix>& gnss_positions,
                      const std::vector<ImuSample>& imu_buffer,
                      const EarthParams& earth = {}, double min_speed = 2.0,
                      double half_window = 5.0);

}  // namespace pogvins
