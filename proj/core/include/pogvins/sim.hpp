#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pogvins/earth.hpp"
#include "pogvins/gnss_rtk.hpp"
#include "pogvins/ins.hpp"
#include "pogvins/po_geometry.hpp"

namespace pogvins {

enum class TrajectoryKind { kCircle, kFigureEight, kStraightWithTurns };

std::string to_string(TrajectoryKind kind);
TrajectoryKind parse_trajectory_kind(const std::string& text);  // throws ConfigInvalid

enum class DegradationKind { kGnssOutage, kNlosBias, kSatelliteDropTo, kFeatureDrought };

std::string to_string(DegradationKind kind);
DegradationKind parse_degradation_kind(const std::string& text);  // throws ConfigInvalid

/// A timed window [t0, t1) of degraded sensing. `value` is the NLOS bias in meters or the
/// satellite count; `sat_id` < 0 lets the simulator pick the lowest-elevation satellite.
struct Degradation {
  DegradationKind kind = DegradationKind::kGnssOutage;
  double t0 = 0.0;
  double t1 = 0.0;
  double value = 0.0;
  SatId sat_id = -1;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  double duration = 120.0;  // s
  double imu_rate = 200.0;  // Hz
  double cam_rate = 10.0;
  double gnss_rate = 1.0;

  TrajectoryKind trajectory = TrajectoryKind::kFigureEight;
  double speed = 8.0;           // nominal horizontal speed, m/s
  double size = 150.0;          // circle radius / figure-eight half-length / S-bend amplitude
  double vertical_amplitude = 1.0;  // m
  double roll_amplitude = 0.02;     // rad

  int feature_count = 3000;            // landmarks in the world
  double feature_depth_min = 6.0;      // lateral landmark distance from the path, m
  double feature_depth_max = 30.0;
  int max_features_per_frame = 60;
  double max_feature_range = 60.0;     // m

  NoiseParams imu_noise;
  bool imu_biases = true;  // draw turn-on biases from the bias sigmas
  double pixel_sigma = 1.0;
  GnssNoise gnss_noise;

  GeodeticCoord origin{30.5 * 3.14159265358979323846 / 180.0,
                       114.4 * 3.14159265358979323846 / 180.0, 25.0};
  Vec3 base_offset_enu{1500.0, -800.0, 0.0};
  CameraIntrinsics intrinsics;
  int image_width = 1280;
  int image_height = 1024;
  CameraExtrinsics camera;  // defaults filled by default_camera_extrinsics()
  Vec3 gnss_lever_arm{0.2, 0.0, 1.2};

  std::vector<Degradation> degradations;

  ScenarioConfig();
  /// Throws ConfigInvalid.
  void validate() const;
  /// Same scenario with every noise source and bias switched off.
  ScenarioConfig noise_free() const;
  int imu_ticks_per_frame() const;
  int imu_ticks_per_gnss() const;
};

/// Forward-looking camera on a body with x forward, y left, z up.
CameraExtrinsics default_camera_extrinsics();

struct FeatureMeasurement {
  FeatureId feature_id = 0;
  Vec2 pixel = Vec2::Zero();
  NormalizedBearing bearing;
};

struct CameraFrame {
  double timestamp = 0.0;
  CloneId frame_id = 0;
  std::vector<FeatureMeasurement> features;  // sorted by feature_id
};

struct ScenarioDataset {
  ScenarioConfig config;
  Vec3 base_position = Vec3::Zero();  // ECEF
  std::vector<NavState> truth;        // one per IMU sample, with the true biases
  std::vector<ImuSample> imu;
  std::vector<CameraFrame> frames;
  std::vector<GnssEpoch> gnss_rover;
  std::vector<GnssEpoch> gnss_base;
  std::vector<Vec3> landmarks;        // world points, index = landmark id
};

/// Analytic kinematics at time t in ECEF, exposed for testing.
struct TrajectoryPoint {
  Vec3 position;
  Vec3 velocity;
  Vec3 acceleration;
  Mat3 attitude;       // body -> ECEF
  Vec3 body_rate;      // w_eb in body
};
TrajectoryPoint trajectory_point(const ScenarioConfig& config, double t);

/// Deterministic scenario generation. Throws ConfigInvalid.
ScenarioDataset generate(const ScenarioConfig& config);

/// 120 s figure-eight with an NLOS window, a satellite drop, a GNSS outage and a short
/// feature drought.
ScenarioConfig default_degraded_scenario(std::uint64_t seed);

/// Applies degradation windows in place-order.
ScenarioDataset inject_degradations(ScenarioDataset ds, const std::vector<Degradation>& windows);

/// Satellite position at time t for the fixed 8-satellite constellation.
Vec3 satellite_position(const ScenarioConfig& config, int sat_index, double t);
inline constexpr int kSatelliteCount = 8;
inline constexpr double kGpsL1Wavelength = 299792458.0 / 1575.42e6;

}  // namespace pogvins
