#include "pogvins/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <string>

#include "pogvins/errors.hpp"
#include "pogvins/so3.hpp"

namespace pogvins {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
constexpr double kSatRadius = 26560e3;

// Independent, reproducible streams per noise source.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  return std::mt19937_64(seq);
}

struct Kin {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
};

double smoothstep(double u) { return u * u * u * (10.0 + u * (-15.0 + 6.0 * u)); }
double smoothstep_d1(double u) { return 30.0 * u * u * (1.0 - u) * (1.0 - u); }
double smoothstep_d2(double u) { return 60.0 * u - 180.0 * u * u + 120.0 * u * u * u; }

Kin horizontal(const ScenarioConfig& c, double t) {
  Kin k;
  switch (c.trajectory) {
    case TrajectoryKind::kCircle: {
      const double r = c.size;
      const double w = c.speed / r;
      k.p = {r * std::sin(w * t), r * (1.0 - std::cos(w * t)), 0.0};
      k.v = {r * w * std::cos(w * t), r * w * std::sin(w * t), 0.0};
      k.a = {-r * w * w * std::sin(w * t), r * w * w * std::cos(w * t), 0.0};
      break;
    }
    case TrajectoryKind::kFigureEight: {
      const double a = c.size;
      const double b = 0.5 * c.size;
      const double w = c.speed / a;
      k.p = {a * std::sin(w * t), 0.5 * b * std::sin(2.0 * w * t), 0.0};
      k.v = {a * w * std::cos(w * t), b * w * std::cos(2.0 * w * t), 0.0};
      k.a = {-a * w * w * std::sin(w * t), -2.0 * b * w * w * std::sin(2.0 * w * t), 0.0};
      break;
    }
    case TrajectoryKind::kStraightWithTurns: {
      constexpr double kFirst = 5.0;
      constexpr double kPeriod = 20.0;
      constexpr double kBend = 8.0;
      const double amp = 0.1 * c.size;
      k.p = {c.speed * t, 0.0, 0.0};
      k.v = {c.speed, 0.0, 0.0};
      for (int n = 0; kFirst + n * kPeriod < t; ++n) {
        const double sign = (n % 2 == 0) ? 1.0 : -1.0;
        const double u = std::min(1.0, (t - kFirst - n * kPeriod) / kBend);
        k.p.y() += sign * amp * smoothstep(u);
        if (u < 1.0) {
          k.v.y() += sign * amp * smoothstep_d1(u) / kBend;
          k.a.y() += sign * amp * smoothstep_d2(u) / (kBend * kBend);
        }
      }
      break;
    }
  }
  return k;
}

Kin local_kinematics(const ScenarioConfig& c, double t) {
  Kin k = horizontal(c, t);
  const double wz = 2.0 * kPi / 40.0;
  const double az = c.vertical_amplitude;
  k.p.z() = az * std::sin(wz * t);
  k.v.z() = az * wz * std::cos(wz * t);
  k.a.z() = -az * wz * wz * std::sin(wz * t);
  return k;
}

struct LocalAttitude {
  Mat3 rotation;  // body -> ENU
  Vec3 body_rate;
};

LocalAttitude local_attitude(const ScenarioConfig& c, const Kin& k, double t) {
  const double vx = k.v.x();
  const double vy = k.v.y();
  const double vz = k.v.z();
  const double vh2 = vx * vx + vy * vy;
  const double vh = std::sqrt(vh2);
  const double yaw = std::atan2(vy, vx);
  const double yaw_rate = (vx * k.a.y() - vy * k.a.x()) / vh2;
  const double pitch = -std::atan2(vz, vh);  // nose-down positive
  const double vh_rate = (vx * k.a.x() + vy * k.a.y()) / vh;
  const double pitch_rate = -(vh * k.a.z() - vz * vh_rate) / (vh2 + vz * vz);
  const double wr = 2.0 * kPi / 7.0;
  const double roll = c.roll_amplitude * std::sin(wr * t);
  const double roll_rate = c.roll_amplitude * wr * std::cos(wr * t);

  LocalAttitude out;
  out.rotation = body_to_enu(yaw, pitch, roll);
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  out.body_rate = {roll_rate - yaw_rate * sp,
                   pitch_rate * cr + yaw_rate * sr * cp,
                   -pitch_rate * sr + yaw_rate * cr * cp};
  return out;
}

struct Frames {
  Vec3 origin_ecef;
  Mat3 enu_to_ecef;
};

Frames local_frames(const ScenarioConfig& c) {
  return {lla_to_ecef(c.origin), enu_to_ecef_rotation(c.origin)};
}

double elevation_from(const Vec3& receiver, const Vec3& sat) {
  const GeodeticCoord g = ecef_to_lla(receiver);
  const Vec3 up = enu_to_ecef_rotation(g).col(2);
  return std::asin(std::clamp((sat - receiver).normalized().dot(up), -1.0, 1.0));
}

}  // namespace

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kCircle: return "circle";
    case TrajectoryKind::kFigureEight: return "figure-eight";
    case TrajectoryKind::kStraightWithTurns: return "straight-with-turns";
  }
  return "unknown";
}

TrajectoryKind parse_trajectory_kind(const std::string& s) {
  if (s == "circle") return TrajectoryKind::kCircle;
  if (s == "figure-eight") return TrajectoryKind::kFigureEight;
  if (s == "straight-with-turns") return TrajectoryKind::kStraightWithTurns;
  throw Error(ErrorCode::kConfigInvalid, "unknown trajectory '" + s + "'");
}

std::string to_string(DegradationKind kind) {
  switch (kind) {
    case DegradationKind::kGnssOutage: return "gnss_outage";
    case DegradationKind::kNlosBias: return "nlos_bias";
    case DegradationKind::kSatelliteDropTo: return "satellite_drop_to";
    case DegradationKind::kFeatureDrought: return "feature_drought";
  }
  return "unknown";
}

DegradationKind parse_degradation_kind(const std::string& s) {
  if (s == "gnss_outage") return DegradationKind::kGnssOutage;
  if (s == "nlos_bias") return DegradationKind::kNlosBias;
  if (s == "satellite_drop_to") return DegradationKind::kSatelliteDropTo;
  if (s == "feature_drought") return DegradationKind::kFeatureDrought;
  throw Error(ErrorCode::kConfigInvalid, "unknown degradation '" + s + "'");
}

CameraExtrinsics default_camera_extrinsics() {
  CameraExtrinsics e;
  e.lever_arm = {0.5, 0.0, 0.8};
  // camera z = body x, camera x = -body y, camera y = -body z
  e.rotation_bc << 0.0, -1.0, 0.0,
                   0.0, 0.0, -1.0,
                   1.0, 0.0, 0.0;
  return e;
}

ScenarioConfig::ScenarioConfig() : camera(default_camera_extrinsics()) {}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfigInvalid, m); };
  if (!(duration > 10.0)) fail("duration must exceed 10 s");
  if (!(imu_rate > 0.0 && cam_rate > 0.0 && gnss_rate > 0.0)) fail("rates must be positive");
  auto divides = [&](double r) {
    const double q = imu_rate / r;
    return std::abs(q - std::round(q)) < 1e-9 && q >= 1.0;
  };
  if (!divides(cam_rate)) fail("imu_rate must be a multiple of cam_rate");
  if (!divides(gnss_rate)) fail("imu_rate must be a multiple of gnss_rate");
  if (imu_rate < 10.0) fail("imu_rate must be at least 10 Hz");
  if (!(speed > 0.5) || !(size > 5.0)) fail("speed/size out of range");
  if (feature_count < 0 || max_features_per_frame < 0) fail("feature counts must be >= 0");
  if (!(feature_depth_min > 0.0 && feature_depth_max >= feature_depth_min)) {
    fail("feature depth range invalid");
  }
  if (!(pixel_sigma >= 0.0) || !(gnss_noise.code_sigma >= 0.0) || !(gnss_noise.phase_sigma >= 0.0)) {
    fail("sigmas must be >= 0");
  }
  if (base_offset_enu.norm() > 10e3) fail("base station farther than 10 km");
  if (!(intrinsics.fx > 0.0 && intrinsics.fy > 0.0)) fail("focal lengths must be positive");
  if (!is_rotation(camera.rotation_bc, 1e-6)) fail("camera rotation not orthonormal");
  try {
    imu_noise.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  for (const Degradation& d : degradations) {
    if (!(d.t0 >= 0.0 && d.t1 > d.t0 && d.t1 <= duration + 1e-9)) {
      fail("degradation window outside [0, duration]");
    }
    if (d.kind == DegradationKind::kSatelliteDropTo && !(d.value >= 0.0)) {
      fail("satellite_drop_to needs a count");
    }
  }
}

ScenarioConfig ScenarioConfig::noise_free() const {
  ScenarioConfig c = *this;
  c.imu_noise = NoiseParams::zero();
  c.imu_biases = false;
  c.pixel_sigma = 0.0;
  c.gnss_noise.code_sigma = 0.0;
  c.gnss_noise.phase_sigma = 0.0;
  return c;
}

int ScenarioConfig::imu_ticks_per_frame() const {
  return static_cast<int>(std::lround(imu_rate / cam_rate));
}
int ScenarioConfig::imu_ticks_per_gnss() const {
  return static_cast<int>(std::lround(imu_rate / gnss_rate));
}

TrajectoryPoint trajectory_point(const ScenarioConfig& c, double t) {
  const Frames f = local_frames(c);
  const Kin k = local_kinematics(c, t);
  const LocalAttitude la = local_attitude(c, k, t);
  TrajectoryPoint out;
  out.position = f.origin_ecef + f.enu_to_ecef * k.p;
  out.velocity = f.enu_to_ecef * k.v;
  out.acceleration = f.enu_to_ecef * k.a;
  out.attitude = f.enu_to_ecef * la.rotation;
  out.body_rate = la.body_rate;
  return out;
}

Vec3 satellite_position(const ScenarioConfig& c, int index, double t) {
  static constexpr double kEl[kSatelliteCount] = {80, 62, 50, 42, 35, 28, 22, 16};
  static constexpr double kAz[kSatelliteCount] = {20, 110, 200, 290, 65, 155, 245, 335};
  if (index < 0 || index >= kSatelliteCount) {
    throw Error(ErrorCode::kInvalidArgument, "satellite index out of range");
  }
  const EarthParams earth;
  const Frames f = local_frames(c);
  const double el = kEl[index] * kDeg;
  const double az = kAz[index] * kDeg;
  const Vec3 u = f.enu_to_ecef *
                 Vec3(std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), std::sin(el));
  // Intersect the line of sight with the orbit sphere.
  const double b = f.origin_ecef.dot(u);
  const double cc = f.origin_ecef.squaredNorm() - kSatRadius * kSatRadius;
  const Vec3 s0 = f.origin_ecef + (-b + std::sqrt(b * b - cc)) * u;

  // Orbit normal perpendicular to s0 with the target inclination where reachable.
  const Vec3 s = s0.normalized();
  const Vec3 e1 = s.unitOrthogonal();
  const Vec3 e2 = s.cross(e1);
  const double hz = std::hypot(e1.z(), e2.z());
  const double cos_i = std::min(std::cos(55.0 * kDeg), hz);
  const double base_angle = std::atan2(e2.z(), e1.z());
  const double offset = std::acos(std::clamp(cos_i / hz, -1.0, 1.0));
  const double ang = base_angle + ((index % 2 == 0) ? offset : -offset);
  const Vec3 n = std::cos(ang) * e1 + std::sin(ang) * e2;

  const double mean_motion = std::sqrt(earth.mu / (kSatRadius * kSatRadius * kSatRadius));
  const Vec3 inertial = std::cos(mean_motion * t) * s0 + std::sin(mean_motion * t) * n.cross(s0);
  return rot_z(-earth.earth_rotation_rate * t) * inertial;
}

ScenarioDataset generate(const ScenarioConfig& config) {
  config.validate();
  ScenarioDataset ds;
  ds.config = config;
  const Frames frames = local_frames(config);
  ds.base_position = frames.origin_ecef + frames.enu_to_ecef * config.base_offset_enu;
  const EarthParams earth;
  const Vec3 wie = earth.rotation_vector();

  const long n_ticks = std::lround(config.duration * config.imu_rate);
  auto tick_time = [&](long k) { return static_cast<double>(k) / config.imu_rate; };

  // IMU and truth.
  std::mt19937_64 imu_rng = stream(config.seed, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto gauss3 = [&](std::mt19937_64& g) { return Vec3(gauss(g), gauss(g), gauss(g)); };
  const NoiseParams& nz = config.imu_noise;
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  if (config.imu_biases) {
    ba = nz.accel_bias_sigma * gauss3(imu_rng);
    bg = nz.gyro_bias_sigma * gauss3(imu_rng);
  }
  const double dt = 1.0 / config.imu_rate;
  const double sg = nz.gyro_noise_density * std::sqrt(config.imu_rate);
  const double sa = nz.accel_noise_density * std::sqrt(config.imu_rate);
  ds.truth.reserve(static_cast<std::size_t>(n_ticks + 1));
  ds.imu.reserve(static_cast<std::size_t>(n_ticks + 1));
  for (long k = 0; k <= n_ticks; ++k) {
    const double t = tick_time(k);
    if (k > 0) {
      ba += nz.accel_bias_walk * std::sqrt(dt) * gauss3(imu_rng);
      bg += nz.gyro_bias_walk * std::sqrt(dt) * gauss3(imu_rng);
    }
    const TrajectoryPoint tp = trajectory_point(config, t);
    NavState s;
    s.timestamp = t;
    s.position = tp.position;
    s.velocity = tp.velocity;
    s.attitude = tp.attitude;
    s.accel_bias = ba;
    s.gyro_bias = bg;
    ds.truth.push_back(s);

    const Vec3 f_e = tp.acceleration - gravity_ecef(tp.position, earth) +
                     2.0 * wie.cross(tp.velocity);
    ImuSample m;
    m.timestamp = t;
    m.angular_rate = tp.body_rate + tp.attitude.transpose() * wie + bg;
    m.specific_force = tp.attitude.transpose() * f_e + ba;
    if (sg > 0.0) m.angular_rate += sg * gauss3(imu_rng);
    if (sa > 0.0) m.specific_force += sa * gauss3(imu_rng);
    ds.imu.push_back(m);
  }

  // Landmarks scattered beside the path.
  std::mt19937_64 lm_rng = stream(config.seed, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ds.landmarks.reserve(static_cast<std::size_t>(config.feature_count));
  std::vector<double> priority;
  for (int n = 0; n < config.feature_count; ++n) {
    // Spread over the path plus a look-ahead margin.
    const double tau = unit(lm_rng) * (config.duration + 8.0);
    const Kin k = local_kinematics(config, tau);
    const Vec3 along = Vec3(k.v.x(), k.v.y(), 0.0).normalized();
    const Vec3 left(-along.y(), along.x(), 0.0);
    const double side = unit(lm_rng) < 0.5 ? -1.0 : 1.0;
    const double lateral =
        config.feature_depth_min + unit(lm_rng) * (config.feature_depth_max - config.feature_depth_min);
    const double jitter = (unit(lm_rng) - 0.5) * 10.0;
    const double height = -1.0 + unit(lm_rng) * 6.0;
    const Vec3 p_local = k.p + side * lateral * left + jitter * along + Vec3(0.0, 0.0, height);
    ds.landmarks.push_back(frames.origin_ecef + frames.enu_to_ecef * p_local);
    priority.push_back(unit(lm_rng));
  }

  // Camera frames with persistent track ids.
  std::mt19937_64 px_rng = stream(config.seed, 3);
  const int per_frame = config.imu_ticks_per_frame();
  std::map<int, FeatureId> active;  // landmark -> track id
  FeatureId next_track = 0;
  CloneId frame_id = 0;
  for (long k = 0; k <= n_ticks; k += per_frame, ++frame_id) {
    const NavState& s = ds.truth[static_cast<std::size_t>(k)];
    const CameraPose cam = body_pose_to_camera(s.attitude, s.position, config.camera);
    struct Candidate {
      int landmark;
      bool continuing;
      double key;
      Vec2 pixel;
    };
    std::vector<Candidate> cands;
    for (int n = 0; n < static_cast<int>(ds.landmarks.size()); ++n) {
      const Vec3& lm = ds.landmarks[static_cast<std::size_t>(n)];
      if ((lm - cam.position).squaredNorm() > config.max_feature_range * config.max_feature_range) {
        continue;
      }
      const Vec3 q = cam.to_camera(lm);
      if (q.z() < 2.0) continue;
      const Vec2 px = config.intrinsics.project(q);
      if (px.x() < 1.0 || px.y() < 1.0 || px.x() > config.image_width - 1.0 ||
          px.y() > config.image_height - 1.0) {
        continue;
      }
      auto it = active.find(n);
      const bool cont = it != active.end();
      cands.push_back({n, cont, cont ? static_cast<double>(it->second)
                                     : priority[static_cast<std::size_t>(n)], px});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.continuing != b.continuing) return a.continuing;
      if (a.key != b.key) return a.key < b.key;
      return a.landmark < b.landmark;
    });
    if (static_cast<int>(cands.size()) > config.max_features_per_frame) {
      cands.resize(static_cast<std::size_t>(config.max_features_per_frame));
    }
    std::map<int, FeatureId> next_active;
    CameraFrame frame;
    frame.timestamp = tick_time(k);
    frame.frame_id = frame_id;
    for (const Candidate& c : cands) {
      FeatureId id;
      auto it = active.find(c.landmark);
      if (it != active.end()) {
        id = it->second;
      } else {
        id = next_track++;
      }
      next_active.emplace(c.landmark, id);
      FeatureMeasurement fm;
      fm.feature_id = id;
      fm.pixel = c.pixel;
      if (config.pixel_sigma > 0.0) {
        fm.pixel += config.pixel_sigma * Vec2(gauss(px_rng), gauss(px_rng));
      }
      fm.bearing = config.intrinsics.to_bearing(fm.pixel);
      frame.features.push_back(fm);
    }
    std::sort(frame.features.begin(), frame.features.end(),
              [](const FeatureMeasurement& a, const FeatureMeasurement& b) {
                return a.feature_id < b.feature_id;
              });
    active = std::move(next_active);
    ds.frames.push_back(std::move(frame));
  }

  // GNSS rover and base observations.
  std::mt19937_64 gnss_rng = stream(config.seed, 4);
  std::uniform_int_distribution<int> amb_dist(-1000, 1000);
  std::uniform_real_distribution<double> clock_dist(-3e4, 3e4);
  const double lambda = kGpsL1Wavelength;
  int amb_rover[kSatelliteCount];
  int amb_base[kSatelliteCount];
  double sat_clock[kSatelliteCount];
  double iono_zenith[kSatelliteCount];
  for (int i = 0; i < kSatelliteCount; ++i) {
    amb_rover[i] = amb_dist(gnss_rng);
    amb_base[i] = amb_dist(gnss_rng);
    sat_clock[i] = clock_dist(gnss_rng);
    iono_zenith[i] = 2.0 + 6.0 * unit(gnss_rng);
  }
  const double rover_clock0 = clock_dist(gnss_rng);
  const double base_clock0 = clock_dist(gnss_rng);
  const int per_epoch = config.imu_ticks_per_gnss();
  for (long k = 0; k <= n_ticks; k += per_epoch) {
    const double t = tick_time(k);
    const NavState& s = ds.truth[static_cast<std::size_t>(k)];
    const Vec3 antenna = s.position + s.attitude * config.gnss_lever_arm;
    GnssEpoch rover{t, {}};
    GnssEpoch base{t, {}};
    const double rover_clock = rover_clock0 + 0.8 * t;
    const double base_clock = base_clock0 - 0.3 * t;
    for (int i = 0; i < kSatelliteCount; ++i) {
      const Vec3 sat = satellite_position(config, i, t);
      const double el_r = elevation_from(antenna, sat);
      const double el_b = elevation_from(ds.base_position, sat);
      const double el_atmo = std::max(el_r, 5.0 * kDeg);
      const double iono = iono_zenith[i] / std::sin(el_atmo);
      const double tropo = 2.3 / std::sin(el_atmo);
      auto observe = [&](const Vec3& rx, double clock, int amb, double el, GnssEpoch& ep) {
        const double range = (sat - rx).norm();
        const double se = std::sin(std::max(el, 5.0 * kDeg));
        GnssObservation o;
        o.sat_id = i + 1;
        o.wavelength = lambda;
        o.sat_position = sat;
        o.elevation = el;
        o.pseudorange = range + clock - sat_clock[i] + iono + tropo;
        const double phase_m = range + clock - sat_clock[i] - iono + tropo;
        o.carrier_phase = phase_m / lambda + amb;
        if (config.gnss_noise.code_sigma > 0.0) {
          o.pseudorange += config.gnss_noise.code_sigma / se * gauss(gnss_rng);
        }
        if (config.gnss_noise.phase_sigma > 0.0) {
          o.carrier_phase += config.gnss_noise.phase_sigma / se * gauss(gnss_rng) / lambda;
        }
        ep.observations.push_back(o);
      };
      if (el_r > 0.0) observe(antenna, rover_clock, amb_rover[i], el_r, rover);
      if (el_b > 0.0) observe(ds.base_position, base_clock, amb_base[i], el_b, base);
    }
    ds.gnss_rover.push_back(std::move(rover));
    ds.gnss_base.push_back(std::move(base));
  }

  return inject_degradations(std::move(ds), config.degradations);
}

ScenarioConfig default_degraded_scenario(std::uint64_t seed) {
  ScenarioConfig c;
  c.seed = seed;
  c.duration = 120.0;
  c.degradations = {
      {DegradationKind::kNlosBias, 20.0, 40.0, 20.0, -1},
      {DegradationKind::kSatelliteDropTo, 50.0, 65.0, 4.0, -1},
      {DegradationKind::kGnssOutage, 75.0, 95.0, 0.0, -1},
      {DegradationKind::kFeatureDrought, 100.0, 104.0, 0.0, -1},
  };
  return c;
}

ScenarioDataset inject_degradations(ScenarioDataset ds, const std::vector<Degradation>& windows) {
  auto inside = [](const Degradation& d, double t) { return t >= d.t0 && t < d.t1; };
  for (const Degradation& d : windows) {
    switch (d.kind) {
      case DegradationKind::kGnssOutage: {
        auto drop = [&](std::vector<GnssEpoch>& eps) {
          eps.erase(std::remove_if(eps.begin(), eps.end(),
                                   [&](const GnssEpoch& e) { return inside(d, e.timestamp); }),
                    eps.end());
        };
        drop(ds.gnss_rover);
        drop(ds.gnss_base);
        break;
      }
      case DegradationKind::kNlosBias: {
        for (GnssEpoch& e : ds.gnss_rover) {
          if (!inside(d, e.timestamp) || e.observations.empty()) continue;
          SatId target = d.sat_id;
          if (target < 0) {
            auto low = std::min_element(e.observations.begin(), e.observations.end(),
                                        [](const GnssObservation& a, const GnssObservation& b) {
                                          return a.elevation < b.elevation;
                                        });
            target = low->sat_id;
          }
          for (GnssObservation& o : e.observations) {
            if (o.sat_id == target) o.pseudorange += d.value;
          }
        }
        break;
      }
      case DegradationKind::kSatelliteDropTo: {
        const std::size_t keep = static_cast<std::size_t>(std::max(0.0, d.value));
        for (GnssEpoch& e : ds.gnss_rover) {
          if (!inside(d, e.timestamp) || e.observations.size() <= keep) continue;
          std::stable_sort(e.observations.begin(), e.observations.end(),
                           [](const GnssObservation& a, const GnssObservation& b) {
                             return a.elevation > b.elevation;
                           });
          e.observations.resize(keep);
          std::sort(e.observations.begin(), e.observations.end(),
                    [](const GnssObservation& a, const GnssObservation& b) {
                      return a.sat_id < b.sat_id;
                    });
        }
        break;
      }
      case DegradationKind::kFeatureDrought: {
        const std::size_t keep =
            d.value > 0.0 ? std::min<std::size_t>(5, static_cast<std::size_t>(d.value)) : 5;
        for (CameraFrame& f : ds.frames) {
          if (inside(d, f.timestamp) && f.features.size() > keep) f.features.resize(keep);
        }
        break;
      }
    }
  }
  return ds;
}

}  // namespace pogvins
