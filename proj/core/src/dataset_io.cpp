#include "pogvins/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/Geometry>

#include "pogvins/errors.hpp"

namespace pogvins {

namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const std::vector<std::string> kImuHeader = {"t", "wx", "wy", "wz", "fx", "fy", "fz"};
const std::vector<std::string> kFeatureHeader = {"t",    "frame_id", "feature_id", "u_px",
                                                 "v_px", "x_norm",   "y_norm"};
const std::vector<std::string> kGnssHeader = {"t",     "sat_id", "pseudorange_m", "phase_cycles",
                                              "wavelength_m", "sat_x", "sat_y", "sat_z",
                                              "elevation_rad"};
const std::vector<std::string> kTruthHeader = {"t",  "px", "py", "pz", "vx", "vy",
                                               "vz", "qw", "qx", "qy", "qz"};

const std::vector<std::string> kScenarioKeys = {
    "seed", "duration", "imu_rate", "cam_rate", "gnss_rate", "trajectory", "speed", "size",
    "vertical_amplitude", "roll_amplitude", "feature_count", "feature_depth_min",
    "feature_depth_max", "max_features_per_frame", "max_feature_range", "gyro_noise_density",
    "accel_noise_density", "gyro_bias_walk", "accel_bias_walk", "gyro_bias_sigma",
    "accel_bias_sigma", "imu_biases", "pixel_sigma", "code_sigma", "phase_sigma",
    "elevation_mask_deg", "origin_lat_deg", "origin_lon_deg", "origin_height", "base_offset_enu",
    "fx", "fy", "cx", "cy", "image_width", "image_height", "camera_lever_arm",
    "camera_rotation_bc", "gnss_lever_arm", "degradation", "zero_noise", "base_position"};

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

double parse_number(const std::string& text, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::kParseError, where + ": bad number '" + text + "'");
  }
  return v;
}

Mat3 rotation_from_values(const std::vector<std::string>& v, const std::string& key) {
  if (v.size() != 9) throw Error(ErrorCode::kConfigInvalid, key + " needs 9 numbers");
  Mat3 r;
  for (int k = 0; k < 9; ++k) r(k / 3, k % 3) = parse_number(v[static_cast<std::size_t>(k)], key);
  return r;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path + "'");
  return out;
}

void write_row(std::ofstream& out, const std::vector<double>& row) {
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (k) out << ',';
    out << format_double(row[k]);
  }
  out << '\n';
}

void write_header(std::ofstream& out, const std::vector<std::string>& h) {
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (k) out << ',';
    out << h[k];
  }
  out << '\n';
}

Eigen::Quaterniond quat(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

void write_gnss(const std::vector<GnssEpoch>& eps, const std::string& path) {
  std::ofstream out = open_out(path);
  write_header(out, kGnssHeader);
  for (const GnssEpoch& e : eps) {
    for (const GnssObservation& o : e.observations) {
      write_row(out, {e.timestamp, static_cast<double>(o.sat_id), o.pseudorange, o.carrier_phase,
                      o.wavelength, o.sat_position.x(), o.sat_position.y(), o.sat_position.z(),
                      o.elevation});
    }
  }
}

std::vector<GnssEpoch> read_gnss(const std::string& path) {
  const CsvTable t = read_csv(path, kGnssHeader);
  std::vector<GnssEpoch> out;
  for (const auto& r : t.rows) {
    if (out.empty() || out.back().timestamp != r[0]) {
      if (!out.empty() && r[0] < out.back().timestamp) {
        throw Error(ErrorCode::kParseError, path + ": timestamps not increasing");
      }
      out.push_back({r[0], {}});
    }
    GnssObservation o;
    o.sat_id = static_cast<SatId>(r[1]);
    o.pseudorange = r[2];
    o.carrier_phase = r[3];
    o.wavelength = r[4];
    o.sat_position = {r[5], r[6], r[7]};
    o.elevation = r[8];
    out.back().observations.push_back(o);
  }
  return out;
}

}  // namespace

ScenarioConfig scenario_config_from_kv(const KvConfig& kv) {
  kv.require_known(kScenarioKeys);
  ScenarioConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long>(c.seed)));
  c.duration = kv.get_double("duration", c.duration);
  c.imu_rate = kv.get_double("imu_rate", c.imu_rate);
  c.cam_rate = kv.get_double("cam_rate", c.cam_rate);
  c.gnss_rate = kv.get_double("gnss_rate", c.gnss_rate);
  c.trajectory = parse_trajectory_kind(kv.get_string("trajectory", to_string(c.trajectory)));
  c.speed = kv.get_double("speed", c.speed);
  c.size = kv.get_double("size", c.size);
  c.vertical_amplitude = kv.get_double("vertical_amplitude", c.vertical_amplitude);
  c.roll_amplitude = kv.get_double("roll_amplitude", c.roll_amplitude);
  c.feature_count = static_cast<int>(kv.get_int("feature_count", c.feature_count));
  c.feature_depth_min = kv.get_double("feature_depth_min", c.feature_depth_min);
  c.feature_depth_max = kv.get_double("feature_depth_max", c.feature_depth_max);
  c.max_features_per_frame =
      static_cast<int>(kv.get_int("max_features_per_frame", c.max_features_per_frame));
  c.max_feature_range = kv.get_double("max_feature_range", c.max_feature_range);
  NoiseParams& n = c.imu_noise;
  n.gyro_noise_density = kv.get_double("gyro_noise_density", n.gyro_noise_density);
  n.accel_noise_density = kv.get_double("accel_noise_density", n.accel_noise_density);
  n.gyro_bias_walk = kv.get_double("gyro_bias_walk", n.gyro_bias_walk);
  n.accel_bias_walk = kv.get_double("accel_bias_walk", n.accel_bias_walk);
  n.gyro_bias_sigma = kv.get_double("gyro_bias_sigma", n.gyro_bias_sigma);
  n.accel_bias_sigma = kv.get_double("accel_bias_sigma", n.accel_bias_sigma);
  c.imu_biases = kv.get_bool("imu_biases", c.imu_biases);
  c.pixel_sigma = kv.get_double("pixel_sigma", c.pixel_sigma);
  c.gnss_noise.code_sigma = kv.get_double("code_sigma", c.gnss_noise.code_sigma);
  c.gnss_noise.phase_sigma = kv.get_double("phase_sigma", c.gnss_noise.phase_sigma);
  c.gnss_noise.min_elevation =
      kv.get_double("elevation_mask_deg", c.gnss_noise.min_elevation / kDeg) * kDeg;
  c.origin.latitude = kv.get_double("origin_lat_deg", c.origin.latitude / kDeg) * kDeg;
  c.origin.longitude = kv.get_double("origin_lon_deg", c.origin.longitude / kDeg) * kDeg;
  c.origin.height = kv.get_double("origin_height", c.origin.height);
  c.base_offset_enu = kv.get_vec3("base_offset_enu", c.base_offset_enu);
  c.intrinsics.fx = kv.get_double("fx", c.intrinsics.fx);
  c.intrinsics.fy = kv.get_double("fy", c.intrinsics.fy);
  c.intrinsics.cx = kv.get_double("cx", c.intrinsics.cx);
  c.intrinsics.cy = kv.get_double("cy", c.intrinsics.cy);
  c.image_width = static_cast<int>(kv.get_int("image_width", c.image_width));
  c.image_height = static_cast<int>(kv.get_int("image_height", c.image_height));
  c.camera.lever_arm = kv.get_vec3("camera_lever_arm", c.camera.lever_arm);
  if (auto r = kv.get("camera_rotation_bc")) {
    c.camera.rotation_bc = rotation_from_values(split_ws(*r), "camera_rotation_bc");
  }
  c.gnss_lever_arm = kv.get_vec3("gnss_lever_arm", c.gnss_lever_arm);
  for (const std::string& line : kv.get_all("degradation")) {
    const auto tok = split_ws(line);
    if (tok.size() < 3 || tok.size() > 5) {
      throw Error(ErrorCode::kConfigInvalid,
                  "degradation = <kind> <t0> <t1> [value] [sat_id], got '" + line + "'");
    }
    Degradation d;
    d.kind = parse_degradation_kind(tok[0]);
    d.t0 = parse_number(tok[1], "degradation");
    d.t1 = parse_number(tok[2], "degradation");
    if (tok.size() > 3) d.value = parse_number(tok[3], "degradation");
    if (tok.size() > 4) d.sat_id = static_cast<SatId>(parse_number(tok[4], "degradation"));
    c.degradations.push_back(d);
  }
  if (kv.get_bool("zero_noise", false)) c = c.noise_free();
  c.validate();
  return c;
}

KvConfig scenario_config_to_kv(const ScenarioConfig& c) {
  KvConfig kv;
  auto d = [&](const std::string& k, double v) { kv.add(k, format_double(v)); };
  kv.add("seed", std::to_string(c.seed));
  d("duration", c.duration);
  d("imu_rate", c.imu_rate);
  d("cam_rate", c.cam_rate);
  d("gnss_rate", c.gnss_rate);
  kv.add("trajectory", to_string(c.trajectory));
  d("speed", c.speed);
  d("size", c.size);
  d("vertical_amplitude", c.vertical_amplitude);
  d("roll_amplitude", c.roll_amplitude);
  kv.add("feature_count", std::to_string(c.feature_count));
  d("feature_depth_min", c.feature_depth_min);
  d("feature_depth_max", c.feature_depth_max);
  kv.add("max_features_per_frame", std::to_string(c.max_features_per_frame));
  d("max_feature_range", c.max_feature_range);
  d("gyro_noise_density", c.imu_noise.gyro_noise_density);
  d("accel_noise_density", c.imu_noise.accel_noise_density);
  d("gyro_bias_walk", c.imu_noise.gyro_bias_walk);
  d("accel_bias_walk", c.imu_noise.accel_bias_walk);
  d("gyro_bias_sigma", c.imu_noise.gyro_bias_sigma);
  d("accel_bias_sigma", c.imu_noise.accel_bias_sigma);
  kv.add("imu_biases", c.imu_biases ? "true" : "false");
  d("pixel_sigma", c.pixel_sigma);
  d("code_sigma", c.gnss_noise.code_sigma);
  d("phase_sigma", c.gnss_noise.phase_sigma);
  d("elevation_mask_deg", c.gnss_noise.min_elevation / kDeg);
  d("origin_lat_deg", c.origin.latitude / kDeg);
  d("origin_lon_deg", c.origin.longitude / kDeg);
  d("origin_height", c.origin.height);
  kv.add("base_offset_enu", format_vec3(c.base_offset_enu));
  d("fx", c.intrinsics.fx);
  d("fy", c.intrinsics.fy);
  d("cx", c.intrinsics.cx);
  d("cy", c.intrinsics.cy);
  kv.add("image_width", std::to_string(c.image_width));
  kv.add("image_height", std::to_string(c.image_height));
  kv.add("camera_lever_arm", format_vec3(c.camera.lever_arm));
  std::string rot;
  for (int k = 0; k < 9; ++k) {
    if (k) rot += ' ';
    rot += format_double(c.camera.rotation_bc(k / 3, k % 3));
  }
  kv.add("camera_rotation_bc", rot);
  kv.add("gnss_lever_arm", format_vec3(c.gnss_lever_arm));
  for (const Degradation& g : c.degradations) {
    kv.add("degradation", to_string(g.kind) + " " + format_double(g.t0) + " " +
                              format_double(g.t1) + " " + format_double(g.value) + " " +
                              std::to_string(g.sat_id));
  }
  return kv;
}

CsvTable read_csv(const std::string& path, const std::vector<std::string>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  if (!expected.empty() && t.header != expected) {
    throw Error(ErrorCode::kParseError, path + ": unexpected header '" + line + "'");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(t.header.size());
    std::size_t start = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      row.push_back(parse_number(line.substr(start, end - start),
                                 path + ":" + std::to_string(lineno)));
      start = end + 1;
    }
    if (row.size() != t.header.size()) {
      throw Error(ErrorCode::kParseError,
                  path + ":" + std::to_string(lineno) + ": wrong number of columns");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out = open_out(path);
  write_header(out, table.header);
  for (const auto& r : table.rows) write_row(out, r);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for '" + path + "'");
}

void write_trajectory_csv(const std::vector<TrajectorySample>& traj, const std::string& path) {
  std::ofstream out = open_out(path);
  write_header(out, kTruthHeader);
  for (const TrajectorySample& s : traj) {
    const Eigen::Quaterniond q = quat(s.attitude);
    write_row(out, {s.timestamp, s.position.x(), s.position.y(), s.position.z(), s.velocity.x(),
                    s.velocity.y(), s.velocity.z(), q.w(), q.x(), q.y(), q.z()});
  }
  if (!out) throw Error(ErrorCode::kIoError, "write failed for '" + path + "'");
}

std::vector<TrajectorySample> read_trajectory_csv(const std::string& path) {
  const CsvTable t = read_csv(path, kTruthHeader);
  std::vector<TrajectorySample> out;
  out.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    TrajectorySample s;
    s.timestamp = r[0];
    s.position = {r[1], r[2], r[3]};
    s.velocity = {r[4], r[5], r[6]};
    Eigen::Quaterniond q(r[7], r[8], r[9], r[10]);
    if (!(q.norm() > 0.5)) throw Error(ErrorCode::kParseError, path + ": invalid quaternion");
    s.attitude = q.normalized().toRotationMatrix();
    out.push_back(s);
  }
  return out;
}

std::vector<TrajectorySample> to_trajectory(const std::vector<NavState>& states) {
  std::vector<TrajectorySample> out;
  out.reserve(states.size());
  for (const NavState& s : states) out.push_back({s.timestamp, s.position, s.velocity, s.attitude});
  return out;
}

void write_dataset(const ScenarioDataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create '" + dir + "': " + ec.message());
  const fs::path root(dir);
  {
    std::ofstream out = open_out((root / "imu.csv").string());
    write_header(out, kImuHeader);
    for (const ImuSample& m : ds.imu) {
      write_row(out, {m.timestamp, m.angular_rate.x(), m.angular_rate.y(), m.angular_rate.z(),
                      m.specific_force.x(), m.specific_force.y(), m.specific_force.z()});
    }
  }
  {
    std::ofstream out = open_out((root / "features.csv").string());
    write_header(out, kFeatureHeader);
    for (const CameraFrame& f : ds.frames) {
      for (const FeatureMeasurement& m : f.features) {
        write_row(out, {f.timestamp, static_cast<double>(f.frame_id),
                        static_cast<double>(m.feature_id), m.pixel.x(), m.pixel.y(), m.bearing.x,
                        m.bearing.y});
      }
    }
  }
  write_gnss(ds.gnss_rover, (root / "gnss_rover.csv").string());
  write_gnss(ds.gnss_base, (root / "gnss_base.csv").string());
  write_trajectory_csv(to_trajectory(ds.truth), (root / "truth.csv").string());
  KvConfig meta = scenario_config_to_kv(ds.config);
  meta.add("base_position", format_vec3(ds.base_position));
  std::ofstream out = open_out((root / "meta").string());
  out << meta.to_string();
  if (!out) throw Error(ErrorCode::kIoError, "write failed for meta");
}

ScenarioDataset read_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw Error(ErrorCode::kIoError, "no dataset at '" + dir + "'");
  ScenarioDataset ds;
  const KvConfig meta = KvConfig::load((root / "meta").string());
  ds.config = scenario_config_from_kv(meta);
  ds.base_position = meta.get_vec3("base_position", Vec3::Zero());
  if (!meta.has("base_position")) {
    throw Error(ErrorCode::kParseError, "meta lacks base_position");
  }

  const CsvTable imu = read_csv((root / "imu.csv").string(), kImuHeader);
  ds.imu.reserve(imu.rows.size());
  for (const auto& r : imu.rows) {
    ds.imu.push_back({r[0], {r[1], r[2], r[3]}, {r[4], r[5], r[6]}});
  }
  const CsvTable feat = read_csv((root / "features.csv").string(), kFeatureHeader);
  for (const auto& r : feat.rows) {
    const CloneId fid = static_cast<CloneId>(r[1]);
    if (ds.frames.empty() || ds.frames.back().frame_id != fid) {
      ds.frames.push_back({r[0], fid, {}});
    }
    FeatureMeasurement m;
    m.feature_id = static_cast<FeatureId>(r[2]);
    m.pixel = {r[3], r[4]};
    m.bearing = {r[5], r[6]};
    ds.frames.back().features.push_back(m);
  }
  // Frames without features are not in features.csv; restore the full camera clock so
  // clone cadence does not depend on feature availability.
  {
    std::vector<CameraFrame> full;
    const int per = ds.config.imu_ticks_per_frame();
    std::size_t next = 0;
    CloneId id = 0;
    for (std::size_t k = 0; k < ds.imu.size(); k += static_cast<std::size_t>(per), ++id) {
      if (next < ds.frames.size() && ds.frames[next].frame_id == id) {
        full.push_back(std::move(ds.frames[next++]));
      } else {
        full.push_back({ds.imu[k].timestamp, id, {}});
      }
    }
    ds.frames = std::move(full);
  }
  ds.gnss_rover = read_gnss((root / "gnss_rover.csv").string());
  ds.gnss_base = read_gnss((root / "gnss_base.csv").string());
  for (const TrajectorySample& s : read_trajectory_csv((root / "truth.csv").string())) {
    NavState n;
    n.timestamp = s.timestamp;
    n.position = s.position;
    n.velocity = s.velocity;
    n.attitude = s.attitude;
    ds.truth.push_back(n);
  }
  return ds;
}

}  // namespace pogvins
