#include "pogvins/ins.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pogvins/errors.hpp"
#include "pogvins/so3.hpp"

namespace pogvins {

void NoiseParams::validate() const {
  const double values[] = {gyro_noise_density, accel_noise_density, gyro_bias_walk,
                           accel_bias_walk,    position_noise_density, gyro_bias_sigma,
                           accel_bias_sigma};
  for (double v : values) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, "noise densities must be finite and >= 0");
    }
  }
}

NoiseParams NoiseParams::zero() {
  NoiseParams n;
  n.gyro_noise_density = 0.0;
  n.accel_noise_density = 0.0;
  n.gyro_bias_walk = 0.0;
  n.accel_bias_walk = 0.0;
  n.position_noise_density = 0.0;
  n.gyro_bias_sigma = 0.0;
  n.accel_bias_sigma = 0.0;
  return n;
}

namespace {

Vec3 earth_rate(const MechanizationOptions& opts) {
  return opts.earth_rotation ? opts.earth.rotation_vector() : Vec3::Zero();
}

Vec3 gravity_at(const Vec3& r, const MechanizationOptions& opts) {
  return opts.gravity ? gravity_ecef(r, opts.earth) : Vec3::Zero();
}

// Rotation vector over an interval with linearly varying rate, including the
// second-order coning term.
Vec3 rotation_increment(const Vec3& w0, const Vec3& w1, double dt) {
  return 0.5 * (w0 + w1) * dt + (dt * dt / 12.0) * w0.cross(w1);
}

NavState integrate(const NavState& s, const ImuSample& start, const ImuSample& end, double dt,
                   const MechanizationOptions& opts) {
  const Vec3 w0 = start.angular_rate - s.gyro_bias;
  const Vec3 w1 = end.angular_rate - s.gyro_bias;
  const Vec3 f0 = start.specific_force - s.accel_bias;
  const Vec3 f1 = end.specific_force - s.accel_bias;
  const Vec3 wie = earth_rate(opts);

  // R(t) = Exp(-w_ie t) R0 R_body(t) separates the Earth-rate and body-rate terms exactly.
  const Vec3 w_mid = 0.5 * (w0 + w1);
  const Vec3 f_mid = 0.5 * (f0 + f1);
  const Mat3 r_mid = so3_exp(-wie * 0.5 * dt) * s.attitude *
                     so3_exp(rotation_increment(w0, w_mid, 0.5 * dt));
  const Mat3 r_end = so3_exp(-wie * dt) * s.attitude * so3_exp(rotation_increment(w0, w1, dt));

  // Simpson's rule on the rotated specific force.
  const Vec3 dv_force = (dt / 6.0) * (s.attitude * f0 + 4.0 * r_mid * f_mid + r_end * f1);

  // Trapezoid on gravity and Coriolis with a predictor for the end point.
  const Vec3 a_other0 = gravity_at(s.position, opts) - 2.0 * wie.cross(s.velocity);
  const Vec3 v_pred = s.velocity + dv_force + a_other0 * dt;
  const Vec3 r_pred = s.position + 0.5 * dt * (s.velocity + v_pred);
  const Vec3 a_other1 = gravity_at(r_pred, opts) - 2.0 * wie.cross(v_pred);

  NavState out = s;
  out.velocity = s.velocity + dv_force + 0.5 * dt * (a_other0 + a_other1);
  // Trapezoid plus the end-point derivative correction (Hermite form).
  const Vec3 acc0 = s.attitude * f0 + a_other0;
  const Vec3 acc1 = r_end * f1 + gravity_at(r_pred, opts) - 2.0 * wie.cross(out.velocity);
  out.position = s.position + 0.5 * dt * (s.velocity + out.velocity) +
                 (dt * dt / 12.0) * (acc0 - acc1);
  out.attitude = orthonormalize(r_end);
  return out;
}

void check_dt(double dt) {
  if (!(dt > 0.0 && dt <= 0.1)) {
    throw Error(ErrorCode::kInvalidArgument, "propagation step must satisfy 0 < dt <= 0.1 s");
  }
}

}  // namespace

NavState propagate_nav(const NavState& state, const ImuSample& sample, double dt,
                       const MechanizationOptions& opts) {
  if (!(sample.timestamp > state.timestamp)) {
    throw Error(ErrorCode::kNonMonotonicTime, "IMU sample not after the state time");
  }
  check_dt(dt);
  NavState out = integrate(state, sample, sample, dt, opts);
  out.timestamp = state.timestamp + dt;
  return out;
}

NavState propagate_nav(const NavState& state, const ImuSample& previous, const ImuSample& sample,
                       const MechanizationOptions& opts) {
  if (!(sample.timestamp > state.timestamp)) {
    throw Error(ErrorCode::kNonMonotonicTime, "IMU sample not after the state time");
  }
  const double dt = sample.timestamp - state.timestamp;
  check_dt(dt);
  NavState out = integrate(state, previous, sample, dt, opts);
  out.timestamp = sample.timestamp;
  return out;
}

ErrorStateModel error_state_matrices(const NavState& state, const ImuSample& sample,
                                     const MechanizationOptions& opts) {
  const Mat3 omega = skew(earth_rate(opts));
  const Vec3 f_world = state.attitude * (sample.specific_force - state.accel_bias);
  const Mat3& rb = state.attitude;

  ErrorStateModel m;
  m.F.block<3, 3>(kPos, kVel) = Mat3::Identity();
  if (opts.gravity) {
    m.F.block<3, 3>(kVel, kPos) = gravity_gradient(state.position, opts.earth);
  }
  m.F.block<3, 3>(kVel, kVel) = -2.0 * omega;
  m.F.block<3, 3>(kVel, kAtt) = skew(f_world);
  m.F.block<3, 3>(kVel, kBa) = rb;
  m.F.block<3, 3>(kAtt, kAtt) = -omega;
  m.F.block<3, 3>(kAtt, kBg) = -rb;

  // Noise order: [accel white, gyro white, accel bias walk, gyro bias walk].
  m.G.block<3, 3>(kVel, 0) = rb;
  m.G.block<3, 3>(kAtt, 3) = -rb;
  m.G.block<3, 3>(kBa, 6) = Mat3::Identity();
  m.G.block<3, 3>(kBg, 9) = Mat3::Identity();
  return m;
}

void propagate_covariance_inplace(MatX& p, const ErrorStateModel& model, const NoiseParams& noise,
                                  double dt) {
  const Eigen::Index n = p.rows();
  if (n < kImuErrorDim || p.cols() != n) {
    throw Error(ErrorCode::kInvalidArgument, "covariance must be square with >= 15 rows");
  }
  const Mat15 phi = Mat15::Identity() + model.F * dt;

  Eigen::Matrix<double, 12, 1> qc;
  qc << Vec3::Constant(noise.accel_noise_density * noise.accel_noise_density),
      Vec3::Constant(noise.gyro_noise_density * noise.gyro_noise_density),
      Vec3::Constant(noise.accel_bias_walk * noise.accel_bias_walk),
      Vec3::Constant(noise.gyro_bias_walk * noise.gyro_bias_walk);
  Mat15 qd = model.G * qc.asDiagonal() * model.G.transpose() * dt;
  qd.block<3, 3>(kPos, kPos).diagonal().array() +=
      noise.position_noise_density * noise.position_noise_density * dt;

  const Mat15 p_imu = p.topLeftCorner<15, 15>();
  p.topLeftCorner<15, 15>() = phi * p_imu * phi.transpose() + qd;
  const Eigen::Index rest = n - kImuErrorDim;
  if (rest > 0) {
    const MatX cross = phi * p.topRightCorner(15, rest);
    p.topRightCorner(15, rest) = cross;
    p.bottomLeftCorner(rest, 15) = cross.transpose();
  }
  p.topLeftCorner<15, 15>() = 0.5 * (p.topLeftCorner<15, 15>() +
                                     p.topLeftCorner<15, 15>().transpose()).eval();
  if ((p.diagonal().array() < 0.0).any() || !p.diagonal().allFinite()) {
    throw Error(ErrorCode::kCovarianceNotPsd, "negative variance after propagation");
  }
}

MatX propagate_covariance(const MatX& covariance, const ErrorStateModel& model,
                          const NoiseParams& noise, double dt) {
  MatX out = covariance;
  propagate_covariance_inplace(out, model, noise, dt);
  return out;
}

void apply_imu_correction(NavState& s, const Eigen::Ref<const VecX>& dx) {
  s.position -= dx.segment<3>(kPos);
  s.velocity -= dx.segment<3>(kVel);
  s.attitude = orthonormalize(so3_exp(dx.segment<3>(kAtt)) * s.attitude);
  s.accel_bias += dx.segment<3>(kBa);
  s.gyro_bias += dx.segment<3>(kBg);
}

Eigen::Matrix<double, 15, 1> nav_error(const NavState& estimate, const NavState& truth) {
  Eigen::Matrix<double, 15, 1> e;
  e.segment<3>(kPos) = estimate.position - truth.position;
  e.segment<3>(kVel) = estimate.velocity - truth.velocity;
  e.segment<3>(kAtt) = so3_log(truth.attitude * estimate.attitude.transpose());
  e.segment<3>(kBa) = truth.accel_bias - estimate.accel_bias;
  e.segment<3>(kBg) = truth.gyro_bias - estimate.gyro_bias;
  return e;
}

Mat3 body_to_enu(double heading_enu, double pitch, double roll) {
  return rot_z(heading_enu) * rot_y(pitch) * rot_x(roll);
}

Attitude attitude_in_local_frame(const Mat3& body_to_ecef, const Vec3& position,
                                 const EarthParams& earth) {
  const Mat3 c = enu_to_ecef_rotation(ecef_to_lla(position, earth));
  const Mat3 r = c.transpose() * body_to_ecef;
  const double heading_enu = std::atan2(r(1, 0), r(0, 0));
  Attitude a;
  a.roll = std::atan2(r(2, 1), r(2, 2));
  a.pitch = std::asin(std::clamp(r(2, 0), -1.0, 1.0));  // nose-up positive
  a.yaw = std::remainder(std::numbers::pi / 2.0 - heading_enu, 2.0 * std::numbers::pi);
  if (a.yaw < 0.0) {
    a.yaw += 2.0 * std::numbers::pi;
  }
  return a;
}

NavState coarse_align(const std::vector<PositionFix>& gnss, const std::vector<ImuSample>& imu,
                      const EarthParams& earth, double min_speed, double half_window) {
  if (gnss.size() < 3 || imu.size() < 2 ||
      gnss.back().timestamp - gnss.front().timestamp < 5.0) {
    throw Error(ErrorCode::kInvalidArgument, "coarse alignment needs at least 5 s of data");
  }
  if (!(half_window > 0.0)) throw Error(ErrorCode::kInvalidArgument, "half_window must be positive");
  // Short buffers use the widest window that fits.
  const double hw = std::min(half_window, 0.5 * (gnss.back().timestamp - gnss.front().timestamp));
  for (std::size_t c = 0; c < gnss.size(); ++c) {
    const double tc = gnss[c].timestamp;
    if (tc - gnss.front().timestamp < hw - 1e-9 || gnss.back().timestamp - tc < hw - 1e-9) continue;
    std::size_t lo = c;
    std::size_t hi = c;
    while (lo > 0 && tc - gnss[lo - 1].timestamp <= hw + 1e-9) --lo;
    while (hi + 1 < gnss.size() && gnss[hi + 1].timestamp - tc <= hw + 1e-9) ++hi;
    if (c - lo < 1 || hi - c < 1) continue;
    const double t_lo = gnss[lo].timestamp - tc;
    const double t_hi = gnss[hi].timestamp - tc;
    if (tc + t_lo < imu.front().timestamp || tc + t_hi > imu.back().timestamp) continue;

    // Least-squares fit p(tau) = p0 + v tau + a tau^2 / 2 + j tau^3 / 6; rows of the solve
    // map fixes to (p0, v, a, j). The cubic term keeps jerk out of the velocity.
    const Eigen::Index n = static_cast<Eigen::Index>(hi - lo + 1);
    if (n < 5) continue;
    Eigen::MatrixX4d design(n, 4);
    std::vector<double> taus;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double tau = gnss[lo + static_cast<std::size_t>(k)].timestamp - tc;
      taus.push_back(tau);
      design.row(k) << 1.0, tau, 0.5 * tau * tau, tau * tau * tau / 6.0;
    }
    const Eigen::Matrix4d normal = design.transpose() * design;
    if (std::abs(normal.determinant()) < 1e-12) continue;
    const Eigen::Matrix4Xd fit = normal.inverse() * design.transpose();
    Vec3 p_fit = Vec3::Zero();
    Vec3 v_ecef = Vec3::Zero();
    Vec3 a_ecef = Vec3::Zero();
    for (Eigen::Index k = 0; k < n; ++k) {
      const Vec3& p = gnss[lo + static_cast<std::size_t>(k)].position;
      p_fit += fit(0, k) * p;
      v_ecef += fit(1, k) * p;
      a_ecef += fit(2, k) * p;
    }
    const GeodeticCoord lla = ecef_to_lla(p_fit, earth);
    const Mat3 c_enu = enu_to_ecef_rotation(lla);
    const Vec3 v_enu = c_enu.transpose() * v_ecef;
    if (std::hypot(v_enu.x(), v_enu.y()) < min_speed) continue;

    // The fitted acceleration is a kernel average of the true one:
    // a_fit = int K(tau) a(tau), K(tau) = sum_k fit_k (t_k - tau) over fixes beyond tau.
    auto kernel = [&](double tau) {
      double kv = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double tk = taus[static_cast<std::size_t>(k)];
        if (tau >= 0.0 && tk > tau) kv += fit(2, k) * (tk - tau);
        if (tau < 0.0 && tk < tau) kv += fit(2, k) * (tau - tk);
      }
      return kv;
    };

    // Specific force under the same kernel, rotated into the body frame at the epoch via
    // gyro integration.
    std::size_t center = 0;
    for (std::size_t i = 0; i < imu.size(); ++i) {
      if (std::abs(imu[i].timestamp - tc) < std::abs(imu[center].timestamp - tc)) center = i;
    }
    Vec3 f_sum = Vec3::Zero();
    double w_sum = 0.0;
    auto accumulate = [&](std::size_t i, const Mat3& rel) {
      const double kv = kernel(imu[i].timestamp - tc);
      f_sum += kv * (rel * imu[i].specific_force);
      w_sum += kv;
    };
    Mat3 rel = Mat3::Identity();
    accumulate(center, rel);
    for (std::size_t i = center + 1; i < imu.size(); ++i) {
      if (imu[i].timestamp - tc > t_hi) break;
      const double dt = imu[i].timestamp - imu[i - 1].timestamp;
      rel = rel * so3_exp(0.5 * (imu[i].angular_rate + imu[i - 1].angular_rate) * dt);
      accumulate(i, rel);
    }
    rel = Mat3::Identity();
    for (std::size_t i = center; i-- > 0;) {
      if (imu[i].timestamp - tc < t_lo) break;
      const double dt = imu[i + 1].timestamp - imu[i].timestamp;
      rel = rel * so3_exp(-0.5 * (imu[i].angular_rate + imu[i + 1].angular_rate) * dt);
      accumulate(i, rel);
    }
    if (!(std::abs(w_sum) > 0.0)) continue;
    const Vec3 f_body = f_sum / w_sum;

    const Vec3 coriolis = 2.0 * earth.rotation_vector().cross(v_ecef);
    const Vec3 f_enu = c_enu.transpose() * (a_ecef - gravity_ecef(p_fit, earth) + coriolis);
    const double heading = std::atan2(v_enu.y(), v_enu.x());
    const Vec3 u = rot_z(heading).transpose() * f_enu;

    // f_body = Rx(roll)^T Ry(pitch)^T u: solve the pitch from the x component, then roll.
    const double rho = std::hypot(u.x(), u.z());
    const double gamma = std::atan2(u.z(), u.x());
    const double base = std::acos(std::clamp(f_body.x() / rho, -1.0, 1.0));
    double pitch = base - gamma;
    const double alt = -base - gamma;
    pitch = std::remainder(pitch, 2.0 * std::numbers::pi);
    const double alt_wrapped = std::remainder(alt, 2.0 * std::numbers::pi);
    if (std::abs(alt_wrapped) < std::abs(pitch)) {
      pitch = alt_wrapped;
    }
    const Vec3 w = rot_y(pitch).transpose() * u;
    const double roll = std::atan2(w.z(), w.y()) - std::atan2(f_body.z(), f_body.y());

    NavState out;
    out.timestamp = tc;
    out.position = p_fit;
    out.velocity = v_ecef;
    out.attitude = orthonormalize(c_enu * body_to_enu(heading, pitch,
                                                      std::remainder(roll, 2.0 * std::numbers::pi)));
    return out;
  }
  throw Error(ErrorCode::kInsufficientMotion, "horizontal speed never reached the threshold");
}

}  // namespace pogvins
