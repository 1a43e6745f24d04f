#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

#include "pogvins/errors.hpp"
#include "pogvins/ins.hpp"
#include "pogvins/so3.hpp"

using namespace pogvins;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

NavState level_state_at(const GeodeticCoord& g, double heading_enu) {
  NavState s;
  s.position = lla_to_ecef(g);
  s.attitude = enu_to_ecef_rotation(g) * body_to_enu(heading_enu, 0.0, 0.0);
  return s;
}

/// ECEF mechanization ODE with constant body inputs.
struct Deriv {
  Vec3 dr, dv;
  Mat3 dR;
};

Deriv ode(const Vec3& v, const Vec3& r, const Mat3& R, const Vec3& w, const Vec3& f,
          const MechanizationOptions& o) {
  const Vec3 wie = o.earth_rotation ? o.earth.rotation_vector() : Vec3::Zero();
  const Vec3 g = o.gravity ? gravity_ecef(r, o.earth) : Vec3::Zero();
  return {v, R * f + g - 2.0 * wie.cross(v), R * skew(w) - skew(wie) * R};
}

/// Classical RK4 on (r, v, R) with re-orthonormalization after every step.
NavState rk4(NavState s, const Vec3& w, const Vec3& f, double dt, int steps,
             const MechanizationOptions& o) {
  for (int k = 0; k < steps; ++k) {
    const Deriv k1 = ode(s.velocity, s.position, s.attitude, w, f, o);
    const Deriv k2 = ode(s.velocity + 0.5 * dt * k1.dv, s.position + 0.5 * dt * k1.dr,
                         s.attitude + 0.5 * dt * k1.dR, w, f, o);
    const Deriv k3 = ode(s.velocity + 0.5 * dt * k2.dv, s.position + 0.5 * dt * k2.dr,
                         s.attitude + 0.5 * dt * k2.dR, w, f, o);
    const Deriv k4 = ode(s.velocity + dt * k3.dv, s.position + dt * k3.dr,
                         s.attitude + dt * k3.dR, w, f, o);
    s.position += dt / 6.0 * (k1.dr + 2 * k2.dr + 2 * k3.dr + k4.dr);
    s.velocity += dt / 6.0 * (k1.dv + 2 * k2.dv + 2 * k3.dv + k4.dv);
    s.attitude = orthonormalize(s.attitude + dt / 6.0 * (k1.dR + 2 * k2.dR + 2 * k3.dR + k4.dR));
    s.timestamp += dt;
  }
  return s;
}

}  // namespace

TEST(Mechanization, StaticEquilibriumWithoutEarthRate) {
  MechanizationOptions o;
  o.earth_rotation = false;
  const NavState s = level_state_at({0.6, 2.0, 30.0}, 0.4);
  ImuSample imu;
  imu.timestamp = 0.005;
  imu.specific_force = -s.attitude.transpose() * gravity_ecef(s.position);
  const NavState out = propagate_nav(s, imu, 0.005, o);
  EXPECT_LT((out.position - s.position).norm(), 1e-12 * s.position.norm());
  EXPECT_LT(out.velocity.norm(), 1e-12);
  EXPECT_LT((out.attitude - s.attitude).norm(), 1e-12);
}

TEST(Mechanization, ConstantVelocityWithoutForces) {
  MechanizationOptions o;
  o.earth_rotation = false;
  o.gravity = false;
  NavState s;
  s.velocity = Vec3(1, 0, 0);
  ImuSample imu;
  imu.timestamp = 0.01;
  const NavState out = propagate_nav(s, imu, 0.01, o);
  EXPECT_NEAR(out.position.x(), 0.01, 1e-15);
  EXPECT_EQ(out.position.y(), 0.0);
  EXPECT_EQ(out.position.z(), 0.0);
}

TEST(Mechanization, RejectsNonMonotonicTime) {
  NavState s;
  s.timestamp = 1.0;
  ImuSample imu;
  imu.timestamp = 1.0;
  try {
    propagate_nav(s, imu, 0.005);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonMonotonicTime);
  }
}

TEST(Mechanization, ConstantTurnMatchesRk4Oracle) {
  const MechanizationOptions o;
  NavState s = level_state_at({0.53, 1.99, 20.0}, 0.3);
  s.velocity = s.attitude * Vec3(10.0, 0.0, 0.0);
  const Vec3 w(0.0, 0.0, 0.2);
  // Centripetal force for the turn plus gravity support.
  const Vec3 f = Vec3(0.0, 2.0, 0.0) - s.attitude.transpose() * gravity_ecef(s.position);
  const NavState oracle = rk4(s, w, f, 1.0 / 2000.0, 20000, o);
  NavState x = s;
  for (int k = 1; k <= 2000; ++k) {
    ImuSample imu;
    imu.timestamp = k / 200.0;
    imu.angular_rate = w;
    imu.specific_force = f;
    x = propagate_nav(x, imu, 1.0 / 200.0, o);
  }
  EXPECT_LT((x.position - oracle.position).norm(), 1e-3);
  EXPECT_LT(rotation_angle_between(x.attitude, oracle.attitude), 1e-5);
}

TEST(Mechanization, AttitudeStaysOrthonormal) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.3);
  NavState s = level_state_at({0.5, 0.5, 0.0}, 0.0);
  ImuSample prev;
  for (int k = 1; k <= 100000; ++k) {
    ImuSample imu;
    imu.timestamp = k / 200.0;
    imu.angular_rate = Vec3(n(rng), n(rng), n(rng));
    imu.specific_force = Vec3(n(rng), n(rng), 9.8 + n(rng));
    s = propagate_nav(s, prev, imu);
    prev = imu;
  }
  EXPECT_LT((s.attitude.transpose() * s.attitude - Mat3::Identity()).norm(), 1e-9);
}

TEST(ErrorModel, BlockStructure) {
  NavState s = level_state_at({0.5, 1.0, 0.0}, 0.7);
  ImuSample imu;
  imu.specific_force = Vec3(0.3, -0.2, 9.8);
  const ErrorStateModel m = error_state_matrices(s, imu);
  EXPECT_TRUE((m.F.block<3, 3>(kPos, kVel) == Mat3::Identity()));
  const Mat3 fx = m.F.block<3, 3>(kVel, kAtt);
  EXPECT_EQ(fx + fx.transpose(), Mat3::Zero());
  EXPECT_EQ(fx.diagonal(), Vec3::Zero());
  EXPECT_TRUE(m.F.bottomRows<6>().isZero(0.0));
  EXPECT_TRUE((m.F.block<3, 3>(kVel, kBa) == s.attitude));
  EXPECT_TRUE((m.F.block<3, 3>(kAtt, kBg) == -s.attitude));
}

TEST(ErrorModel, MatchesNonlinearPropagationOverTenthSecond) {
  const MechanizationOptions o;
  NavState nominal = level_state_at({0.53, 1.99, 20.0}, 0.3);
  nominal.velocity = nominal.attitude * Vec3(8.0, 0.5, 0.0);
  std::vector<ImuSample> imu;
  for (int k = 0; k <= 20; ++k) {
    ImuSample m;
    m.timestamp = k / 200.0;
    m.angular_rate = Vec3(0.01, -0.02, 0.15 + 0.01 * k);
    m.specific_force = Vec3(0.4, 1.2, 0.0) - nominal.attitude.transpose() * gravity_ecef(nominal.position);
    imu.push_back(m);
  }
  const double mags[5] = {0.1, 0.1, 1e-3, 1e-2, 1e-3};
  for (int k = 0; k < 15; ++k) {
    Eigen::Matrix<double, 15, 1> d = Eigen::Matrix<double, 15, 1>::Zero();
    d(k) = mags[k / 3];
    NavState est = nominal;
    apply_imu_correction(est, -d);
    const Eigen::Matrix<double, 15, 1> e0 = nav_error(est, nominal);

    NavState a = nominal;
    NavState b = est;
    Mat15 phi = Mat15::Identity();
    for (int i = 1; i <= 20; ++i) {
      const ErrorStateModel m = error_state_matrices(b, imu[i - 1], o);
      phi = (Mat15::Identity() + m.F * (1.0 / 200.0)) * phi;
      a = propagate_nav(a, imu[i - 1], imu[i], o);
      b = propagate_nav(b, imu[i - 1], imu[i], o);
    }
    const Eigen::Matrix<double, 15, 1> e1 = nav_error(b, a);
    const Eigen::Matrix<double, 15, 1> pred = phi * e0;
    EXPECT_LT((e1 - pred).norm(), 0.01 * e1.norm()) << "component " << k;
  }
}

TEST(Covariance, ZeroModelLeavesCovarianceUnchanged) {
  std::mt19937_64 rng(4);
  const MatX a = MatX::Random(27, 27);
  MatX p = a * a.transpose();
  const ErrorStateModel m;
  const MatX out = propagate_covariance(p, m, NoiseParams::zero(), 0.005);
  EXPECT_LT((out - p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariance, StaysPsdAndPositionVarianceGrows) {
  NavState s = level_state_at({0.5, 1.0, 0.0}, 0.2);
  MatX p = MatX::Identity(15, 15) * 1e-4;
  ImuSample imu;
  imu.specific_force = -s.attitude.transpose() * gravity_ecef(s.position);
  const NoiseParams noise;
  Vec3 last = p.diagonal().head<3>();
  for (int k = 0; k < 10000; ++k) {
    propagate_covariance_inplace(p, error_state_matrices(s, imu), noise, 0.005);
    const Vec3 now = p.diagonal().head<3>();
    EXPECT_TRUE((now.array() >= last.array()).all()) << "step " << k;
    last = now;
  }
  Eigen::SelfAdjointEigenSolver<MatX> es(p);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * es.eigenvalues().maxCoeff());
  EXPECT_EQ(p, p.transpose());
}

TEST(Covariance, NegativeDiagonalIsRejected) {
  MatX p = MatX::Identity(15, 15);
  p(4, 4) = -1.0;
  try {
    propagate_covariance_inplace(p, ErrorStateModel{}, NoiseParams::zero(), 0.005);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCovarianceNotPsd);
  }
}

TEST(CoarseAlign, LevelMotionDueEast) {
  const GeodeticCoord g{0.53, 1.99, 20.0};
  const Mat3 c = enu_to_ecef_rotation(g);
  const Vec3 p0 = lla_to_ecef(g);
  const Vec3 v = c * Vec3(5.0, 0.0, 0.0);
  const Mat3 r = c;  // body x east, y north, z up
  const EarthParams e;
  std::vector<PositionFix> fixes;
  for (int k = 0; k <= 50; ++k) fixes.push_back({0.2 * k, p0 + v * (0.2 * k)});
  std::vector<ImuSample> imu;
  for (int k = 0; k <= 2000; ++k) {
    const double t = k / 200.0;
    const Vec3 pos = p0 + v * t;
    ImuSample m;
    m.timestamp = t;
    m.angular_rate = r.transpose() * e.rotation_vector();
    m.specific_force = r.transpose() * (-gravity_ecef(pos) + 2.0 * e.rotation_vector().cross(v));
    imu.push_back(m);
  }
  // Short window: the local east axis turns by 1.6e-7 rad per metre travelled.
  const NavState s = coarse_align(fixes, imu, e, 2.0, 1.0);
  const Attitude a = attitude_in_local_frame(s.attitude, s.position);
  EXPECT_NEAR(a.yaw, 90.0 * kDeg, 1e-6);
  EXPECT_NEAR(a.roll, 0.0, 1e-6);
  EXPECT_NEAR(a.pitch, 0.0, 1e-6);
  EXPECT_LT((s.velocity - v).norm(), 1e-6);
}

TEST(CoarseAlign, StationaryBufferHasInsufficientMotion) {
  const GeodeticCoord g{0.53, 1.99, 20.0};
  const Vec3 p0 = lla_to_ecef(g);
  std::vector<PositionFix> fixes;
  for (int k = 0; k <= 10; ++k) fixes.push_back({static_cast<double>(k), p0});
  std::vector<ImuSample> imu;
  for (int k = 0; k <= 2000; ++k) {
    ImuSample m;
    m.timestamp = k / 200.0;
    m.specific_force = Vec3(0, 0, 9.8);
    imu.push_back(m);
  }
  try {
    coarse_align(fixes, imu);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::kInsufficientMotion);
  }
}

TEST(NavError, CorrectionInvertsError) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 0.01);
  NavState truth = level_state_at({0.5, 1.0, 0.0}, 0.2);
  Eigen::Matrix<double, 15, 1> d;
  for (int k = 0; k < 15; ++k) d(k) = n(rng);
  NavState est = truth;
  apply_imu_correction(est, -d);
  NavState back = est;
  apply_imu_correction(back, nav_error(est, truth));
  EXPECT_LT((back.position - truth.position).norm(), 1e-9);
  EXPECT_LT(rotation_angle_between(back.attitude, truth.attitude), 1e-12);
}
