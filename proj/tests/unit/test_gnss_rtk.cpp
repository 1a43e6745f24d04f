#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "pogvins/earth.hpp"
#include "pogvins/errors.hpp"
#include "pogvins/gnss_rtk.hpp"
#include "pogvins/so3.hpp"
#include "test_helpers.hpp"

using namespace pogvins;
using pogvins::testing::random_rotation;
using pogvins::testing::random_vec3;

namespace {

constexpr double kLambda = 299792458.0 / 1575.42e6;

/// Rover and base on the ground with satellites at fixed azimuth/elevation.
struct Sky {
  Vec3 rover;
  Vec3 base;
  std::vector<SatId> ids;
  std::vector<Vec3> sats;
  std::vector<double> elevations;
  std::vector<long> n_rover;  // undifferenced integer ambiguities
  std::vector<long> n_base;

  static Sky make(int count, std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    Sky s;
    const GeodeticCoord o{30.5 * std::numbers::pi / 180.0, 114.4 * std::numbers::pi / 180.0, 25.0};
    s.rover = lla_to_ecef(o);
    const Mat3 c = enu_to_ecef_rotation(o);
    s.base = s.rover + c * Vec3(1500.0, -800.0, 3.0);
    std::uniform_int_distribution<long> amb(-200000, 200000);
    for (int k = 0; k < count; ++k) {
      const double az = 2.0 * std::numbers::pi * k / count + 0.3;
      const double el = (15.0 + 70.0 * k / std::max(1, count - 1)) * std::numbers::pi / 180.0;
      const Vec3 u(std::cos(el) * std::sin(az), std::cos(el) * std::cos(az), std::sin(el));
      s.ids.push_back(static_cast<SatId>(3 + 2 * k));
      s.sats.push_back(s.rover + c * u * 2.02e7);
      s.elevations.push_back(el);
      s.n_rover.push_back(amb(rng));
      s.n_base.push_back(amb(rng));
    }
    return s;
  }

  GnssEpoch epoch(const Vec3& antenna, const std::vector<long>& n) const {
    GnssEpoch e;
    e.timestamp = 10.0;
    for (std::size_t k = 0; k < sats.size(); ++k) {
      GnssObservation o;
      o.sat_id = ids[k];
      o.wavelength = kLambda;
      o.sat_position = sats[k];
      o.elevation = elevations[k];
      const double rho = (antenna - sats[k]).norm();
      o.pseudorange = rho;
      o.carrier_phase = rho / kLambda + static_cast<double>(n[k]);
      e.observations.push_back(o);
    }
    return e;
  }

  DdEpoch dd() const { return double_difference(epoch(rover, n_rover), epoch(base, n_base)); }

  std::size_t index_of(SatId id) const {
    return static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
  }

  long dd_integer(SatId sat, SatId ref) const {
    const std::size_t s = index_of(sat);
    const std::size_t k = index_of(ref);
    return (n_rover[s] - n_base[s]) - (n_rover[k] - n_base[k]);
  }
};

FilterState state_at(const Vec3& position, double sigma_pos = 1.0) {
  NavState nav;
  nav.position = position;
  MatX p = MatX::Identity(kImuErrorDim, kImuErrorDim) * 1e-4;
  p.block<3, 3>(kPos, kPos) = Mat3::Identity() * sigma_pos * sigma_pos;
  return make_filter_state(nav, p, 4);
}

RtkOptions options_for(const Sky& s) {
  RtkOptions o;
  o.base_position = s.base;
  return o;
}

/// Central difference with one Richardson step; ranges near 2e7 m need large steps.
template <class F>
auto richardson(F f, double eps) {
  using R = decltype(f(eps));
  const R d1 = (f(eps) - f(-eps)) / (2.0 * eps);
  const R d2 = (f(0.5 * eps) - f(-0.5 * eps)) / eps;
  return R((4.0 * d2 - d1) / 3.0);
}

double ils_cost(const VecX& a, const MatX& q_inv, const VecX& z) {
  const VecX d = a - z;
  return d.dot(q_inv * d);
}

}  // namespace

TEST(PredictRange, OriginToSatelliteOnAxis) {
  const RangePrediction r =
      predict_range(Vec3::Zero(), Mat3::Identity(), Vec3::Zero(), Vec3(2e7, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(r.range, 2e7);
}

TEST(PredictRange, CollinearLeverArmShortensRangeByOneMeter) {
  const Vec3 sat(2e7, 0.0, 0.0);
  const Vec3 r0(1000.0, 0.0, 0.0);
  const double a = predict_range(r0, Mat3::Identity(), Vec3::Zero(), sat).range;
  const double b = predict_range(r0, Mat3::Identity(), Vec3(1.0, 0.0, 0.0), sat).range;
  EXPECT_DOUBLE_EQ(a - b, 1.0);
}

TEST(PredictRange, JacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    // Ranges of a few km keep the differences clear of double round-off; the formula has no
    // scale dependence.
    const Vec3 r = random_vec3(rng, 100.0);
    const Mat3 rot = random_rotation(rng);
    const Vec3 lever = random_vec3(rng, 1.5);
    const Vec3 sat = random_vec3(rng, 5e3);
    const RangePrediction p = predict_range(r, rot, lever, sat);
    // The correction removes dr from the position and rotates the attitude by Exp(phi).
    auto h = [&](const Eigen::Matrix<double, 6, 1>& d) {
      return predict_range(r - d.head<3>(), so3_exp(d.tail<3>()) * rot, lever, sat).range;
    };
    for (int k = 0; k < 6; ++k) {
      const double fd = richardson(
          [&](double e) {
            Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
            d(k) = e;
            return h(d);
          },
          1e-3);
      EXPECT_NEAR(fd, p.jacobian(k), 1e-6 * std::max(1.0, std::abs(p.jacobian(k)))) << k;
    }
  }
}

TEST(DoubleDifference, ReferenceIsHighestElevation) {
  const Sky s = Sky::make(6);
  const DdEpoch dd = s.dd();
  EXPECT_EQ(dd.ref_sat_id, s.ids.back());
  EXPECT_EQ(dd.obs.size(), 5u);
  for (const auto& o : dd.obs) EXPECT_NE(o.sat_id, o.ref_sat_id);
}

TEST(DoubleDifference, ReceiverClockCancelsBitExactly) {
  // Offsets on the ulp grid of the stored values, so adding them is itself exact.
  const Sky s = Sky::make(7);
  const GnssEpoch base = s.epoch(s.base, s.n_base);
  const GnssEpoch rover = s.epoch(s.rover, s.n_rover);
  const DdEpoch a = double_difference(rover, base);
  for (double clock : {1.0, -37.25, 1024.5, 0.0078125, -299792.0}) {
    GnssEpoch shifted = rover;
    for (auto& o : shifted.observations) {
      o.pseudorange += clock;
      o.carrier_phase += 2.0 * clock;
    }
    const DdEpoch b = double_difference(shifted, base);
    ASSERT_EQ(a.obs.size(), b.obs.size());
    for (std::size_t k = 0; k < a.obs.size(); ++k) {
      EXPECT_EQ(a.obs[k].dd_pseudorange, b.obs[k].dd_pseudorange) << clock;
      EXPECT_EQ(a.obs[k].dd_phase, b.obs[k].dd_phase) << clock;
    }
  }
}

TEST(DoubleDifference, SatelliteClocksCancel) {
  const Sky s = Sky::make(6);
  GnssEpoch r = s.epoch(s.rover, s.n_rover);
  GnssEpoch b = s.epoch(s.base, s.n_base);
  const DdEpoch a = double_difference(r, b);
  for (std::size_t k = 0; k < r.observations.size(); ++k) {
    const double c = 12.5 * static_cast<double>(k + 1);
    r.observations[k].pseudorange += c;
    b.observations[k].pseudorange += c;
    r.observations[k].carrier_phase += c / kLambda;
    b.observations[k].carrier_phase += c / kLambda;
  }
  const DdEpoch d = double_difference(r, b);
  for (std::size_t k = 0; k < a.obs.size(); ++k) {
    EXPECT_NEAR(a.obs[k].dd_pseudorange, d.obs[k].dd_pseudorange, 1e-7);
    EXPECT_NEAR(a.obs[k].dd_phase, d.obs[k].dd_phase, 1e-7);
  }
}

TEST(DoubleDifference, ResidualsAtTruthAreZeroAndIntegerPhase) {
  const Sky s = Sky::make(8);
  const DdEpoch dd = s.dd();
  for (const DdObservation& o : dd.obs) {
    const double geom = ((s.rover - o.sat_position).norm() - (s.rover - o.ref_sat_position).norm()) -
                        ((s.base - o.sat_position).norm() - (s.base - o.ref_sat_position).norm());
    EXPECT_NEAR(o.dd_pseudorange - geom, 0.0, 1e-9 * 1e3);
    const double cycles = (o.dd_phase - geom) / kLambda;
    EXPECT_NEAR(cycles, static_cast<double>(s.dd_integer(o.sat_id, o.ref_sat_id)), 1e-3);
  }
}

TEST(DoubleDifference, CovarianceStructure) {
  const Sky s = Sky::make(5);
  const DdEpoch dd = s.dd();
  const GnssNoise n;
  const auto sd_var = [&](double el, double sigma) {
    const double v = sigma / std::sin(el);
    return 2.0 * v * v;  // rover and base see the same elevation here
  };
  const double ref_var = sd_var(s.elevations.back(), n.code_sigma);
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double expect =
          ref_var + (i == j ? sd_var(s.elevations[static_cast<std::size_t>(i)], n.code_sigma) : 0.0);
      EXPECT_NEAR(dd.code_covariance(i, j), expect, 1e-12);
    }
  }
}

TEST(DoubleDifference, FewerThanTwoCommonThrows) {
  const Sky s = Sky::make(4);
  GnssEpoch r = s.epoch(s.rover, s.n_rover);
  GnssEpoch b = s.epoch(s.base, s.n_base);
  b.observations.resize(1);
  try {
    double_difference(r, b);
    FAIL() << "expected InsufficientSatellites";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientSatellites);
  }
}

TEST(GnssObservation, ValidateRanges) {
  GnssObservation o;
  o.pseudorange = 2.2e7;
  o.wavelength = kLambda;
  EXPECT_NO_THROW(o.validate());
  o.wavelength = 0.5;
  EXPECT_THROW(o.validate(), Error);
  o.wavelength = kLambda;
  o.pseudorange = 100.0;
  EXPECT_THROW(o.validate(), Error);
}

TEST(ManageAmbiguities, FiveSatellitesGiveFourStates) {
  const Sky s = Sky::make(5);
  const DdEpoch dd = s.dd();
  FilterState fs = state_at(s.rover);
  AmbiguitySet amb;
  const AmbiguityChanges ch = manage_ambiguities(amb, dd, fs);
  EXPECT_EQ(ch.added, 4);
  EXPECT_EQ(fs.ambiguities.size(), 4);
  EXPECT_EQ(fs.dim(), fs.ambiguity_offset() + 4);
  EXPECT_NO_THROW(amb.validate(fs));
  for (const auto& [key, e] : amb.entries) {
    // Noise-free phase minus code lands on the integer.
    EXPECT_NEAR(e.float_value, static_cast<double>(s.dd_integer(key.first, key.second)), 1e-3);
  }
  // Second identical epoch changes nothing.
  const AmbiguityChanges again = manage_ambiguities(amb, dd, fs);
  EXPECT_EQ(again.added, 0);
  EXPECT_EQ(again.removed, 0);
}

TEST(ManageAmbiguities, SatelliteLossRemovesStateAndBlock) {
  const Sky s = Sky::make(6);
  FilterState fs = state_at(s.rover);
  AmbiguitySet amb;
  manage_ambiguities(amb, s.dd(), fs);
  // Tag covariance entries so the surviving block can be traced.
  const Eigen::Index off = fs.ambiguity_offset();
  for (Eigen::Index k = 0; k < 5; ++k) fs.covariance(off + k, off + k) = 1.0 + k;

  GnssEpoch r = s.epoch(s.rover, s.n_rover);
  GnssEpoch b = s.epoch(s.base, s.n_base);
  const SatId lost = s.ids[1];
  r.observations.erase(r.observations.begin() + 1);
  b.observations.erase(b.observations.begin() + 1);
  const Eigen::Index lost_index = amb.entries.at({lost, s.ids.back()}).state_index;
  const AmbiguityChanges ch = manage_ambiguities(amb, double_difference(r, b), fs);
  EXPECT_EQ(ch.removed, 1);
  EXPECT_EQ(fs.ambiguities.size(), 4);
  EXPECT_EQ(fs.covariance.rows(), off + 4);
  EXPECT_EQ(amb.entries.count({lost, s.ids.back()}), 0u);
  EXPECT_NO_THROW(amb.validate(fs));
  std::vector<double> diag;
  for (Eigen::Index k = 0; k < 4; ++k) diag.push_back(fs.covariance(off + k, off + k));
  std::vector<double> expect;
  for (Eigen::Index k = 0; k < 5; ++k) {
    if (k != lost_index) expect.push_back(1.0 + k);
  }
  EXPECT_EQ(diag, expect);
}

TEST(ManageAmbiguities, ReferenceSwitchPreservesIntegers) {
  // Old reference = highest satellite; lower it so another one takes over.
  Sky s = Sky::make(6);
  FilterState fs = state_at(s.rover);
  AmbiguitySet amb;
  manage_ambiguities(amb, s.dd(), fs);
  const SatId old_ref = s.ids.back();
  s.elevations[2] = 89.0 * std::numbers::pi / 180.0;
  const DdEpoch dd = s.dd();
  const SatId new_ref = s.ids[2];
  ASSERT_EQ(dd.ref_sat_id, new_ref);
  const AmbiguityChanges ch = manage_ambiguities(amb, dd, fs);
  EXPECT_TRUE(ch.reference_switched);
  EXPECT_EQ(fs.ambiguities.size(), 5);
  for (const auto& [key, e] : amb.entries) {
    EXPECT_EQ(key.second, new_ref);
    EXPECT_NEAR(e.float_value, static_cast<double>(s.dd_integer(key.first, new_ref)), 1e-3)
        << key.first;
  }
  EXPECT_EQ(amb.entries.count({old_ref, new_ref}), 1u);
}

TEST(ReferenceSwitch, AlgebraicIdentityOnRandomIntegers) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<long> draw(-1000000, 1000000);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + trial % 9;
    // Undifferenced integers per satellite; satellite 0 is the old reference k.
    std::vector<long> n(static_cast<std::size_t>(m + 1));
    for (long& v : n) v = draw(rng);
    VecX old_dd(m);
    for (int s = 0; s < m; ++s) old_dd(s) = static_cast<double>(n[s + 1] - n[0]);
    const int pivot = trial % m;  // new reference is satellite pivot+1
    const long new_ref = n[static_cast<std::size_t>(pivot + 1)];
    const MatX t = reference_switch_matrix(m, pivot);
    EXPECT_NEAR(std::abs(t.determinant()), 1.0, 1e-12);
    const VecX new_dd = t * old_dd;
    for (int s = 0; s < m; ++s) {
      const long sat = s == pivot ? n[0] : n[static_cast<std::size_t>(s + 1)];
      EXPECT_EQ(new_dd(s), static_cast<double>(sat - new_ref));
    }
  }
}

TEST(Igg3, KnownValues) {
  EXPECT_DOUBLE_EQ(igg3_weight(0.5, 1.5, 3.0), 1.0);
  EXPECT_DOUBLE_EQ(igg3_weight(-1.5, 1.5, 3.0), 1.0);
  EXPECT_DOUBLE_EQ(igg3_weight(4.0, 1.5, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(igg3_weight(3.0, 1.5, 3.0), 0.0);
  EXPECT_NEAR(igg3_weight(2.0, 1.5, 3.0), (1.5 / 2.0) * std::pow(1.0 / 1.5, 2), 1e-15);
  EXPECT_NEAR(igg3_weight(-2.0), 1.0 / 3.0, 1e-15);
  EXPECT_THROW(igg3_weight(1.0, 3.0, 1.5), Error);
}

TEST(Igg3, MonotoneInMagnitude) {
  double last = 1.0;
  for (double v = 0.0; v < 4.0; v += 0.01) {
    const double w = igg3_weight(v);
    EXPECT_LE(w, last + 1e-15);
    EXPECT_GE(w, 0.0);
    last = w;
  }
}

TEST(LinearizeDd, JacobianMatchesFiniteDifferences) {
  const Sky s = Sky::make(6);
  std::mt19937_64 rng(3);
  FilterState fs = state_at(s.rover + Vec3(0.4, -0.2, 0.3));
  fs.nav.attitude = random_rotation(rng);
  AmbiguitySet amb;
  const DdEpoch dd = s.dd();
  manage_ambiguities(amb, dd, fs);
  RtkOptions opts = options_for(s);
  opts.lever_arm = Vec3(0.2, 0.0, 1.2);
  const DdLinearization lin = linearize_dd(fs, dd, amb, opts);
  for (Eigen::Index k = 0; k < fs.dim(); ++k) {
    auto eval = [&](double e, bool phase) {
      FilterState a = fs;
      VecX d = VecX::Zero(fs.dim());
      d(k) = e;
      apply_correction(a, d);
      const DdLinearization l = linearize_dd(a, dd, amb, opts);
      return VecX(phase ? l.phase_residual : l.code_residual);
    };
    const bool is_att = k >= kAtt && k < kAtt + 3;
    const double eps = is_att ? 0.02 : 1.0;
    const VecX fd_code = richardson([&](double e) { return eval(e, false); }, eps);
    const VecX fd_phase = richardson([&](double e) { return eval(e, true); }, eps);
    EXPECT_LT((fd_code - lin.code_jacobian.col(k)).norm(), 1e-5) << k;
    EXPECT_LT((fd_phase - lin.phase_jacobian.col(k)).norm(), 1e-5) << k;
  }
}

TEST(RtkUpdate, NoiseFreeAtTruthGivesZeroCorrection) {
  const Sky s = Sky::make(7);
  FilterState fs = state_at(s.rover);
  AmbiguitySet amb;
  const DdEpoch dd = s.dd();
  manage_ambiguities(amb, dd, fs);
  // Put the ambiguities exactly on their integers.
  for (const auto& [key, e] : amb.entries) {
    fs.ambiguities(e.state_index) = static_cast<double>(s.dd_integer(key.first, key.second));
  }
  const RtkReport r = rtk_update(fs, dd, amb, options_for(s));
  EXPECT_EQ(r.status, UpdateStatus::kApplied);
  EXPECT_LT(r.correction.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RtkUpdate, ConvergesFromOffsetStart) {
  const Sky s = Sky::make(8);
  FilterState fs = state_at(s.rover + Vec3(2.0, -1.0, 1.5), 100.0);
  AmbiguitySet amb;
  const DdEpoch dd = s.dd();
  manage_ambiguities(amb, dd, fs);
  RtkOptions opts = options_for(s);
  opts.use_phase = false;
  const RtkReport r = rtk_update(fs, dd, amb, opts);
  EXPECT_EQ(r.status, UpdateStatus::kApplied);
  EXPECT_LT((fs.nav.position - s.rover).norm(), 0.1);
}

TEST(RtkUpdate, NlosOutlierIsRejected) {
  // Noisy code with +20 m on one satellite against the same noise without it.
  const Sky s = Sky::make(7);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 0.3);
  GnssEpoch r = s.epoch(s.rover, s.n_rover);
  for (auto& o : r.observations) o.pseudorange += g(rng);
  const GnssEpoch b = s.epoch(s.base, s.n_base);
  const DdEpoch clean = double_difference(r, b);
  GnssEpoch rb = r;
  rb.observations[2].pseudorange += 20.0;
  const DdEpoch bad = double_difference(rb, b);
  ASSERT_EQ(clean.obs.size(), 6u);

  RtkOptions opts = options_for(s);
  opts.use_phase = false;
  const Vec3 start = s.rover + Vec3(0.5, 0.5, -0.5);
  AmbiguitySet amb;
  FilterState a = state_at(start);
  FilterState c = state_at(start);
  const RtkReport ra = rtk_update(a, clean, amb, opts);
  const RtkReport rc = rtk_update(c, bad, amb, opts);
  ASSERT_EQ(ra.status, UpdateStatus::kApplied);
  ASSERT_EQ(rc.status, UpdateStatus::kApplied);
  std::size_t bad_row = 0;
  for (std::size_t k = 0; k < bad.obs.size(); ++k) {
    if (bad.obs[k].sat_id == s.ids[2]) bad_row = k;
  }
  EXPECT_EQ(rc.code_weights[bad_row], 0.0);
  const double clean_step = ra.correction.head<3>().norm();
  const double bad_step = rc.correction.head<3>().norm();
  EXPECT_LT(bad_step, 2.0 * clean_step);
}

TEST(RtkUpdate, ThreeSatellitesStillShrinkPositionCovariance) {
  const Sky s = Sky::make(3);
  FilterState fs = state_at(s.rover, 2.0);
  AmbiguitySet amb;
  const DdEpoch dd = s.dd();
  ASSERT_EQ(dd.obs.size(), 2u);
  manage_ambiguities(amb, dd, fs);
  const double before = fs.covariance.block<3, 3>(kPos, kPos).trace();
  const RtkReport r = rtk_update(fs, dd, amb, options_for(s));
  EXPECT_EQ(r.status, UpdateStatus::kApplied);
  const double after = fs.covariance.block<3, 3>(kPos, kPos).trace();
  EXPECT_LT(after, before);
}

TEST(RtkUpdate, AllRowsRejectedLeavesStateUnchanged) {
  const Sky s = Sky::make(5);
  FilterState fs = state_at(s.rover, 0.01);
  AmbiguitySet amb;
  GnssEpoch r = s.epoch(s.rover, s.n_rover);
  for (std::size_t k = 0; k + 1 < r.observations.size(); ++k) {
    r.observations[k].pseudorange += 500.0 * static_cast<double>(k + 1);
  }
  const DdEpoch dd = double_difference(r, s.epoch(s.base, s.n_base));
  RtkOptions opts = options_for(s);
  opts.use_phase = false;
  const FilterState before = fs;
  const RtkReport rep = rtk_update(fs, dd, amb, opts);
  EXPECT_EQ(rep.status, UpdateStatus::kAllObservationsRejected);
  EXPECT_TRUE(fs.nav.position == before.nav.position);
  EXPECT_TRUE(fs.covariance == before.covariance);
}

TEST(Lambda, OneDimensionalRounds) {
  VecX a(1);
  a << 3.2;
  MatX q(1, 1);
  q << 0.01;
  const LambdaResult r = lambda_fix(a, q);
  ASSERT_EQ(r.fixed.size(), 1u);
  EXPECT_EQ(r.fixed[0], 3);
  EXPECT_NEAR(r.ratio, 0.64 / 0.04, 1e-9);
  EXPECT_TRUE(r.accepted);
}

TEST(Lambda, DiagonalIsComponentwiseRounding) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> v(0.001, 0.2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 8;
    VecX a(n);
    VecX d(n);
    for (int k = 0; k < n; ++k) {
      a(k) = u(rng);
      d(k) = v(rng);
    }
    const LambdaResult r = lambda_fix(a, d.asDiagonal().toDenseMatrix());
    for (int k = 0; k < n; ++k) EXPECT_EQ(r.fixed[static_cast<std::size_t>(k)], std::lround(a(k)));
  }
}

TEST(Lambda, MatchesBruteForceOnCorrelatedFourDim) {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  int checked = 0;
  while (checked < 60) {
    MatX a = MatX::NullaryExpr(4, 4, [&] { return g(rng); });
    Eigen::HouseholderQR<MatX> qr(a);
    const MatX qm = qr.householderQ();
    VecX ev(4);
    ev << 1.0, std::exp(std::log(100.0) * 0.3), std::exp(std::log(100.0) * 0.7), 100.0;
    const double scale = 0.002 + 0.01 * std::abs(g(rng));
    const MatX q = scale * qm * ev.asDiagonal() * qm.transpose();
    VecX f(4);
    for (int k = 0; k < 4; ++k) f(k) = u(rng);

    const LambdaResult r = lambda_fix(f, q);
    const MatX q_inv = q.inverse();
    // Brute force over the +-5 box around the rounded float.
    VecX best(4);
    double best_cost = std::numeric_limits<double>::infinity();
    VecX z(4);
    for (int i = -5; i <= 5; ++i) {
      for (int j = -5; j <= 5; ++j) {
        for (int k = -5; k <= 5; ++k) {
          for (int l = -5; l <= 5; ++l) {
            z << std::round(f(0)) + i, std::round(f(1)) + j, std::round(f(2)) + k,
                std::round(f(3)) + l;
            const double c = ils_cost(f, q_inv, z);
            if (c < best_cost) {
              best_cost = c;
              best = z;
            }
          }
        }
      }
    }
    for (int k = 0; k < 4; ++k) {
      EXPECT_EQ(static_cast<double>(r.fixed[static_cast<std::size_t>(k)]), best(k)) << checked;
    }
    ++checked;
  }
}

TEST(Lambda, ZTransformIsUnimodular) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 7;
    const MatX a = MatX::NullaryExpr(n, n, [&] { return g(rng); });
    const MatX q = 0.01 * (a * a.transpose() + 0.05 * MatX::Identity(n, n));
    const VecX f = VecX::NullaryExpr(n, [&] { return 10.0 * g(rng); });
    const LambdaResult r = lambda_fix(f, q);
    ASSERT_EQ(r.z_transform.rows(), n);
    EXPECT_NEAR(std::abs(r.z_transform.determinant()), 1.0, 1e-9);
    EXPECT_TRUE((r.z_transform.array() == r.z_transform.array().round()).all());
  }
}

TEST(Lambda, NotPositiveDefiniteThrows) {
  VecX a(2);
  a << 1.0, 2.0;
  MatX q(2, 2);
  q << 1.0, 2.0, 2.0, 1.0;
  try {
    lambda_fix(a, q);
    FAIL() << "expected NotPositiveDefinite";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotPositiveDefinite);
  }
}

TEST(Lambda, AmbiguousFloatFailsRatio) {
  VecX a(1);
  a << 3.5;
  MatX q(1, 1);
  q << 0.1;
  const LambdaResult r = lambda_fix(a, q);
  EXPECT_FALSE(r.accepted);
  EXPECT_LT(r.ratio, 3.0);
}

TEST(ResolveAmbiguities, ConditionalUpdateNeverGrowsDiagonal) {
  const Sky s = Sky::make(7);
  FilterState fs = state_at(s.rover + Vec3(0.01, -0.02, 0.01), 0.5);
  AmbiguitySet amb;
  const DdEpoch dd = s.dd();
  manage_ambiguities(amb, dd, fs);
  RtkOptions opts = options_for(s);
  rtk_update(fs, dd, amb, opts);
  const VecX before = fs.covariance.diagonal();
  const FixReport fix = resolve_ambiguities(fs, amb);
  ASSERT_TRUE(fix.accepted) << fix.ratio;
  const VecX after = fs.covariance.diagonal();
  for (Eigen::Index k = 0; k < after.size(); ++k) EXPECT_LE(after(k), before(k) + 1e-15) << k;
  for (const auto& [key, e] : amb.entries) {
    ASSERT_TRUE(e.fixed_value.has_value());
    EXPECT_EQ(*e.fixed_value, s.dd_integer(key.first, key.second));
  }
  // Phase residuals at the fixed solution.
  const DdLinearization lin = linearize_dd(fs, dd, amb, opts);
  EXPECT_LT(lin.phase_residual.cwiseAbs().maxCoeff(), 0.1 * kLambda);
}

TEST(SolveDdPosition, RecoversRoverFromCode) {
  const Sky s = Sky::make(6);
  const Vec3 p = solve_dd_position(s.dd(), s.base, s.rover + Vec3(50.0, -30.0, 20.0));
  EXPECT_LT((p - s.rover).norm(), 1e-4);
}
