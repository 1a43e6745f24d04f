#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pogvins/errors.hpp"
#include "pogvins/gnss_rtk.hpp"
#include "pogvins/sim.hpp"
#include "pogvins/so3.hpp"

using namespace pogvins;

namespace {

const ScenarioDataset& noise_free_60s() {
  static const ScenarioDataset ds = [] {
    ScenarioConfig c;
    c.duration = 60.0;
    return generate(c.noise_free());
  }();
  return ds;
}

CameraPoseMap truth_camera_poses(const ScenarioDataset& ds, int first, int count) {
  const int per = ds.config.imu_ticks_per_frame();
  CameraPoseMap poses;
  for (int f = first; f < first + count; ++f) {
    const NavState& t = ds.truth[static_cast<std::size_t>(f * per)];
    poses[f] = body_pose_to_camera(t.attitude, t.position, ds.config.camera);
  }
  return poses;
}

bool same_epochs(const std::vector<GnssEpoch>& a, const std::vector<GnssEpoch>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].timestamp != b[k].timestamp) return false;
    if (a[k].observations.size() != b[k].observations.size()) return false;
    for (std::size_t s = 0; s < a[k].observations.size(); ++s) {
      const GnssObservation& x = a[k].observations[s];
      const GnssObservation& y = b[k].observations[s];
      if (x.sat_id != y.sat_id || x.pseudorange != y.pseudorange ||
          x.carrier_phase != y.carrier_phase || x.sat_position != y.sat_position) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST(Generate, IdenticalSeedsAreBitIdentical) {
  ScenarioConfig c;
  c.duration = 20.0;
  c.seed = 42;
  const ScenarioDataset a = generate(c);
  const ScenarioDataset b = generate(c);
  ASSERT_EQ(a.imu.size(), b.imu.size());
  for (std::size_t k = 0; k < a.imu.size(); ++k) {
    ASSERT_TRUE(a.imu[k].angular_rate == b.imu[k].angular_rate);
    ASSERT_TRUE(a.imu[k].specific_force == b.imu[k].specific_force);
    ASSERT_TRUE(a.truth[k].position == b.truth[k].position);
  }
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t f = 0; f < a.frames.size(); ++f) {
    ASSERT_EQ(a.frames[f].features.size(), b.frames[f].features.size());
    for (std::size_t k = 0; k < a.frames[f].features.size(); ++k) {
      ASSERT_TRUE(a.frames[f].features[k].pixel == b.frames[f].features[k].pixel);
    }
  }
  EXPECT_TRUE(same_epochs(a.gnss_rover, b.gnss_rover));
  EXPECT_TRUE(same_epochs(a.gnss_base, b.gnss_base));

  c.seed = 43;
  const ScenarioDataset d = generate(c);
  EXPECT_FALSE(a.imu[100].angular_rate == d.imu[100].angular_rate);
}

TEST(Generate, RatesAndSizes) {
  const ScenarioDataset& ds = noise_free_60s();
  EXPECT_EQ(ds.imu.size(), ds.truth.size());
  EXPECT_EQ(ds.imu.size(), 60u * 200u + 1u);
  EXPECT_EQ(ds.frames.size(), 60u * 10u + 1u);
  EXPECT_EQ(ds.gnss_rover.size(), ds.gnss_base.size());
  EXPECT_GE(ds.gnss_rover.size(), 60u);
  for (const CameraFrame& f : ds.frames) {
    EXPECT_LE(static_cast<int>(f.features.size()), ds.config.max_features_per_frame);
    for (std::size_t k = 1; k < f.features.size(); ++k) {
      EXPECT_LT(f.features[k - 1].feature_id, f.features[k].feature_id);
    }
  }
}

TEST(Generate, BaseWithinTenKilometres) {
  const ScenarioDataset& ds = noise_free_60s();
  EXPECT_LT((ds.base_position - ds.truth.front().position).norm(), 10e3);
}

TEST(Generate, NoiseFreeImuReproducesTruth) {
  const ScenarioDataset& ds = noise_free_60s();
  NavState s = ds.truth.front();
  double worst_pos = 0.0;
  double worst_att = 0.0;
  for (std::size_t k = 1; k < ds.imu.size(); ++k) {
    s = propagate_nav(s, ds.imu[k - 1], ds.imu[k]);
    worst_pos = std::max(worst_pos, (s.position - ds.truth[k].position).norm());
    worst_att = std::max(worst_att, so3_log(ds.truth[k].attitude * s.attitude.transpose()).norm());
  }
  EXPECT_LT(worst_pos, 1e-3);
  EXPECT_LT(worst_att, 1e-5);
}

TEST(Generate, NoiseFreePixelsMatchLandmarks) {
  const ScenarioDataset& ds = noise_free_60s();
  const int per = ds.config.imu_ticks_per_frame();
  for (std::size_t f = 0; f < ds.frames.size(); f += 97) {
    const NavState& t = ds.truth[f * static_cast<std::size_t>(per)];
    const CameraPose cam = body_pose_to_camera(t.attitude, t.position, ds.config.camera);
    for (const FeatureMeasurement& m : ds.frames[f].features) {
      // Track ids are not landmark indices; some landmark must project onto the pixel.
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& lm : ds.landmarks) {
        const Vec3 c = cam.to_camera(lm);
        if (c.z() <= 0.0) continue;
        best = std::min(best, (ds.config.intrinsics.project(c) - m.pixel).norm());
      }
      EXPECT_LT(best, 1e-6);
      const Vec2 px = ds.config.intrinsics.to_pixel(m.bearing);
      EXPECT_NEAR((px - m.pixel).norm(), 0.0, 1e-9);
      EXPECT_GE(m.pixel.x(), 0.0);
      EXPECT_LT(m.pixel.x(), ds.config.image_width);
      EXPECT_GE(m.pixel.y(), 0.0);
      EXPECT_LT(m.pixel.y(), ds.config.image_height);
    }
  }
}

TEST(Generate, NoiseFreePoResidualVanishesAtTruth) {
  const ScenarioDataset& ds = noise_free_60s();
  for (int first : {0, 150, 400}) {
    const int count = 10;
    const CameraPoseMap poses = truth_camera_poses(ds, first, count);
    std::map<FeatureId, FeatureTrack> tracks;
    for (int f = first; f < first + count; ++f) {
      for (const auto& m : ds.frames[static_cast<std::size_t>(f)].features) {
        tracks[m.feature_id].feature_id = m.feature_id;
        tracks[m.feature_id].observations[f] = {m.bearing, m.pixel};
      }
    }
    int checked = 0;
    for (const auto& [id, tr] : tracks) {
      if (tr.observations.size() < 3) continue;
      BasePair base;
      try {
        base = select_base_frames(tr, poses);
      } catch (const Error&) {
        continue;
      }
      for (const auto& [l, obs] : tr.observations) {
        if (l == base.i) continue;
        const Vec2 r = po_residual(tr, base, l, poses, ds.config.intrinsics);
        EXPECT_LT(r.norm(), 1e-6) << id << " " << l;
        ++checked;
      }
    }
    EXPECT_GT(checked, 100);
  }
}

TEST(Generate, NoiseFreeDdPhaseIsIntegerCycles) {
  const ScenarioDataset& ds = noise_free_60s();
  const int per = ds.config.imu_ticks_per_gnss();
  for (std::size_t e = 0; e < ds.gnss_rover.size(); e += 7) {
    const DdEpoch dd = double_difference(ds.gnss_rover[e], ds.gnss_base[e], ds.config.gnss_noise);
    const NavState& t = ds.truth[e * static_cast<std::size_t>(per)];
    ASSERT_NEAR(t.timestamp, dd.timestamp, 1e-9);
    const Vec3 antenna = t.position + t.attitude * ds.config.gnss_lever_arm;
    for (const DdObservation& o : dd.obs) {
      const double geom =
          ((antenna - o.sat_position).norm() - (antenna - o.ref_sat_position).norm()) -
          ((ds.base_position - o.base_sat_position).norm() -
           (ds.base_position - o.base_ref_sat_position).norm());
      EXPECT_NEAR(o.dd_pseudorange - geom, 0.0, 1e-6);
      const double cycles = (o.dd_phase - geom) / o.wavelength;
      EXPECT_NEAR(cycles, std::round(cycles), 1e-6);
    }
  }
}

TEST(Generate, SatellitesAtGnssRadius) {
  const ScenarioConfig c;
  for (int s = 0; s < kSatelliteCount; ++s) {
    for (double t : {0.0, 50.0, 120.0}) {
      EXPECT_NEAR(satellite_position(c, s, t).norm(), 26560e3, 1.0);
    }
  }
}

TEST(Degradations, OutageRemovesEpochs) {
  ScenarioConfig c;
  c.duration = 40.0;
  c.degradations = {{DegradationKind::kGnssOutage, 10.0, 20.0, 0.0, -1}};
  const ScenarioDataset ds = generate(c);
  for (const GnssEpoch& e : ds.gnss_rover) EXPECT_FALSE(e.timestamp >= 10.0 && e.timestamp < 20.0);
  for (const GnssEpoch& e : ds.gnss_base) EXPECT_FALSE(e.timestamp >= 10.0 && e.timestamp < 20.0);
  EXPECT_GT(ds.gnss_rover.size(), 20u);
}

TEST(Degradations, DropToThreeSatellites) {
  ScenarioConfig c;
  c.duration = 40.0;
  c.degradations = {{DegradationKind::kSatelliteDropTo, 10.0, 20.0, 3.0, -1}};
  const ScenarioDataset ds = generate(c);
  int inside = 0;
  for (const GnssEpoch& e : ds.gnss_rover) {
    if (e.timestamp >= 10.0 && e.timestamp < 20.0) {
      EXPECT_EQ(e.observations.size(), 3u);
      ++inside;
    } else {
      EXPECT_GT(e.observations.size(), 3u);
    }
  }
  EXPECT_EQ(inside, 10);
}

TEST(Degradations, NlosBiasShowsInDdResidual) {
  ScenarioConfig c = ScenarioConfig().noise_free();
  c.duration = 30.0;
  const ScenarioDataset clean = generate(c);
  const Degradation nlos{DegradationKind::kNlosBias, 5.0, 15.0, 20.0, -1};
  const ScenarioDataset biased = inject_degradations(clean, {nlos});
  for (std::size_t e = 0; e < clean.gnss_rover.size(); ++e) {
    const double t = clean.gnss_rover[e].timestamp;
    const DdEpoch a = double_difference(clean.gnss_rover[e], clean.gnss_base[e]);
    const DdEpoch b = double_difference(biased.gnss_rover[e], biased.gnss_base[e]);
    ASSERT_EQ(a.obs.size(), b.obs.size());
    int hit = 0;
    for (std::size_t k = 0; k < a.obs.size(); ++k) {
      const double d = b.obs[k].dd_pseudorange - a.obs[k].dd_pseudorange;
      if (std::abs(d) > 1e-6) {
        EXPECT_NEAR(std::abs(d), 20.0, 1e-6);
        ++hit;
      }
      EXPECT_EQ(a.obs[k].dd_phase, b.obs[k].dd_phase);
    }
    const bool inside = t >= 5.0 && t < 15.0;
    // A biased non-reference satellite shifts one row; a biased reference shifts all.
    if (inside) {
      EXPECT_TRUE(hit == 1 || hit == static_cast<int>(a.obs.size())) << t;
    } else {
      EXPECT_EQ(hit, 0) << t;
    }
  }
}

TEST(Degradations, FeatureDroughtCapsTracks) {
  ScenarioConfig c;
  c.duration = 20.0;
  c.degradations = {{DegradationKind::kFeatureDrought, 5.0, 8.0, 0.0, -1}};
  const ScenarioDataset ds = generate(c);
  for (const CameraFrame& f : ds.frames) {
    if (f.timestamp >= 5.0 && f.timestamp < 8.0) {
      EXPECT_LE(f.features.size(), 5u);
    }
  }
}

TEST(Degradations, DefaultScenarioValidates) {
  const ScenarioConfig c = default_degraded_scenario(3);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.degradations.size(), 4u);
}

TEST(ScenarioConfig, RejectsInvalidValues) {
  auto expect_invalid = [](ScenarioConfig c) {
    try {
      c.validate();
      ADD_FAILURE() << "expected ConfigInvalid";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfigInvalid);
    }
  };
  ScenarioConfig c;
  EXPECT_NO_THROW(c.validate());
  c.duration = 5.0;
  expect_invalid(c);
  c = ScenarioConfig();
  c.cam_rate = 7.0;
  expect_invalid(c);
  c = ScenarioConfig();
  c.base_offset_enu = Vec3(20e3, 0.0, 0.0);
  expect_invalid(c);
  c = ScenarioConfig();
  c.pixel_sigma = -1.0;
  expect_invalid(c);
  c = ScenarioConfig();
  c.degradations = {{DegradationKind::kGnssOutage, 50.0, 40.0, 0.0, -1}};
  expect_invalid(c);
  c = ScenarioConfig();
  c.camera.rotation_bc = Mat3::Identity() * 2.0;
  expect_invalid(c);
}

TEST(ScenarioConfig, KindNamesRoundTrip) {
  for (auto k : {TrajectoryKind::kCircle, TrajectoryKind::kFigureEight,
                 TrajectoryKind::kStraightWithTurns}) {
    EXPECT_EQ(parse_trajectory_kind(to_string(k)), k);
  }
  for (auto k : {DegradationKind::kGnssOutage, DegradationKind::kNlosBias,
                 DegradationKind::kSatelliteDropTo, DegradationKind::kFeatureDrought}) {
    EXPECT_EQ(parse_degradation_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_trajectory_kind("spiral"), Error);
}

TEST(Trajectory, VelocityIsDerivativeOfPosition) {
  ScenarioConfig c;
  for (auto kind : {TrajectoryKind::kCircle, TrajectoryKind::kFigureEight,
                    TrajectoryKind::kStraightWithTurns}) {
    c.trajectory = kind;
    for (double t : {3.0, 17.5, 44.0}) {
      const double h = 1e-3;
      const Vec3 fd = (trajectory_point(c, t + h).position - trajectory_point(c, t - h).position) /
                      (2.0 * h);
      EXPECT_LT((fd - trajectory_point(c, t).velocity).norm(), 1e-4) << to_string(kind) << t;
      const Vec3 fa = (trajectory_point(c, t + h).velocity - trajectory_point(c, t - h).velocity) /
                      (2.0 * h);
      EXPECT_LT((fa - trajectory_point(c, t).acceleration).norm(), 1e-4) << to_string(kind) << t;
    }
  }
}
