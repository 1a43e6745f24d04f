#include "pogvins/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include <Eigen/Cholesky>

#include "pogvins/dataset_io.hpp"
#include "pogvins/errors.hpp"
#include "pogvins/so3.hpp"

namespace pogvins {

namespace {

constexpr double kTimeEps = 1e-9;
constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kAlignBuffer = 20.0;  // s of GNSS used by coarse alignment

const std::vector<std::string> kRunKeys = {
    "mode", "dataset", "output_dir", "window_size", "theta_min", "ratio_test", "igg_k0",
    "igg_k1", "chi2_confidence", "max_iterations", "robust", "ambiguity_resolution",
    "po_noise_propagation", "po_min_parallax", "init", "init_position_sigma", "init_velocity_sigma", "init_attitude_sigma_deg", "init_seed_offset"};

std::string init_name(InitMode m) {
  return m == InitMode::kCoarseAlign ? "coarse_align" : "truth_perturbed";
}

bool is_numerical_failure(const Error& e) {
  return e.code() == ErrorCode::kSingularInnovation ||
         e.code() == ErrorCode::kNotPositiveDefinite;
}

double pose_nees(const FilterState& fs, const NavState& truth) {
  const auto err = nav_error(fs.nav, truth);
  Eigen::Matrix<double, 6, 1> e;
  e << err.segment<3>(kPos), err.segment<3>(kAtt);
  Eigen::Matrix<double, 6, 6> p;
  const int idx[6] = {kPos, kPos + 1, kPos + 2, kAtt, kAtt + 1, kAtt + 2};
  for (int a = 0; a < 6; ++a) {
    for (int b = 0; b < 6; ++b) p(a, b) = fs.covariance(idx[a], idx[b]);
  }
  Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(p);
  return e.dot(ldlt.solve(e));
}

/// A noise-free dataset still needs finite weights.
GnssNoise weighting_noise(const ScenarioConfig& sc) {
  GnssNoise n = sc.gnss_noise;
  const GnssNoise nominal;
  if (n.code_sigma <= 0.0) n.code_sigma = nominal.code_sigma;
  if (n.phase_sigma <= 0.0) n.phase_sigma = nominal.phase_sigma;
  return n;
}

/// Visual bookkeeping and updates at one camera frame.
class VisualFrontend {
 public:
  VisualFrontend(const ScenarioConfig& sc, const RunConfig& cfg)
      : intrinsics_(sc.intrinsics), ext_(sc.camera), cfg_(cfg) {
    opts_.pixel_sigma = sc.pixel_sigma > 0.0 ? sc.pixel_sigma : 1.0;
    opts_.theta_min = cfg.theta_min;
    opts_.chi2_confidence = cfg.chi2_confidence;
    opts_.max_iterations = cfg.max_iterations;
    opts_.po_noise_propagation = cfg.po_noise_propagation;
    opts_.po_min_parallax = cfg.po_min_parallax;
  }

  void process(FilterState& fs, const CameraFrame& frame, PipelineStats& stats) {
    std::set<FeatureId> seen;
    for (const auto& f : frame.features) seen.insert(f.feature_id);
    const bool full = static_cast<int>(fs.clones.size()) >= fs.window_size;
    const CloneId oldest = fs.clones.empty() ? -1 : fs.clones.begin()->first;

    std::vector<FeatureTrack> batch;
    for (auto it = tracks_.begin(); it != tracks_.end();) {
      const FeatureTrack& tr = it->second;
      const bool lost = seen.count(it->first) == 0;
      const bool expiring = full && tr.observations.count(oldest) > 0;
      const bool usable = tr.observations.size() >= 3;
      if ((lost || expiring) && usable) batch.push_back(tr);
      if (lost || (expiring && usable)) {
        it = tracks_.erase(it);
      } else {
        ++it;
      }
    }
    if (!batch.empty()) {
      try {
        const UpdateReport rep = uses_po(cfg_.mode)
                                     ? po_update(fs, batch, intrinsics_, ext_, opts_)
                                     : msckf_update(fs, batch, intrinsics_, ext_, opts_);
        if (rep.status == UpdateStatus::kApplied) ++stats.camera_updates;
        stats.visual_tracks_used += rep.tracks_used;
        stats.visual_tracks_rejected += rep.tracks_rejected;
      } catch (const Error& e) {
        if (!is_numerical_failure(e)) throw;
        ++stats.update_failures;
      }
    }
    if (full) marginalize_oldest(fs, &tracks_, ext_, cfg_.theta_min);
    augment_clone(fs, frame.frame_id);
    for (const auto& f : frame.features) {
      FeatureTrack& tr = tracks_[f.feature_id];
      tr.feature_id = f.feature_id;
      tr.observations[frame.frame_id] = {f.bearing, f.pixel};
    }
  }

 private:
  CameraIntrinsics intrinsics_;
  CameraExtrinsics ext_;
  RunConfig cfg_;
  VisualUpdateOptions opts_;
  std::map<FeatureId, FeatureTrack> tracks_;
};

class GnssBackend {
 public:
  GnssBackend(const ScenarioDataset& ds, const RunConfig& cfg) : noise_(weighting_noise(ds.config)), cfg_(cfg) {
    opts_.lever_arm = ds.config.gnss_lever_arm;
    opts_.base_position = ds.base_position;
    opts_.k0 = cfg.igg_k0;
    opts_.k1 = cfg.igg_k1;
    opts_.max_iterations = cfg.max_iterations;
    opts_.robust = cfg.robust;
  }

  void process(FilterState& fs, const GnssEpoch& rover, const GnssEpoch& base,
               PipelineStats& stats) {
    DdEpoch dd;
    try {
      dd = double_difference(rover, base, noise_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInsufficientSatellites) throw;
      return;
    }
    manage_ambiguities(amb_, dd, fs);
    try {
      const RtkReport rep = rtk_update(fs, dd, amb_, opts_);
      if (rep.status == UpdateStatus::kApplied) ++stats.gnss_updates;
      stats.gnss_rows_rejected += rep.rows_rejected;
    } catch (const Error& e) {
      if (!is_numerical_failure(e)) throw;
      ++stats.update_failures;
      return;
    }
    if (cfg_.ambiguity_resolution && !amb_.entries.empty()) {
      try {
        const FixReport fix = resolve_ambiguities(fs, amb_, cfg_.ratio_test);
        stats.fix_attempts += fix.attempted ? 1 : 0;
        stats.fixes_accepted += fix.accepted ? 1 : 0;
      } catch (const Error& e) {
        if (!is_numerical_failure(e)) throw;
        ++stats.update_failures;
      }
    }
  }

 private:
  GnssNoise noise_;
  RunConfig cfg_;
  RtkOptions opts_;
  AmbiguitySet amb_;
};

const GnssEpoch* find_base(const std::vector<GnssEpoch>& base, std::size_t& cursor, double t) {
  while (cursor < base.size() && base[cursor].timestamp < t - kTimeEps) ++cursor;
  if (cursor < base.size() && std::abs(base[cursor].timestamp - t) <= kTimeEps) {
    return &base[cursor];
  }
  return nullptr;
}

}  // namespace

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kPoVins: return "PO-VINS";
    case RunMode::kMsckf: return "MSCKF";
    case RunMode::kGi: return "GI";
    case RunMode::kMGvins: return "M-GVINS";
    case RunMode::kPoGvins: return "PO-GVINS";
  }
  return "?";
}

RunMode parse_run_mode(const std::string& text) {
  for (RunMode m : {RunMode::kPoVins, RunMode::kMsckf, RunMode::kGi, RunMode::kMGvins,
                    RunMode::kPoGvins}) {
    if (to_string(m) == text) return m;
  }
  throw Error(ErrorCode::kModeUnsupported, "unknown mode '" + text + "'");
}

bool uses_gnss(RunMode m) {
  return m == RunMode::kGi || m == RunMode::kMGvins || m == RunMode::kPoGvins;
}
bool uses_camera(RunMode m) { return m != RunMode::kGi; }
bool uses_po(RunMode m) { return m == RunMode::kPoVins || m == RunMode::kPoGvins; }

void RunConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kConfigInvalid, what); };
  if (window_size < 3) bad("window_size must be >= 3");
  if (!(theta_min > 0.0)) bad("theta_min must be positive");
  if (!(po_min_parallax >= 0.0 && po_min_parallax < 1.0)) bad("po_min_parallax in [0, 1)");
  if (!(ratio_test >= 1.0)) bad("ratio_test must be >= 1");
  if (!(igg_k0 > 0.0 && igg_k1 > igg_k0)) bad("need 0 < igg_k0 < igg_k1");
  if (!(chi2_confidence > 0.0 && chi2_confidence < 1.0)) bad("chi2_confidence in (0, 1)");
  if (max_iterations < 1) bad("max_iterations must be >= 1");
  if (!(init_position_sigma > 0.0 && init_velocity_sigma > 0.0 && init_attitude_sigma_deg > 0.0)) {
    bad("initial sigmas must be positive");
  }
}

RunConfig RunConfig::from_kv(const KvConfig& kv) {
  kv.require_known(kRunKeys);
  RunConfig c;
  if (auto m = kv.get("mode")) c.mode = parse_run_mode(*m);
  c.dataset_path = kv.get_string("dataset", c.dataset_path);
  c.output_dir = kv.get_string("output_dir", c.output_dir);
  c.window_size = static_cast<int>(kv.get_int("window_size", c.window_size));
  c.theta_min = kv.get_double("theta_min", c.theta_min);
  c.ratio_test = kv.get_double("ratio_test", c.ratio_test);
  c.igg_k0 = kv.get_double("igg_k0", c.igg_k0);
  c.igg_k1 = kv.get_double("igg_k1", c.igg_k1);
  c.chi2_confidence = kv.get_double("chi2_confidence", c.chi2_confidence);
  c.max_iterations = static_cast<int>(kv.get_int("max_iterations", c.max_iterations));
  c.robust = kv.get_bool("robust", c.robust);
  c.ambiguity_resolution = kv.get_bool("ambiguity_resolution", c.ambiguity_resolution);
  c.po_noise_propagation = kv.get_bool("po_noise_propagation", c.po_noise_propagation);
  c.po_min_parallax = kv.get_double("po_min_parallax", c.po_min_parallax);
  const std::string init = kv.get_string("init", init_name(c.init));
  if (init == "truth_perturbed") {
    c.init = InitMode::kTruthPerturbed;
  } else if (init == "coarse_align") {
    c.init = InitMode::kCoarseAlign;
  } else {
    throw Error(ErrorCode::kConfigInvalid, "init must be truth_perturbed or coarse_align");
  }
  c.init_position_sigma = kv.get_double("init_position_sigma", c.init_position_sigma);
  c.init_velocity_sigma = kv.get_double("init_velocity_sigma", c.init_velocity_sigma);
  c.init_attitude_sigma_deg = kv.get_double("init_attitude_sigma_deg", c.init_attitude_sigma_deg);
  c.init_seed_offset =
      static_cast<std::uint64_t>(kv.get_int("init_seed_offset", static_cast<long>(c.init_seed_offset)));
  c.validate();
  return c;
}

KvConfig RunConfig::to_kv() const {
  KvConfig kv;
  kv.add("mode", to_string(mode));
  kv.add("dataset", dataset_path);
  kv.add("output_dir", output_dir);
  kv.add("window_size", std::to_string(window_size));
  kv.add("theta_min", format_double(theta_min));
  kv.add("ratio_test", format_double(ratio_test));
  kv.add("igg_k0", format_double(igg_k0));
  kv.add("igg_k1", format_double(igg_k1));
  kv.add("chi2_confidence", format_double(chi2_confidence));
  kv.add("max_iterations", std::to_string(max_iterations));
  kv.add("robust", robust ? "true" : "false");
  kv.add("ambiguity_resolution", ambiguity_resolution ? "true" : "false");
  kv.add("po_noise_propagation", po_noise_propagation ? "true" : "false");
  kv.add("po_min_parallax", format_double(po_min_parallax));
  kv.add("init", init_name(init));
  kv.add("init_position_sigma", format_double(init_position_sigma));
  kv.add("init_velocity_sigma", format_double(init_velocity_sigma));
  kv.add("init_attitude_sigma_deg", format_double(init_attitude_sigma_deg));
  kv.add("init_seed_offset", std::to_string(init_seed_offset));
  return kv;
}

std::pair<NavState, MatX> initialize(const ScenarioDataset& ds, const RunConfig& cfg) {
  const NoiseParams& n = ds.config.imu_noise;
  MatX p = MatX::Zero(kImuErrorDim, kImuErrorDim);
  auto set_block = [&](int at, double sigma) {
    p.diagonal().segment<3>(at).setConstant(sigma * sigma);
  };
  set_block(kBa, n.accel_bias_sigma > 0.0 ? n.accel_bias_sigma : 1e-6);
  set_block(kBg, n.gyro_bias_sigma > 0.0 ? n.gyro_bias_sigma : 1e-8);

  if (cfg.init == InitMode::kTruthPerturbed) {
    if (ds.truth.empty()) throw Error(ErrorCode::kInvalidArgument, "dataset has no truth");
    std::mt19937_64 rng(ds.config.seed + cfg.init_seed_offset);
    std::normal_distribution<double> g(0.0, 1.0);
    auto draw = [&] { return Vec3(g(rng), g(rng), g(rng)); };
    const NavState& t0 = ds.truth.front();
    NavState nav;
    nav.timestamp = t0.timestamp;
    nav.position = t0.position + cfg.init_position_sigma * draw();
    nav.velocity = t0.velocity + cfg.init_velocity_sigma * draw();
    nav.attitude = so3_exp(cfg.init_attitude_sigma_deg * kDeg * draw()) * t0.attitude;
    set_block(kPos, cfg.init_position_sigma);
    set_block(kVel, cfg.init_velocity_sigma);
    set_block(kAtt, cfg.init_attitude_sigma_deg * kDeg);
    return {nav, p};
  }

  if (ds.gnss_rover.empty() || ds.gnss_base.empty()) {
    throw Error(ErrorCode::kModeUnsupported, "coarse_align needs GNSS data");
  }
  // Alignment buffer: DD epochs of the first kAlignBuffer seconds, with the code
  // carrier-smoothed per pair (code minus phase is constant without slips).
  std::vector<DdEpoch> dds;
  std::size_t cursor = 0;
  const double t_first = ds.gnss_rover.front().timestamp;
  for (const GnssEpoch& e : ds.gnss_rover) {
    if (e.timestamp > t_first + kAlignBuffer) break;
    const GnssEpoch* b = find_base(ds.gnss_base, cursor, e.timestamp);
    if (!b) continue;
    try {
      dds.push_back(double_difference(e, *b, weighting_noise(ds.config)));
    } catch (const Error& err) {
      if (err.code() != ErrorCode::kInsufficientSatellites) throw;
    }
  }
  std::map<std::pair<SatId, SatId>, std::pair<double, int>> offsets;
  for (const DdEpoch& dd : dds) {
    for (const DdObservation& o : dd.obs) {
      auto& acc = offsets[{o.sat_id, o.ref_sat_id}];
      acc.first += o.dd_pseudorange - o.dd_phase;
      ++acc.second;
    }
  }
  std::vector<PositionFix> fixes;
  Vec3 guess = ds.base_position;
  for (DdEpoch& dd : dds) {
    for (DdObservation& o : dd.obs) {
      const auto& acc = offsets.at({o.sat_id, o.ref_sat_id});
      o.dd_pseudorange = o.dd_phase + acc.first / acc.second;
    }
    try {
      guess = solve_dd_position(dd, ds.base_position, guess);
      fixes.push_back({dd.timestamp, guess});
    } catch (const Error& err) {
      if (err.code() != ErrorCode::kInsufficientSatellites &&
          err.code() != ErrorCode::kNotPositiveDefinite) {
        throw;
      }
    }
  }
  NavState nav = coarse_align(fixes, ds.imu);
  nav.position -= nav.attitude * ds.config.gnss_lever_arm;
  set_block(kPos, 1.0);
  set_block(kVel, 0.2);
  set_block(kAtt, 2.0 * kDeg);
  return {nav, p};
}

PipelineResult run_pipeline(const ScenarioDataset& ds, const RunConfig& cfg,
                            const StepCallback& on_step) {
  cfg.validate();
  if (ds.imu.size() < 2) throw Error(ErrorCode::kInvalidArgument, "dataset has fewer than 2 IMU samples");
  if (uses_gnss(cfg.mode) && (ds.gnss_rover.empty() || ds.gnss_base.empty())) {
    throw Error(ErrorCode::kModeUnsupported, to_string(cfg.mode) + " needs GNSS observations");
  }
  if (uses_camera(cfg.mode)) {
    const bool any = std::any_of(ds.frames.begin(), ds.frames.end(),
                                 [](const CameraFrame& f) { return !f.features.empty(); });
    if (!any) {
      throw Error(ErrorCode::kModeUnsupported, to_string(cfg.mode) + " needs camera features");
    }
  }

  auto [nav0, p0] = initialize(ds, cfg);
  FilterState fs = make_filter_state(nav0, p0, cfg.window_size);
  std::size_t k0 = 0;
  while (k0 < ds.imu.size() && ds.imu[k0].timestamp < nav0.timestamp - kTimeEps) ++k0;
  if (k0 >= ds.imu.size()) throw Error(ErrorCode::kInvalidArgument, "initial time after the data");
  fs.nav.timestamp = ds.imu[k0].timestamp;

  std::optional<VisualFrontend> visual;
  if (uses_camera(cfg.mode)) visual.emplace(ds.config, cfg);
  std::optional<GnssBackend> gnss;
  if (uses_gnss(cfg.mode)) gnss.emplace(ds, cfg);

  const bool truth_aligned = ds.truth.size() == ds.imu.size();
  PipelineResult out;
  out.trajectory.reserve(ds.imu.size() - k0);
  std::size_t next_frame = 0;
  std::size_t next_gnss = 0;
  std::size_t base_cursor = 0;
  double last_event = -std::numeric_limits<double>::infinity();
  auto check_order = [&](double t) {
    if (t < last_event - kTimeEps) {
      throw Error(ErrorCode::kNonMonotonicTime, "measurement out of timestamp order");
    }
    last_event = t;
  };
  const MechanizationOptions mech;

  for (std::size_t k = k0; k < ds.imu.size(); ++k) {
    const double t = ds.imu[k].timestamp;
    if (k > k0) {
      propagate_filter(fs, ds.imu[k - 1], ds.imu[k], ds.config.imu_noise, mech);
      if (on_step) on_step(StepKind::kImu, t, fs);
    }
    // Camera events precede GNSS events at equal timestamps.
    while (next_frame < ds.frames.size() && ds.frames[next_frame].timestamp <= t + kTimeEps) {
      const CameraFrame& f = ds.frames[next_frame++];
      if (f.timestamp < fs.nav.timestamp - kTimeEps && k == k0) continue;
      check_order(f.timestamp);
      if (visual) {
        visual->process(fs, f, out.stats);
        if (on_step) on_step(StepKind::kCamera, t, fs);
      }
      if (truth_aligned) {
        out.nees_timestamps.push_back(t);
        out.nees.push_back(pose_nees(fs, ds.truth[k]));
      }
    }
    while (next_gnss < ds.gnss_rover.size() &&
           ds.gnss_rover[next_gnss].timestamp <= t + kTimeEps) {
      const GnssEpoch& rover = ds.gnss_rover[next_gnss++];
      if (rover.timestamp < fs.nav.timestamp - kTimeEps && k == k0) continue;
      check_order(rover.timestamp);
      if (!gnss) continue;
      const GnssEpoch* base = find_base(ds.gnss_base, base_cursor, rover.timestamp);
      if (!base) continue;
      gnss->process(fs, rover, *base, out.stats);
      if (on_step) on_step(StepKind::kGnss, t, fs);
    }
    out.trajectory.push_back({t, fs.nav.position, fs.nav.velocity, fs.nav.attitude});
  }

  MetricsOptions mo;
  if (!uses_gnss(cfg.mode)) {
    mo.align_first_pose = true;
    mo.normalize_by_length = true;
  }
  out.report = compute_metrics(out.trajectory, to_trajectory(ds.truth), mo);
  return out;
}

PipelineResult run_pipeline(const RunConfig& cfg, const StepCallback& on_step) {
  if (cfg.dataset_path.empty()) throw Error(ErrorCode::kConfigInvalid, "dataset path not set");
  const ScenarioDataset ds = read_dataset(cfg.dataset_path);
  return run_pipeline(ds, cfg, on_step);
}

}  // namespace pogvins
