#include "pogvins/swf_filter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <boost/math/distributions/chi_squared.hpp>

#include "pogvins/errors.hpp"
#include "pogvins/so3.hpp"

namespace pogvins {

Eigen::Index FilterState::clone_offset(CloneId id) const {
  Eigen::Index k = 0;
  for (const auto& entry : clones) {
    if (entry.first == id) {
      return kImuErrorDim + kCloneDim * k;
    }
    ++k;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown clone id " + std::to_string(id));
}

void FilterState::validate() const {
  const Eigen::Index expected = ambiguity_offset() + ambiguities.size();
  if (covariance.rows() != expected || covariance.cols() != expected) {
    throw Error(ErrorCode::kInvalidArgument, "covariance dimension does not match the state");
  }
  if (static_cast<int>(clones.size()) > window_size) {
    throw Error(ErrorCode::kInvalidArgument, "more clones than the window size");
  }
}

FilterState make_filter_state(const NavState& nav, const MatX& imu_covariance, int window_size) {
  if (imu_covariance.rows() != kImuErrorDim || imu_covariance.cols() != kImuErrorDim) {
    throw Error(ErrorCode::kInvalidArgument, "IMU covariance must be 15x15");
  }
  if (window_size < 2) {
    throw Error(ErrorCode::kInvalidArgument, "window size must be at least 2");
  }
  FilterState fs;
  fs.nav = nav;
  fs.covariance = 0.5 * (imu_covariance + imu_covariance.transpose());
  fs.window_size = window_size;
  return fs;
}

void propagate_filter(FilterState& fs, const ImuSample& previous, const ImuSample& sample,
                      const NoiseParams& noise, const MechanizationOptions& opts) {
  const double dt = sample.timestamp - fs.nav.timestamp;
  ImuSample mean = sample;
  mean.specific_force = 0.5 * (previous.specific_force + sample.specific_force);
  mean.angular_rate = 0.5 * (previous.angular_rate + sample.angular_rate);
  const ErrorStateModel model = error_state_matrices(fs.nav, mean, opts);
  fs.nav = propagate_nav(fs.nav, previous, sample, opts);
  propagate_covariance_inplace(fs.covariance, model, noise, dt);
}

namespace {

// Inserts `count` zero rows/cols at `at`.
MatX insert_block(const MatX& p, Eigen::Index at, Eigen::Index count) {
  const Eigen::Index n = p.rows();
  const Eigen::Index tail = n - at;
  MatX out = MatX::Zero(n + count, n + count);
  out.topLeftCorner(at, at) = p.topLeftCorner(at, at);
  out.topRightCorner(at, tail) = p.topRightCorner(at, tail);
  out.bottomLeftCorner(tail, at) = p.bottomLeftCorner(tail, at);
  out.bottomRightCorner(tail, tail) = p.bottomRightCorner(tail, tail);
  return out;
}

MatX delete_indices(const MatX& p, const std::vector<Eigen::Index>& drop) {
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index k = 0; k < p.rows(); ++k) {
    if (std::find(drop.begin(), drop.end(), k) == drop.end()) {
      keep.push_back(k);
    }
  }
  return p(keep, keep);
}

}  // namespace

void augment_clone(FilterState& fs, CloneId id) {
  if (static_cast<int>(fs.clones.size()) >= fs.window_size) {
    throw Error(ErrorCode::kWindowFull, "marginalize before cloning");
  }
  if (fs.clones.count(id) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "clone id already present");
  }
  if (!fs.clones.empty() && id < fs.clones.rbegin()->first) {
    throw Error(ErrorCode::kInvalidArgument, "clone ids must increase");
  }
  const Eigen::Index at = fs.ambiguity_offset();
  MatX p = insert_block(fs.covariance, at, kCloneDim);
  // The clone error is a selection of the IMU position and attitude errors.
  const std::array<Eigen::Index, 6> src = {kPos, kPos + 1, kPos + 2, kAtt, kAtt + 1, kAtt + 2};
  const Eigen::Index n = p.rows();
  for (int a = 0; a < kCloneDim; ++a) {
    for (Eigen::Index c = 0; c < n; ++c) {
      if (c >= at && c < at + kCloneDim) continue;
      p(at + a, c) = p(src[a], c);
      p(c, at + a) = p(c, src[a]);
    }
    for (int b = 0; b < kCloneDim; ++b) {
      p(at + a, at + b) = p(src[a], src[b]);
    }
  }
  fs.covariance = std::move(p);
  fs.clones.emplace(id, Clone{fs.nav.timestamp, fs.nav.position, fs.nav.attitude});
}

void marginalize_oldest(FilterState& fs, std::map<FeatureId, FeatureTrack>* tracks,
                        const CameraExtrinsics& ext, double theta_min) {
  if (fs.clones.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no clone to marginalize");
  }
  const CloneId oldest = fs.clones.begin()->first;
  const Eigen::Index off = fs.clone_offset(oldest);
  std::vector<Eigen::Index> drop;
  for (int k = 0; k < kCloneDim; ++k) drop.push_back(off + k);
  fs.covariance = delete_indices(fs.covariance, drop);
  fs.clones.erase(fs.clones.begin());

  if (tracks == nullptr) return;
  CameraPoseMap poses;
  for (auto it = tracks->begin(); it != tracks->end();) {
    FeatureTrack& t = it->second;
    t.observations.erase(oldest);
    if (t.observations.empty()) {
      it = tracks->erase(it);
      continue;
    }
    if (t.base_pair && (t.base_pair->i == oldest || t.base_pair->j == oldest)) {
      t.base_pair.reset();
      if (t.observations.size() >= 2) {
        if (poses.empty()) poses = clone_camera_poses(fs, ext);
        try {
          t.base_pair = select_base_frames(t, poses, theta_min);
        } catch (const Error&) {
          t.base_pair.reset();
        }
      }
    }
    ++it;
  }
}

void remove_ambiguity_states(FilterState& fs, const std::vector<Eigen::Index>& indices) {
  if (indices.empty()) return;
  std::vector<Eigen::Index> drop;
  const Eigen::Index base = fs.ambiguity_offset();
  for (Eigen::Index k : indices) {
    if (k < 0 || k >= fs.ambiguities.size()) {
      throw Error(ErrorCode::kInvalidArgument, "ambiguity index out of range");
    }
    drop.push_back(base + k);
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < fs.ambiguities.size(); ++k) {
    if (std::find(indices.begin(), indices.end(), k) == indices.end()) keep.push_back(k);
  }
  fs.ambiguities = VecX(fs.ambiguities(keep));
  fs.covariance = delete_indices(fs.covariance, drop);
}

void append_ambiguity_states(FilterState& fs, const VecX& values, const VecX& variances) {
  if (values.size() != variances.size() || (variances.array() <= 0.0).any()) {
    throw Error(ErrorCode::kInvalidArgument, "ambiguity priors need positive variances");
  }
  const Eigen::Index n = fs.dim();
  MatX p = MatX::Zero(n + values.size(), n + values.size());
  p.topLeftCorner(n, n) = fs.covariance;
  p.bottomRightCorner(values.size(), values.size()) = variances.asDiagonal();
  fs.covariance = std::move(p);
  VecX amb(fs.ambiguities.size() + values.size());
  amb << fs.ambiguities, values;
  fs.ambiguities = std::move(amb);
}

void apply_correction(FilterState& fs, const Eigen::Ref<const VecX>& dx) {
  if (dx.size() != fs.dim()) {
    throw Error(ErrorCode::kInvalidArgument, "correction size does not match the state");
  }
  apply_imu_correction(fs.nav, dx.head<kImuErrorDim>());
  Eigen::Index off = kImuErrorDim;
  for (auto& entry : fs.clones) {
    Clone& c = entry.second;
    c.position -= dx.segment<3>(off);
    c.attitude = orthonormalize(so3_exp(dx.segment<3>(off + 3)) * c.attitude);
    off += kCloneDim;
  }
  fs.ambiguities += dx.tail(fs.ambiguities.size());
}

CameraPoseMap clone_camera_poses(const FilterState& fs, const CameraExtrinsics& ext) {
  CameraPoseMap poses;
  for (const auto& [id, c] : fs.clones) {
    poses.emplace_hint(poses.end(), id, body_pose_to_camera(c.attitude, c.position, ext));
  }
  return poses;
}

double chi2_quantile(int dof, double confidence) {
  if (dof <= 0 || !(confidence > 0.0 && confidence < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "chi-square quantile needs dof > 0, 0 < p < 1");
  }
  static std::mutex mu;
  static std::map<std::pair<int, double>, double> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(dof, confidence);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const double q = boost::math::quantile(boost::math::chi_squared(dof), confidence);
  cache.emplace(key, q);
  return q;
}

namespace {

std::vector<Eigen::Index> active_columns(const MatX& h) {
  std::vector<Eigen::Index> cols;
  for (Eigen::Index c = 0; c < h.cols(); ++c) {
    if (!h.col(c).isZero(0.0)) cols.push_back(c);
  }
  return cols;
}

// Mahalanobis norm of whitened rows against P restricted to their nonzero columns.
double whitened_mahalanobis(const VecX& r, const MatX& h, const MatX& p) {
  const auto cols = active_columns(h);
  const MatX hc = h(Eigen::all, cols);
  MatX s = hc * p(cols, cols) * hc.transpose();
  s.diagonal().array() += 1.0;
  Eigen::LLT<MatX> llt(s);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularInnovation, "innovation covariance not positive definite");
  }
  return r.dot(llt.solve(r));
}

struct Gain {
  MatX k;                            // n x m
  MatX hc;                           // m x |cols|
  std::vector<Eigen::Index> cols;
};

Gain kalman_gain(const MatX& p, const MatX& h) {
  Gain g;
  g.cols = active_columns(h);
  g.hc = h(Eigen::all, g.cols);
  const MatX pht = p(Eigen::all, g.cols) * g.hc.transpose();
  MatX s = g.hc * pht(g.cols, Eigen::all);
  s.diagonal().array() += 1.0;
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::LLT<MatX> llt(s);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kSingularInnovation, "innovation covariance not positive definite");
  }
  g.k = llt.solve(pht.transpose()).transpose();
  return g;
}

void joseph(MatX& p, const Gain& g) {
  // (I - KH) P (I - KH)^T + K K^T with H nonzero only on g.cols.
  const MatX a = p - g.k * (g.hc * p(g.cols, Eigen::all));
  MatX out = a - (a(Eigen::all, g.cols) * g.hc.transpose()) * g.k.transpose();
  out.noalias() += g.k * g.k.transpose();
  p = 0.5 * (out + out.transpose());
}

}  // namespace

bool chi2_gate(const VecX& residual, const MatX& H, const MatX& P, const MatX& R,
               double confidence) {
  if (H.rows() != residual.size() || H.cols() != P.rows() || P.rows() != P.cols() ||
      R.rows() != residual.size() || R.cols() != residual.size()) {
    throw Error(ErrorCode::kInvalidArgument, "chi2_gate dimension mismatch");
  }
  if (residual.size() == 0) return true;
  MatX s = H * P * H.transpose() + R;
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::LDLT<MatX> ldlt(s);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      (ldlt.vectorD().array() <= 1e-300).any()) {
    throw Error(ErrorCode::kSingularInnovation, "innovation covariance not invertible");
  }
  const double m2 = residual.dot(ldlt.solve(residual));
  return m2 < chi2_quantile(static_cast<int>(residual.size()), confidence);
}

MatX joseph_update(MatX& covariance, const MatX& jacobian) {
  const Gain g = kalman_gain(covariance, jacobian);
  joseph(covariance, g);
  return g.k;
}

void compress_rows(WhitenedRows& rows) {
  const auto cols = active_columns(rows.jacobian);
  const Eigen::Index k = static_cast<Eigen::Index>(cols.size());
  const Eigen::Index m = rows.jacobian.rows();
  if (m <= k) return;
  MatX aug(m, k + 1);
  aug.leftCols(k) = rows.jacobian(Eigen::all, cols);
  aug.col(k) = rows.residual;
  Eigen::HouseholderQR<MatX> qr(aug);
  const MatX r = qr.matrixQR().topRows(k + 1).triangularView<Eigen::Upper>();
  // The last row only carries residual energy orthogonal to range(H); it has no state
  // information and is dropped.
  MatX h = MatX::Zero(k, rows.jacobian.cols());
  for (Eigen::Index c = 0; c < k; ++c) {
    h.col(cols[static_cast<std::size_t>(c)]) = r.block(0, c, k, 1);
  }
  rows.residual = r.block(0, k, k, 1);
  rows.jacobian = std::move(h);
}

TrackLinearization linearize_po_track(const FilterState& fs, const FeatureTrack& track,
                                      const CameraIntrinsics& intrinsics,
                                      const CameraExtrinsics& ext, double theta_min,
                                      const BasePair* fixed_base) {
  CameraPoseMap poses;
  for (const auto& entry : track.observations) {
    auto it = fs.clones.find(entry.first);
    if (it == fs.clones.end()) {
      throw Error(ErrorCode::kInvalidArgument, "track observes a frame outside the window");
    }
    poses.emplace(entry.first,
                  body_pose_to_camera(it->second.attitude, it->second.position, ext));
  }
  TrackLinearization out;
  out.base = fixed_base != nullptr ? *fixed_base : select_base_frames(track, poses, theta_min);
  const CloneId i = out.base.i;
  const CloneId j = out.base.j;
  const FeatureObservation& obs_i = track.observations.at(i);
  const FeatureObservation& obs_j = track.observations.at(j);

  const Eigen::Index n_obs = static_cast<Eigen::Index>(track.observations.size());
  const Eigen::Index max_rows = 2 * (n_obs - 1);
  out.residual.resize(max_rows);
  out.jacobian = MatX::Zero(max_rows, fs.dim());
  out.noise_jacobian = MatX::Zero(max_rows, 2 * n_obs);
  std::map<CloneId, Eigen::Index> obs_col;
  for (const auto& entry : track.observations) {
    obs_col.emplace(entry.first, 2 * static_cast<Eigen::Index>(obs_col.size()));
  }
  const Eigen::Matrix2d pixel_to_bearing =
      Eigen::Vector2d(1.0 / intrinsics.fx, 1.0 / intrinsics.fy).asDiagonal();
  Eigen::Index row = 0;
  for (const auto& [l, obs_l] : track.observations) {
    if (l == i) continue;
    PoEvaluation ev;
    try {
      ev = evaluate_po(poses.at(i), poses.at(j), poses.at(l), l == j, obs_i.bearing,
                       obs_j.bearing, obs_l.pixel, intrinsics, true, theta_min);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kBehindCamera) continue;
      throw;
    }
    out.residual.segment<2>(row) = ev.residual;
    auto put = [&](CloneId id, const Mat26& jac) {
      out.jacobian.block<2, 6>(row, fs.clone_offset(id)) +=
          camera_to_body_jacobian(jac, fs.clones.at(id).attitude, ext);
    };
    put(i, ev.jac_i);
    put(j, ev.jac_j);
    if (l != j) put(l, ev.jac_l);
    out.noise_jacobian.block<2, 2>(row, obs_col.at(i)) += ev.jac_bearing_i * pixel_to_bearing;
    out.noise_jacobian.block<2, 2>(row, obs_col.at(j)) += ev.jac_bearing_j * pixel_to_bearing;
    out.noise_jacobian.block<2, 2>(row, obs_col.at(l)) -= Eigen::Matrix2d::Identity();
    row += 2;
  }
  out.residual.conservativeResize(row);
  out.jacobian.conservativeResize(row, Eigen::NoChange);
  out.noise_jacobian.conservativeResize(row, Eigen::NoChange);
  return out;
}

MatX left_null_space(const MatX& h) {
  // Trailing columns of the full Q.
  const Eigen::Index m = h.rows();
  Eigen::HouseholderQR<MatX> qr(h);
  const MatX q = qr.householderQ() * MatX::Identity(m, m);
  return q.rightCols(m - h.cols());
}

MsckfLinearization linearize_msckf_track(const FilterState& fs, const FeatureTrack& track,
                                         const CameraIntrinsics& intrinsics,
                                         const CameraExtrinsics& ext, double theta_min) {
  CameraPoseMap poses;
  for (const auto& entry : track.observations) {
    auto it = fs.clones.find(entry.first);
    if (it == fs.clones.end()) {
      throw Error(ErrorCode::kInvalidArgument, "track observes a frame outside the window");
    }
    poses.emplace(entry.first,
                  body_pose_to_camera(it->second.attitude, it->second.position, ext));
  }
  MsckfLinearization out;
  out.point = triangulate(track, poses, theta_min);

  const Eigen::Index m = 2 * static_cast<Eigen::Index>(track.observations.size());
  VecX r(m);
  MatX hx = MatX::Zero(m, fs.dim());
  MatX hf(m, 3);
  Eigen::Index row = 0;
  for (const auto& [id, obs] : track.observations) {
    const Reprojection rp = reproject(out.point, poses.at(id), obs.pixel, intrinsics);
    r.segment<2>(row) = rp.residual;
    hx.block<2, 6>(row, fs.clone_offset(id)) =
        camera_to_body_jacobian(rp.jac_pose, fs.clones.at(id).attitude, ext);
    hf.middleRows<2>(row) = rp.jac_point;
    row += 2;
  }
  const MatX a_null = left_null_space(hf);
  out.residual = a_null.transpose() * r;
  out.jacobian = a_null.transpose() * hx;
  return out;
}

namespace {

std::vector<const FeatureTrack*> sorted_tracks(const std::vector<FeatureTrack>& tracks) {
  std::vector<const FeatureTrack*> out;
  out.reserve(tracks.size());
  for (const FeatureTrack& t : tracks) out.push_back(&t);
  std::sort(out.begin(), out.end(), [](const FeatureTrack* a, const FeatureTrack* b) {
    return a->feature_id < b->feature_id;
  });
  return out;
}

WhitenedRows stack(const std::vector<WhitenedRows>& parts, Eigen::Index n) {
  Eigen::Index m = 0;
  for (const auto& p : parts) m += p.residual.size();
  WhitenedRows out{VecX(m), MatX(m, n)};
  Eigen::Index row = 0;
  for (const auto& p : parts) {
    out.residual.segment(row, p.residual.size()) = p.residual;
    out.jacobian.middleRows(row, p.residual.size()) = p.jacobian;
    row += p.residual.size();
  }
  return out;
}

/// Maps raw PO rows to unit-covariance rows. Computed once at the prior and reused by
/// the iterations, so the noise model stays fixed during relinearization.
MatX po_whitening(const TrackLinearization& lin, const VisualUpdateOptions& opts) {
  const double inv_sigma = 1.0 / opts.pixel_sigma;
  const Eigen::Index m = lin.residual.size();
  if (!opts.po_noise_propagation) return MatX::Identity(m, m) * inv_sigma;
  // The residual of base frame j is only one-dimensional to first order (the predicted
  // point lies on the epipolar line), so the covariance is rank deficient. Every other
  // eigenvalue is >= 1 because each row carries its own -I pixel term; directions below
  // 1e-2 are dropped.
  const MatX cov = lin.noise_jacobian * lin.noise_jacobian.transpose();
  Eigen::SelfAdjointEigenSolver<MatX> es(cov);
  const VecX& ev = es.eigenvalues();
  const double floor = 1e-2;
  Eigen::Index keep = 0;
  for (Eigen::Index k = 0; k < ev.size(); ++k) keep += ev(k) > floor ? 1 : 0;
  if (keep == 0) {
    throw Error(ErrorCode::kSingularInnovation, "PO residual covariance vanishes");
  }
  const Eigen::Index skip = ev.size() - keep;  // eigenvalues are ascending
  MatX t = es.eigenvectors().rightCols(keep).transpose();
  for (Eigen::Index k = 0; k < keep; ++k) t.row(k) *= inv_sigma / std::sqrt(ev(skip + k));
  return t;
}

void finish_report(UpdateReport& rep, const VecX& dx) {
  rep.status = UpdateStatus::kApplied;
  rep.correction = dx;
  rep.correction_norm = dx.norm();
}

}  // namespace

UpdateReport po_update(FilterState& fs, const std::vector<FeatureTrack>& tracks,
                       const CameraIntrinsics& intrinsics, const CameraExtrinsics& ext,
                       const VisualUpdateOptions& opts) {
  UpdateReport rep;
  if (tracks.empty()) return rep;

  // First linearization: base-frame selection and gating.
  std::vector<const FeatureTrack*> used;
  std::vector<BasePair> bases;
  std::vector<MatX> whitening;
  std::vector<WhitenedRows> parts;
  for (const FeatureTrack* t : sorted_tracks(tracks)) {
    if (t->observations.size() < 2) {
      ++rep.tracks_rejected;
      continue;
    }
    TrackLinearization lin;
    try {
      lin = linearize_po_track(fs, *t, intrinsics, ext,
                               std::max(opts.theta_min, opts.po_min_parallax));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateGeometry && e.code() != ErrorCode::kBehindCamera) {
        throw;
      }
      ++rep.tracks_rejected;
      continue;
    }
    if (lin.residual.size() == 0) {
      ++rep.tracks_rejected;
      continue;
    }
    MatX t_white;
    try {
      t_white = po_whitening(lin, opts);
    } catch (const Error&) {
      ++rep.tracks_rejected;
      continue;
    }
    WhitenedRows w{t_white * lin.residual, t_white * lin.jacobian};
    if (opts.gate) {
      const double m2 = whitened_mahalanobis(w.residual, w.jacobian, fs.covariance);
      if (!(m2 < chi2_quantile(static_cast<int>(w.residual.size()), opts.chi2_confidence))) {
        ++rep.tracks_rejected;
        continue;
      }
    }
    used.push_back(t);
    bases.push_back(lin.base);
    whitening.push_back(std::move(t_white));
    parts.push_back(std::move(w));
  }
  rep.tracks_used = static_cast<int>(used.size());
  if (used.empty()) {
    rep.status = UpdateStatus::kAllTracksRejected;
    return rep;
  }

  const FilterState prior = fs;
  const Eigen::Index n = fs.dim();
  VecX delta = VecX::Zero(n);
  Gain gain;
  for (int iter = 0; iter < std::max(1, opts.max_iterations); ++iter) {
    if (iter > 0) {
      FilterState at = prior;
      apply_correction(at, delta);
      std::vector<WhitenedRows> relin;
      relin.reserve(used.size());
      bool ok = true;
      for (std::size_t k = 0; k < used.size() && ok; ++k) {
        try {
          TrackLinearization lin =
              linearize_po_track(at, *used[k], intrinsics, ext, opts.theta_min, &bases[k]);
          if (lin.residual.size() != whitening[k].cols()) {
            ok = false;  // an observation changed sides of the image plane
            break;
          }
          relin.push_back({whitening[k] * lin.residual, whitening[k] * lin.jacobian});
        } catch (const Error&) {
          ok = false;
        }
      }
      if (!ok) break;
      parts = std::move(relin);
    }
    WhitenedRows rows = stack(parts, n);
    rep.rows = static_cast<int>(rows.residual.size());
    compress_rows(rows);
    gain = kalman_gain(prior.covariance, rows.jacobian);
    // delta_{k+1} = K (H delta_k - r)
    const VecX innov = rows.jacobian(Eigen::all, gain.cols) * delta(gain.cols) - rows.residual;
    const VecX next = gain.k * innov;
    const double step = (next - delta).norm();
    delta = next;
    rep.iterations = iter + 1;
    if (step < opts.convergence_tol) break;
  }

  fs = prior;
  joseph(fs.covariance, gain);
  apply_correction(fs, delta);
  finish_report(rep, delta);
  return rep;
}

UpdateReport msckf_update(FilterState& fs, const std::vector<FeatureTrack>& tracks,
                          const CameraIntrinsics& intrinsics, const CameraExtrinsics& ext,
                          const VisualUpdateOptions& opts) {
  UpdateReport rep;
  if (tracks.empty()) return rep;
  const double inv_sigma = 1.0 / opts.pixel_sigma;
  std::vector<WhitenedRows> parts;
  for (const FeatureTrack* t : sorted_tracks(tracks)) {
    if (t->observations.size() < 2) {
      ++rep.tracks_rejected;
      continue;
    }
    MsckfLinearization lin;
    try {
      lin = linearize_msckf_track(fs, *t, intrinsics, ext, opts.theta_min);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateGeometry && e.code() != ErrorCode::kNonConvergence &&
          e.code() != ErrorCode::kBehindCamera) {
        throw;
      }
      ++rep.tracks_rejected;
      continue;
    }
    WhitenedRows w{lin.residual * inv_sigma, lin.jacobian * inv_sigma};
    if (w.residual.size() == 0) {
      ++rep.tracks_rejected;
      continue;
    }
    if (opts.gate) {
      const double m2 = whitened_mahalanobis(w.residual, w.jacobian, fs.covariance);
      if (!(m2 < chi2_quantile(static_cast<int>(w.residual.size()), opts.chi2_confidence))) {
        ++rep.tracks_rejected;
        continue;
      }
    }
    parts.push_back(std::move(w));
    ++rep.tracks_used;
  }
  if (parts.empty()) {
    rep.status = UpdateStatus::kAllTracksRejected;
    return rep;
  }
  WhitenedRows rows = stack(parts, fs.dim());
  rep.rows = static_cast<int>(rows.residual.size());
  compress_rows(rows);
  const Gain gain = kalman_gain(fs.covariance, rows.jacobian);
  const VecX dx = -(gain.k * rows.residual);
  joseph(fs.covariance, gain);
  apply_correction(fs, dx);
  rep.iterations = 1;
  finish_report(rep, dx);
  return rep;
}

}  // namespace pogvins
