#include "pogvins/po_geometry.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "pogvins/errors.hpp"
#include "pogvins/so3.hpp"

namespace pogvins {

namespace {

const CameraPose& lookup(const CameraPoseMap& poses, CloneId id) {
  const auto it = poses.find(id);
  if (it == poses.end()) {
    throw Error(ErrorCode::kInvalidArgument, "no camera pose for clone " + std::to_string(id));
  }
  return it->second;
}

const FeatureObservation& lookup(const FeatureTrack& track, CloneId id) {
  const auto it = track.observations.find(id);
  if (it == track.observations.end()) {
    throw Error(ErrorCode::kInvalidArgument, "feature " + std::to_string(track.feature_id) +
                                                 " not observed in clone " + std::to_string(id));
  }
  return it->second;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& q, double fx, double fy) {
  const double inv_z = 1.0 / q.z();
  Eigen::Matrix<double, 2, 3> j;
  j << fx * inv_z, 0.0, -fx * q.x() * inv_z * inv_z,
       0.0, fy * inv_z, -fy * q.y() * inv_z * inv_z;
  return j;
}

// Two-ray linear triangulation; returns the midpoint of closest approach.
Vec3 two_view_point(const CameraPose& ci, const CameraPose& cj, const NormalizedBearing& pi,
                    const NormalizedBearing& pj) {
  const Vec3 a = ci.rotation * pi.homogeneous();
  const Vec3 b = cj.rotation * pj.homogeneous();
  Eigen::Matrix<double, 3, 2> m;
  m.col(0) = a;
  m.col(1) = -b;
  const Eigen::Vector2d z = m.colPivHouseholderQr().solve(cj.position - ci.position);
  return 0.5 * ((ci.position + z(0) * a) + (cj.position + z(1) * b));
}

}  // namespace

CameraPose CameraPose::perturbed(const Vec3& dr, const Vec3& phi) const {
  return {so3_exp(phi) * rotation, position - dr};
}

bool NormalizedBearing::valid() const {
  return std::isfinite(x) && std::isfinite(y) && std::abs(x) < 10.0 && std::abs(y) < 10.0;
}

Vec2 CameraIntrinsics::project(const Vec3& q) const {
  return {fx * q.x() / q.z() + cx, fy * q.y() / q.z() + cy};
}

RelativePose relative_transform(const CameraPose& pose_i, const CameraPose& pose_j) {
  return {pose_j.rotation.transpose() * pose_i.rotation,
          pose_j.rotation.transpose() * (pose_i.position - pose_j.position)};
}

double parallax_theta(const RelativePose& rel, const NormalizedBearing& p_i,
                      const NormalizedBearing& p_j) {
  return p_j.homogeneous().cross(rel.rotation_ij * p_i.homogeneous()).norm();
}

PoDepthPair po_depths(const RelativePose& rel, const NormalizedBearing& p_i,
                      const NormalizedBearing& p_j, double theta_min) {
  const Vec3 pj = p_j.homogeneous();
  const Vec3 rotated_pi = rel.rotation_ij * p_i.homogeneous();
  const double theta = pj.cross(rotated_pi).norm();
  if (!(theta >= theta_min)) {
    throw Error(ErrorCode::kDegenerateGeometry, "parallax below threshold");
  }
  PoDepthPair out;
  out.base_i = {pj.cross(rel.translation_ji).norm() / theta, theta};
  out.base_j = {rotated_pi.cross(rel.translation_ji).norm() / theta, theta};
  return out;
}

BasePair select_base_frames(const FeatureTrack& track, const CameraPoseMap& poses,
                            double theta_min) {
  if (track.observations.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "base-frame selection needs at least two views");
  }
  // Compare in the world frame so theta(i, j) and theta(j, i) are bitwise equal.
  std::vector<std::pair<CloneId, Vec3>> rays;
  rays.reserve(track.observations.size());
  for (const auto& [id, obs] : track.observations) {
    rays.emplace_back(id, lookup(poses, id).rotation * obs.bearing.homogeneous());
  }
  double best = -1.0;
  BasePair pair;
  for (std::size_t a = 0; a < rays.size(); ++a) {
    for (std::size_t b = a + 1; b < rays.size(); ++b) {
      const double theta = rays[a].second.cross(rays[b].second).norm();
      // Strict improvement beyond rounding noise; otherwise keep the earlier (smaller) pair.
      if (theta > best * (1.0 + 1e-12)) {
        best = theta;
        pair = {rays[a].first, rays[b].first};
      }
    }
  }
  if (best < theta_min) {
    throw Error(ErrorCode::kDegenerateGeometry,
                "feature " + std::to_string(track.feature_id) + " has no pair above theta_min");
  }
  return pair;
}

PoEvaluation evaluate_po(const CameraPose& pose_i, const CameraPose& pose_j,
                         const CameraPose& pose_l, bool target_is_j,
                         const NormalizedBearing& p_i, const NormalizedBearing& p_j,
                         const Vec2& measured_pixel, const CameraIntrinsics& k,
                         bool with_jacobians, double theta_min) {
  const RelativePose rel_ij = relative_transform(pose_i, pose_j);
  const RelativePose rel_il = relative_transform(pose_i, pose_l);
  const Vec3 pi = p_i.homogeneous();
  const Vec3 pj = p_j.homogeneous();

  const double theta = pj.cross(rel_ij.rotation_ij * pi).norm();
  if (!(theta >= theta_min)) {
    throw Error(ErrorCode::kDegenerateGeometry, "parallax below threshold");
  }
  const double alpha = pj.cross(rel_ij.translation_ji).norm();

  PoEvaluation out;
  out.predicted = alpha * (rel_il.rotation_ij * pi) + theta * rel_il.translation_ji;
  if (!(out.predicted.z() > 0.0)) {
    throw Error(ErrorCode::kBehindCamera, "PO prediction behind the image plane");
  }
  out.residual = k.project(out.predicted) - measured_pixel;
  if (!with_jacobians) {
    return out;
  }

  // Same quantities in the world frame: Y_l = R_l^T (alpha a + theta (r_i - r_l)).
  const Vec3 a = pose_i.rotation * pi;
  const Vec3 b = pose_j.rotation * pj;
  const Vec3 delta = pose_i.position - pose_j.position;
  const Vec3 delta_l = pose_i.position - pose_l.position;
  const Vec3 c = b.cross(delta);
  const Vec3 s = b.cross(a);
  const Vec3 w = alpha * a + theta * delta_l;
  const Mat3 a_hat = skew(a);
  const Mat3 b_hat = skew(b);

  const Eigen::Matrix<double, 2, 3> de_dy = projection_jacobian(out.predicted, k.fx, k.fy);
  const Mat3 rl_t = pose_l.rotation.transpose();

  // alpha = 0 happens only when r_i == r_j; its gradient is then undefined and the
  // depth-dependent terms vanish anyway.
  const Eigen::RowVector3d dalpha_dc =
      alpha > 0.0 ? Eigen::RowVector3d(c.transpose() / alpha) : Eigen::RowVector3d::Zero();
  const Eigen::RowVector3d dtheta_ds = s.transpose() / theta;

  const Mat3 dy_dri = rl_t * (-a * (dalpha_dc * b_hat) - theta * Mat3::Identity());
  const Mat3 dy_dphii = rl_t * (-alpha * a_hat - delta_l * (dtheta_ds * b_hat * a_hat));
  const Mat3 dy_drj = rl_t * (a * (dalpha_dc * b_hat));
  const Mat3 dy_dphij =
      rl_t * (a * (dalpha_dc * skew(delta) * b_hat) + delta_l * (dtheta_ds * a_hat * b_hat));
  const Mat3 dy_drl = theta * rl_t;
  const Mat3 dy_dphil = rl_t * skew(w);

  out.jac_i.leftCols<3>() = de_dy * dy_dri;
  out.jac_i.rightCols<3>() = de_dy * dy_dphii;
  out.jac_j.leftCols<3>() = de_dy * dy_drj;
  out.jac_j.rightCols<3>() = de_dy * dy_dphij;
  Mat26 jl;
  jl.leftCols<3>() = de_dy * dy_drl;
  jl.rightCols<3>() = de_dy * dy_dphil;
  if (target_is_j) {
    out.jac_j += jl;
  } else {
    out.jac_l = jl;
  }

  // Bearing sensitivities, camera-frame form.
  const Vec3 q = rel_ij.rotation_ij * pi;
  const Vec3 s_c = pj.cross(q);
  const Vec3 u = pj.cross(rel_ij.translation_ji);
  const Eigen::RowVector3d dth_dpi = (s_c.transpose() / theta) * skew(pj) * rel_ij.rotation_ij;
  const Eigen::RowVector3d dth_dpj = -(s_c.transpose() / theta) * skew(q);
  const Eigen::RowVector3d dal_dpj = alpha > 0.0
                                         ? Eigen::RowVector3d(-(u.transpose() / alpha) *
                                                              skew(rel_ij.translation_ji))
                                         : Eigen::RowVector3d::Zero();
  const Mat3 dy_dpi = alpha * rel_il.rotation_ij + rel_il.translation_ji * dth_dpi;
  const Mat3 dy_dpj = (rel_il.rotation_ij * pi) * dal_dpj + rel_il.translation_ji * dth_dpj;
  out.jac_bearing_i = de_dy * dy_dpi.leftCols<2>();
  out.jac_bearing_j = de_dy * dy_dpj.leftCols<2>();
  return out;
}

namespace {

PoEvaluation evaluate_track(const FeatureTrack& track, const BasePair& base, CloneId target,
                            const CameraPoseMap& poses, const CameraIntrinsics& intrinsics,
                            bool with_jacobians, double theta_min) {
  if (target == base.i) {
    throw Error(ErrorCode::kInvalidArgument, "PO residual undefined at base frame i");
  }
  const auto& obs_i = lookup(track, base.i);
  const auto& obs_j = lookup(track, base.j);
  const auto& obs_l = lookup(track, target);
  return evaluate_po(lookup(poses, base.i), lookup(poses, base.j), lookup(poses, target),
                     target == base.j, obs_i.bearing, obs_j.bearing, obs_l.pixel, intrinsics,
                     with_jacobians, theta_min);
}

}  // namespace

Vec2 po_residual(const FeatureTrack& track, const BasePair& base, CloneId target,
                 const CameraPoseMap& poses, const CameraIntrinsics& intrinsics,
                 double theta_min) {
  return evaluate_track(track, base, target, poses, intrinsics, false, theta_min).residual;
}

PoEvaluation po_jacobians(const FeatureTrack& track, const BasePair& base, CloneId target,
                          const CameraPoseMap& poses, const CameraIntrinsics& intrinsics,
                          double theta_min) {
  return evaluate_track(track, base, target, poses, intrinsics, true, theta_min);
}

CameraPose body_pose_to_camera(const Mat3& body_rotation, const Vec3& body_position,
                               const CameraExtrinsics& ext) {
  return {body_rotation * ext.rotation_bc.transpose(),
          body_position + body_rotation * ext.lever_arm};
}

std::pair<Mat3, Vec3> camera_pose_to_body(const CameraPose& camera, const CameraExtrinsics& ext) {
  const Mat3 body_rotation = camera.rotation * ext.rotation_bc;
  return {body_rotation, camera.position - body_rotation * ext.lever_arm};
}

Mat26 camera_to_body_jacobian(const Mat26& jac_camera, const Mat3& body_rotation,
                              const CameraExtrinsics& ext) {
  // Camera error from body error: dr_c = dr_b + [R_b l_c]x phi, phi_c = phi_b.
  Mat26 out;
  out.leftCols<3>() = jac_camera.leftCols<3>();
  out.rightCols<3>() = jac_camera.leftCols<3>() * skew(body_rotation * ext.lever_arm) +
                       jac_camera.rightCols<3>();
  return out;
}

Vec3 triangulate(const FeatureTrack& track, const CameraPoseMap& poses, double theta_min) {
  const BasePair base = select_base_frames(track, poses, theta_min);
  Vec3 point = two_view_point(lookup(poses, base.i), lookup(poses, base.j),
                              lookup(track, base.i).bearing, lookup(track, base.j).bearing);
  if (!point.allFinite()) {
    throw Error(ErrorCode::kDegenerateGeometry, "two-view initialization failed");
  }

  constexpr int kMaxIterations = 20;
  double step_norm = 0.0;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    Mat3 normal = Mat3::Zero();
    Vec3 gradient = Vec3::Zero();
    for (const auto& [id, obs] : track.observations) {
      const CameraPose& pose = lookup(poses, id);
      const Vec3 q = pose.to_camera(point);
      if (!(q.z() > 0.0)) {
        throw Error(ErrorCode::kNonConvergence, "triangulated point behind a camera");
      }
      const Vec2 e(q.x() / q.z() - obs.bearing.x, q.y() / q.z() - obs.bearing.y);
      const Eigen::Matrix<double, 2, 3> j =
          projection_jacobian(q, 1.0, 1.0) * pose.rotation.transpose();
      normal += j.transpose() * j;
      gradient += j.transpose() * e;
    }
    const Vec3 step = -normal.ldlt().solve(gradient);
    if (!step.allFinite()) {
      throw Error(ErrorCode::kDegenerateGeometry, "singular triangulation normal equations");
    }
    point += step;
    step_norm = step.norm();
    if (step_norm < 1e-10) {
      return point;
    }
  }
  if (step_norm > 1e-6) {
    throw Error(ErrorCode::kNonConvergence, "triangulation did not converge");
  }
  return point;
}

Reprojection reproject(const Vec3& world_point, const CameraPose& pose,
                       const Vec2& measured_pixel, const CameraIntrinsics& k) {
  const Vec3 q = pose.to_camera(world_point);
  if (!(q.z() > 0.0)) {
    throw Error(ErrorCode::kBehindCamera, "point behind camera");
  }
  Reprojection out;
  out.residual = k.project(q) - measured_pixel;
  const Eigen::Matrix<double, 2, 3> dp = projection_jacobian(q, k.fx, k.fy);
  const Mat3 rt = pose.rotation.transpose();
  out.jac_point = dp * rt;
  out.jac_pose.leftCols<3>() = dp * rt;
  out.jac_pose.rightCols<3>() = dp * rt * skew(world_point - pose.position);
  return out;
}

}  // namespace pogvins
