#pragma once

#include <map>
#include <optional>
#include <utility>

#include "pogvins/types.hpp"

namespace pogvins {

/// Default parallax gate. Pairs whose bearing cross-product magnitude falls below this
/// are treated as pure rotation or a feature at infinity.
inline constexpr double kDefaultThetaMin = 1e-4;

/// Camera-to-world pose.
///
/// Error convention (shared with the filter): a pose error (dr, phi) relates the
/// estimate to the truth by `position_true = position - dr` and
/// `rotation_true = Exp(phi) * rotation`.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();

  CameraPose perturbed(const Vec3& dr, const Vec3& phi) const;
  /// World point expressed in this camera frame.
  Vec3 to_camera(const Vec3& world_point) const {
    return rotation.transpose() * (world_point - position);
  }
};

/// Normalized image coordinate (x, y, 1).
struct NormalizedBearing {
  double x = 0.0;
  double y = 0.0;

  Vec3 homogeneous() const { return {x, y, 1.0}; }
  bool valid() const;
};

struct RelativePose {
  Mat3 rotation_ij = Mat3::Identity();  // R_j^T R_i
  Vec3 translation_ji = Vec3::Zero();   // R_j^T (r_i - r_j)
};

struct PoDepth {
  double depth = 0.0;
  double theta = 0.0;
};

struct PoDepthPair {
  PoDepth base_i;
  PoDepth base_j;
};

struct CameraIntrinsics {
  double fx = 640.0;
  double fy = 640.0;
  double cx = 640.0;
  double cy = 512.0;

  Vec2 project(const Vec3& camera_point) const;
  Vec2 to_pixel(const NormalizedBearing& b) const { return {fx * b.x + cx, fy * b.y + cy}; }
  NormalizedBearing to_bearing(const Vec2& pixel) const {
    return {(pixel.x() - cx) / fx, (pixel.y() - cy) / fy};
  }
};

struct CameraExtrinsics {
  Vec3 lever_arm = Vec3::Zero();          // camera origin in the body frame
  Mat3 rotation_bc = Mat3::Identity();    // rotates body-frame vectors into the camera frame
};

struct FeatureObservation {
  NormalizedBearing bearing;
  Vec2 pixel = Vec2::Zero();
};

struct BasePair {
  CloneId i = 0;
  CloneId j = 0;
  bool operator==(const BasePair&) const = default;
};

struct FeatureTrack {
  FeatureId feature_id = 0;
  std::map<CloneId, FeatureObservation> observations;
  std::optional<BasePair> base_pair;
};

using CameraPoseMap = std::map<CloneId, CameraPose>;

RelativePose relative_transform(const CameraPose& pose_i, const CameraPose& pose_j);

/// Parallax indicator |p_j^ R_i^j p_i|. Symmetric in (i, j).
double parallax_theta(const RelativePose& rel, const NormalizedBearing& p_i,
                      const NormalizedBearing& p_j);

/// Depths of the feature in frames i and j expressed purely through the relative pose.
/// Throws DegenerateGeometry when theta < theta_min.
PoDepthPair po_depths(const RelativePose& rel, const NormalizedBearing& p_i,
                      const NormalizedBearing& p_j, double theta_min = kDefaultThetaMin);

/// Pair of observing frames with maximal parallax; ties go to the lexicographically
/// smallest (i, j). Since theta is symmetric the result always has i < j.
BasePair select_base_frames(const FeatureTrack& track, const CameraPoseMap& poses,
                            double theta_min = kDefaultThetaMin);

/// Raw PO prediction/residual evaluation for one target frame.
struct PoEvaluation {
  Vec2 residual = Vec2::Zero();   // predicted pixel minus measured pixel
  Vec3 predicted = Vec3::Zero();  // Y_l
  Mat26 jac_i = Mat26::Zero();
  Mat26 jac_j = Mat26::Zero();
  Mat26 jac_l = Mat26::Zero();    // zero when target == j (folded into jac_j)
  // Residual w.r.t. the normalized base bearings (x, y) of frames i and j.
  Eigen::Matrix2d jac_bearing_i = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d jac_bearing_j = Eigen::Matrix2d::Zero();
};

/// Residual of target frame `l` given base frames (i, j). Throws BehindCamera when
/// the prediction lands behind the image plane and DegenerateGeometry when theta < theta_min.
PoEvaluation evaluate_po(const CameraPose& pose_i, const CameraPose& pose_j,
                         const CameraPose& pose_l, bool target_is_j,
                         const NormalizedBearing& p_i, const NormalizedBearing& p_j,
                         const Vec2& measured_pixel, const CameraIntrinsics& intrinsics,
                         bool with_jacobians, double theta_min = kDefaultThetaMin);

Vec2 po_residual(const FeatureTrack& track, const BasePair& base, CloneId target,
                 const CameraPoseMap& poses, const CameraIntrinsics& intrinsics,
                 double theta_min = kDefaultThetaMin);

/// Jacobians of po_residual w.r.t. the (dr, phi) errors of frames i, j and l.
/// When target == j the j and l contributions are summed into jac_j and jac_l is zero.
PoEvaluation po_jacobians(const FeatureTrack& track, const BasePair& base, CloneId target,
                          const CameraPoseMap& poses, const CameraIntrinsics& intrinsics,
                          double theta_min = kDefaultThetaMin);

CameraPose body_pose_to_camera(const Mat3& body_rotation, const Vec3& body_position,
                               const CameraExtrinsics& ext);
std::pair<Mat3, Vec3> camera_pose_to_body(const CameraPose& camera, const CameraExtrinsics& ext);

/// Maps a 2x6 Jacobian w.r.t. camera pose error to one w.r.t. the body pose error.
Mat26 camera_to_body_jacobian(const Mat26& jac_camera, const Mat3& body_rotation,
                              const CameraExtrinsics& ext);

/// Gauss-Newton multi-view triangulation in normalized coordinates, initialized from a
/// linear two-view solution on the maximal-parallax pair.
Vec3 triangulate(const FeatureTrack& track, const CameraPoseMap& poses,
                 double theta_min = kDefaultThetaMin);

/// Pixel reprojection of a world point together with its Jacobians w.r.t. the point and
/// the camera pose error.
struct Reprojection {
  Vec2 residual = Vec2::Zero();  // predicted minus measured
  Eigen::Matrix<double, 2, 3> jac_point = Eigen::Matrix<double, 2, 3>::Zero();
  Mat26 jac_pose = Mat26::Zero();
};

Reprojection reproject(const Vec3& world_point, const CameraPose& pose,
                       const Vec2& measured_pixel, const CameraIntrinsics& intrinsics);

}  // namespace pogvins
