#pragma once

#include <cstdint>

#include <Eigen/Core>

namespace pogvins {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using Mat15x12 = Eigen::Matrix<double, 15, 12>;

/// Identifies a cloned pose in the sliding window. Equal to the camera frame index.
using CloneId = std::int64_t;
using FeatureId = std::int64_t;
/// Satellite PRN-style identifier.
using SatId = int;

}  // namespace pogvins
