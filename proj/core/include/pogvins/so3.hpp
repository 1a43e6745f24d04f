#pragma once

#include <Eigen/Geometry>

#include "pogvins/types.hpp"

namespace pogvins {

/// Cross-product matrix: skew(a) * b == a.cross(b).
inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

/// Rodrigues exponential of a rotation vector.
Mat3 so3_exp(const Vec3& rotation_vector);

/// Inverse of so3_exp; returns the rotation vector with angle in [0, pi].
Vec3 so3_log(const Mat3& rotation);

/// Projects a nearly orthonormal matrix back onto SO(3).
Mat3 orthonormalize(const Mat3& rotation);

/// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r.transpose() * r - Mat3::Identity()).norm() < tol &&
         std::abs(r.determinant() - 1.0) < tol;
}

Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

}  // namespace pogvins
