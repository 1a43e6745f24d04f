#include "pogvins/so3.hpp"

#include <cmath>

namespace pogvins {

Mat3 so3_exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = skew(w);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * k +
         ((1.0 - std::cos(theta)) / theta2) * k * k;
}

Vec3 so3_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

Mat3 orthonormalize(const Mat3& r) {
  return Eigen::Quaterniond(r).normalized().toRotationMatrix();
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  return Eigen::AngleAxisd(a * b.transpose()).angle();
}

Mat3 rot_x(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
}

Mat3 rot_y(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
}

Mat3 rot_z(double a) {
  return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

}  // namespace pogvins
