#include "pogvins/earth.hpp"

#include <cmath>
#include <numbers>

#include "pogvins/errors.hpp"
#include "pogvins/so3.hpp"

namespace pogvins {

void EarthParams::validate() const {
  if (!(semi_major_axis > 0.0 && flattening > 0.0 && flattening < 0.01 &&
        earth_rotation_rate > 0.0 && mu > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "earth parameters out of range");
  }
}

Vec3 lla_to_ecef(const GeodeticCoord& g, const EarthParams& p) {
  const double e2 = p.eccentricity_sq();
  const double sin_lat = std::sin(g.latitude);
  const double cos_lat = std::cos(g.latitude);
  const double n = p.semi_major_axis / std::sqrt(1.0 - e2 * sin_lat * sin_lat);
  return {(n + g.height) * cos_lat * std::cos(g.longitude),
          (n + g.height) * cos_lat * std::sin(g.longitude),
          (n * (1.0 - e2) + g.height) * sin_lat};
}

GeodeticCoord ecef_to_lla(const Vec3& r, const EarthParams& p) {
  const double norm = r.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kInvalidArgument, "ecef_to_lla: position must be finite and nonzero");
  }
  const double e2 = p.eccentricity_sq();
  const double a = p.semi_major_axis;
  const double rho = std::hypot(r.x(), r.y());

  GeodeticCoord out;
  out.longitude = std::atan2(r.y(), r.x());

  // Near the pole the latitude-from-rho iteration degenerates; solve in terms of z instead.
  double lat = std::atan2(r.z(), rho * (1.0 - e2));
  for (int iter = 0; iter < 10; ++iter) {
    const double sin_lat = std::sin(lat);
    const double n = a / std::sqrt(1.0 - e2 * sin_lat * sin_lat);
    const double next = std::atan2(r.z() + n * e2 * sin_lat, rho);
    const double delta = std::abs(next - lat);
    lat = next;
    if (delta < 1e-12) {
      const double s = std::sin(lat);
      const double c = std::cos(lat);
      const double nn = a / std::sqrt(1.0 - e2 * s * s);
      out.latitude = lat;
      out.height = (std::abs(c) > 1e-3) ? rho / c - nn : r.z() / s - nn * (1.0 - e2);
      return out;
    }
  }
  throw Error(ErrorCode::kNonConvergence, "ecef_to_lla: latitude iteration did not converge");
}

Mat3 enu_to_ecef_rotation(const GeodeticCoord& g) {
  const double sl = std::sin(g.latitude), cl = std::cos(g.latitude);
  const double so = std::sin(g.longitude), co = std::cos(g.longitude);
  Mat3 c;
  c << -so, -sl * co, cl * co,
        co, -sl * so, cl * so,
        0.0, cl, sl;
  return c;
}

Vec3 gravity_ecef(const Vec3& r, const EarthParams& p) {
  const double r2 = r.squaredNorm();
  const double rn = std::sqrt(r2);
  const double z_ratio2 = (r.z() * r.z()) / r2;
  const double a_r = p.semi_major_axis / rn;
  const double k = 1.5 * p.j2 * a_r * a_r;

  // J2 gravitation.
  Vec3 gamma;
  const double scale = -p.mu / (r2 * rn);
  gamma.x() = scale * r.x() * (1.0 + k * (1.0 - 5.0 * z_ratio2));
  gamma.y() = scale * r.y() * (1.0 + k * (1.0 - 5.0 * z_ratio2));
  gamma.z() = scale * r.z() * (1.0 + k * (3.0 - 5.0 * z_ratio2));

  const double w2 = p.earth_rotation_rate * p.earth_rotation_rate;
  return gamma + Vec3(w2 * r.x(), w2 * r.y(), 0.0);
}

Mat3 gravity_gradient(const Vec3& r, const EarthParams& p) {
  const double rn = r.norm();
  const Vec3 u = r / rn;
  const double k = p.mu / (rn * rn * rn);
  const Vec3 w = p.rotation_vector();
  Mat3 n = k * (3.0 * u * u.transpose() - Mat3::Identity());
  n += w.squaredNorm() * Mat3::Identity() - w * w.transpose();
  return 0.5 * (n + n.transpose());
}

}  // namespace pogvins
