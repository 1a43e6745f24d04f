#pragma once

#include "pogvins/types.hpp"

namespace pogvins {

/// Reference ellipsoid and rotation constants. Defaults are WGS-84.
struct EarthParams {
  double semi_major_axis = 6378137.0;           // m
  double flattening = 1.0 / 298.257223563;
  double earth_rotation_rate = 7.2921151467e-5;  // rad/s
  double mu = 3.986004418e14;                    // m^3/s^2
  double j2 = 1.082627e-3;

  double semi_minor_axis() const { return semi_major_axis * (1.0 - flattening); }
  double eccentricity_sq() const { return flattening * (2.0 - flattening); }
  Vec3 rotation_vector() const { return {0.0, 0.0, earth_rotation_rate}; }
  void validate() const;
};

struct GeodeticCoord {
  double latitude = 0.0;   // rad
  double longitude = 0.0;  // rad
  double height = 0.0;     // m
};

Vec3 lla_to_ecef(const GeodeticCoord& g, const EarthParams& p = {});

/// Iterative latitude solve. Throws NonConvergence if 10 iterations do not reach 1e-12 rad.
GeodeticCoord ecef_to_lla(const Vec3& position, const EarthParams& p = {});

/// Rotation taking local east-north-up vectors into ECEF.
Mat3 enu_to_ecef_rotation(const GeodeticCoord& g);

/// Normal gravity (gravitation with J2 plus centrifugal) resolved in ECEF, m/s^2.
Vec3 gravity_ecef(const Vec3& position, const EarthParams& p = {});

/// d(gravity)/d(position) in ECEF, central-field gravitation plus the centrifugal term.
Mat3 gravity_gradient(const Vec3& position, const EarthParams& p = {});

}  // namespace pogvins
