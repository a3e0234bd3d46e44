#pragma once

#include "cisim/liegroup.hpp"

namespace cisim {

/// Cross-section descriptor at one arc-length station of the lumen centerline.
struct StationSample {
  double s = 0.0;               // arc length (mm)
  Vec3 r = Vec3::Zero();        // centerline position (mm)
  Vec3 t = Vec3::UnitX();       // unit tangent
  double a = 0.0;               // effective radius, half the major extent (mm)
  Vec3 p_minus = Vec3::Zero();  // extremal contour points along the major axis
  Vec3 p_plus = Vec3::Zero();
  double anisotropy = 0.0;      // lambda2 / lambda1 of the in-plane covariance
};

}  // namespace cisim
