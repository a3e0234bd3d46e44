#pragma once

// Remote-center-of-motion kinematics of the insertion tool. The tool axis
// (base x axis) always passes through the pivot p_a at distance d_a.

#include "cisim/liegroup.hpp"

namespace cisim {

struct RcmState {
  Vec3 p_a = Vec3::Zero();      // pivot (mm)
  Mat3 R_b = Mat3::Identity();  // base orientation
  double d_a = 0.0;             // base-to-pivot distance along the axis (mm)
  double v_par = 1.0;           // axial speed (mm/s)
  Vec3 omega_b = Vec3::Zero();  // commanded body angular velocity (rad/s)

  Vec3 axis() const { return R_b.col(0); }
};

/// g_b = [R_b, p_a] * trans_x(-d_a).
Pose rcm_base_pose(const RcmState& rcm);

/// |(p_a - p_b) - d_a R_b e_x|.
double rcm_violation(const RcmState& rcm, const Pose& g_b);

/// Base body twist eta_b = G_omega omega_b + G_v v_par.
struct RcmTwistMaps {
  Eigen::Matrix<double, 6, 3> G_omega;
  Vec6 G_v;
};
RcmTwistMaps rcm_twist_maps(double d_a);

}  // namespace cisim
