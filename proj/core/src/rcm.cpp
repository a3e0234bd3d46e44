#include "cisim/rcm.hpp"

#include "cisim/error.hpp"

namespace cisim {

Pose rcm_base_pose(const RcmState& rcm) {
  if (rcm.d_a < 0.0) throw InvalidArgument("rcm_base_pose: d_a must be non-negative");
  return Pose(rcm.R_b, rcm.p_a) * trans_x(-rcm.d_a);
}

double rcm_violation(const RcmState& rcm, const Pose& g_b) {
  return ((rcm.p_a - g_b.p) - rcm.d_a * g_b.R.col(0)).norm();
}

RcmTwistMaps rcm_twist_maps(double d_a) {
  RcmTwistMaps m;
  m.G_omega.setZero();
  m.G_omega.topRows<3>().setIdentity();
  m.G_omega(4, 2) = -d_a;
  m.G_omega(5, 1) = d_a;
  m.G_v.setZero();
  m.G_v(3) = 1.0;
  return m;
}

}  // namespace cisim
