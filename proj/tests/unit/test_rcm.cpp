#include <random>

#include "doctest.h"

#include "cisim/rcm.hpp"

using namespace cisim;

TEST_CASE("base pose sits d_a behind the pivot") {
  RcmState rcm;
  rcm.d_a = 5.0;
  CHECK((rcm_base_pose(rcm).p - Vec3(-5.0, 0.0, 0.0)).norm() < 1e-15);
  rcm.d_a = 0.0;
  rcm.p_a = Vec3(1.0, 2.0, 3.0);
  CHECK((rcm_base_pose(rcm).p - rcm.p_a).norm() < 1e-15);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01;
  for (int i = 0; i < 100; ++i) {
    rcm.R_b = exp_so3(Vec3(n01(rng), n01(rng), n01(rng)));
    rcm.p_a = Vec3(n01(rng), n01(rng), n01(rng));
    rcm.d_a = std::abs(n01(rng)) * 10.0;
    const Pose g = rcm_base_pose(rcm);
    CHECK(((rcm.p_a - g.p) - rcm.d_a * rcm.R_b.col(0)).norm() < 1e-12);
    CHECK(rcm_violation(rcm, g) < 1e-12);
    CHECK((g.R - rcm.R_b).norm() == 0.0);
  }
}

TEST_CASE("twist maps") {
  RcmTwistMaps m = rcm_twist_maps(2.0);
  Vec6 eta = m.G_omega * Vec3(0, 0, 1);
  Vec6 expect;
  expect << 0, 0, 1, 0, -2, 0;
  CHECK((eta - expect).norm() == 0.0);
  expect << 0, 0, 0, 1, 0, 0;
  CHECK((m.G_v - expect).norm() == 0.0);

  m = rcm_twist_maps(0.0);
  Eigen::Matrix<double, 6, 3> pivot = Eigen::Matrix<double, 6, 3>::Zero();
  pivot.topRows<3>().setIdentity();
  CHECK((m.G_omega - pivot).norm() == 0.0);
}

TEST_CASE("twist maps keep the axis through the pivot to first order") {
  // Finite-difference oracle: integrate the body twist for a short time and
  // check that the pivot stays on the new axis at the new distance.
  RcmState rcm;
  rcm.R_b = exp_so3(Vec3(0.2, -0.1, 0.4));
  rcm.p_a = Vec3(1.0, -2.0, 0.5);
  rcm.d_a = 3.0;
  const Vec3 omega(0.3, -0.5, 0.8);
  const double v = 1.0, h = 1e-6;
  const RcmTwistMaps m = rcm_twist_maps(rcm.d_a);
  const Vec6 eta = m.G_omega * omega + m.G_v * v;
  const Pose g1 = rcm_base_pose(rcm) * exp_se3(eta, h);
  RcmState next = rcm;
  next.R_b = g1.R;
  next.d_a = rcm.d_a - v * h;
  CHECK(rcm_violation(next, g1) < 1e-10);
}
