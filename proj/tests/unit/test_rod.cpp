#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "doctest.h"

#include "cisim/error.hpp"
#include "cisim/rod.hpp"

using namespace cisim;

namespace {

RodParams uniform_params(int elements = 8) {
  RodParams p;
  p.elements = elements;
  p.tip_diameter = p.base_diameter;
  return p;
}

// Sets every strain node to the same deviation.
VecX constant_strain(const RodModel& rod, const Twist& dxi) {
  VecX q = VecX::Zero(rod.dim());
  for (int k = 0; k < rod.nodes(); ++k) q.segment<6>(6 + 6 * k) = dxi;
  return q;
}

// Body twist of the frame at s for the velocity qdot, by central differences.
Twist fd_twist(const RodModel& rod, const Pose& gb, const VecX& q, const VecX& qdot, double s) {
  const double dt = 1e-6;
  const Pose g0 = rod_pose(rod, gb, q, s);
  const Pose gp = rod_pose(rod, gb, q + dt * qdot, s);
  const Pose gm = rod_pose(rod, gb, q - dt * qdot, s);
  return (log_se3(g0.inverse() * gp) - log_se3(g0.inverse() * gm)) / (2 * dt);
}

// Static equilibrium K q = J_tip^T w under a tip force fixed in space.
VecX solve_tip_load(const RodModel& rod, const Pose& gb, const Vec3& force) {
  const MatX K = rod.stiffness_matrix();
  const int n = rod.dim() - 6;
  VecX q = VecX::Zero(rod.dim());
  auto residual = [&](const VecX& qq) {
    const RodFrames fr = forward_kinematics(rod, gb, qq, {rod.length()}, true);
    Wrench w;
    w << Vec3::Zero(), fr.g[0].R.transpose() * force;
    return VecX((K * qq - fr.J[0].transpose() * w).tail(n));
  };
  for (int it = 0; it < 30; ++it) {
    const VecX r = residual(q);
    if (r.norm() < 1e-15) break;
    MatX Jr(n, n);
    for (int c = 0; c < n; ++c) {
      VecX qp = q;
      const double h = 1e-7;
      qp(6 + c) += h;
      Jr.col(c) = (residual(qp) - r) / h;
    }
    q.tail(n) -= Jr.partialPivLu().solve(r);
  }
  return q;
}

}  // namespace

TEST_CASE("basis_eval") {
  const RodModel rod(uniform_params(4));
  const auto& sig = rod.node_s();
  for (int k = 0; k < rod.nodes(); ++k) {
    const BasisWeights b = rod.basis(sig[static_cast<std::size_t>(k)]);
    const double wk = (b.element == k) ? b.w0 : (b.element + 1 == k ? b.w1 : 0.0);
    CHECK(wk == doctest::Approx(1.0));
  }
  const BasisWeights mid = rod.basis(0.5 * (sig[1] + sig[2]));
  CHECK(mid.element == 1);
  CHECK(mid.w0 == doctest::Approx(0.5));
  CHECK(mid.w1 == doctest::Approx(0.5));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, rod.length());
  for (int i = 0; i < 100; ++i) {
    const double s = u(rng);
    const Jacobian phi = rod.basis_matrix(s);
    // Row sums of the strain block are the partition of unity.
    CHECK(phi.row(0).sum() == doctest::Approx(1.0).epsilon(1e-15));
    // At most two diagonal 6x6 blocks are populated.
    CHECK((phi.array() != 0.0).count() <= 12);
  }
}

TEST_CASE("forward kinematics of straight and bent rods") {
  const RodModel straight(uniform_params());
  const RodFrames fr = forward_kinematics(straight, Pose(), VecX::Zero(straight.dim()),
                                          uniform_grid(straight.length(), 10), false);
  for (std::size_t i = 0; i < fr.s.size(); ++i) {
    CHECK((fr.g[i].p - Vec3(fr.s[i], 0, 0)).norm() < 1e-12);
    CHECK((fr.g[i].R - Mat3::Identity()).norm() < 1e-14);
  }

  RodParams p = uniform_params(16);
  p.length = 25.0;
  const RodModel rod(p);
  const double R = 10.0;
  Twist bend = Twist::Zero();
  bend(2) = 1.0 / R;
  const VecX q = constant_strain(rod, bend);
  const Pose tip = rod_pose(rod, Pose(), q, rod.length());
  const double th = rod.length() / R;
  CHECK((tip.p - Vec3(R * std::sin(th), R * (1 - std::cos(th)), 0)).norm() < 1e-6);
}

TEST_CASE("substep refinement converges at second order") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01(0.0, 1.0);
  RodParams p = uniform_params(4);
  VecX q = VecX::Zero(p.elements * 6 + 12);
  for (int k = 0; k < p.elements + 1; ++k) {
    for (int c = 0; c < 3; ++c) q(6 + 6 * k + c) = 0.08 * n01(rng);
    for (int c = 3; c < 6; ++c) q(6 + 6 * k + c) = 0.05 * n01(rng);
  }
  auto tip_at = [&](int m) {
    RodParams pp = p;
    pp.substeps = m;
    return rod_pose(RodModel(pp), Pose(), q, p.length).matrix();
  };
  const Mat4 ref = tip_at(256);
  double prev = (tip_at(2) - ref).norm();
  for (int m : {4, 8, 16}) {
    const double err = (tip_at(m) - ref).norm();
    CHECK(prev / err > 3.5);
    prev = err;
  }
}

TEST_CASE("geometric Jacobian") {
  const RodModel rod(RodParams{});
  const VecX q0 = VecX::Zero(rod.dim());
  const Jacobian J0 = geometric_jacobian(rod, Pose(), q0, 0.0);
  CHECK((J0.leftCols<6>() - Mat6::Identity()).norm() < 1e-15);
  CHECK(J0.rightCols(rod.dim() - 6).norm() == 0.0);

  VecX qd = VecX::Zero(rod.dim());
  qd(3) = 1.0;
  const RodFrames fr = forward_kinematics(rod, Pose(), q0, uniform_grid(rod.length(), 7), true);
  Twist ex;
  ex << 0, 0, 0, 1, 0, 0;
  for (const auto& J : fr.J) CHECK((J * qd - ex).norm() < 1e-13);

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n01(0.0, 1.0);
  const Pose gb = exp_se3((Twist() << 0.2, -0.1, 0.3, 1.0, 2.0, -1.0).finished());
  for (int trial = 0; trial < 5; ++trial) {
    VecX q = VecX::Zero(rod.dim());
    VecX v = VecX::Zero(rod.dim());
    for (int i = 0; i < rod.dim(); ++i) {
      q(i) = (i % 6 < 3 ? 0.05 : 0.02) * n01(rng);
      v(i) = n01(rng);
    }
    for (double s : {0.0, 3.3, 12.5, 20.01, 25.0}) {
      const Twist eta = geometric_jacobian(rod, gb, q, s) * v;
      const Twist fd = fd_twist(rod, gb, q, v, s);
      CHECK((eta - fd).norm() < 1e-5 * (1.0 + fd.norm()));
    }
  }
}

TEST_CASE("stiffness and damping assembly") {
  RodParams p = uniform_params(1);
  const RodModel rod(p);
  const MatX K = rod.stiffness_matrix();
  const Vec6 kc = rod.section_stiffness(0.0);
  const double h = rod.length();
  MatX expected = MatX::Zero(rod.dim(), rod.dim());
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      expected.block<6, 6>(6 + 6 * a, 6 + 6 * b).diagonal() = kc * (h / 6.0) * (a == b ? 2.0 : 1.0);
    }
  }
  CHECK((K - expected).norm() < 1e-12 * expected.norm());
  CHECK(K.topRows<6>().norm() == 0.0);
  CHECK(K.leftCols<6>().norm() == 0.0);

  const RodModel tapered{RodParams{}};
  const MatX Kt = tapered.stiffness_matrix();
  CHECK((Kt - Kt.transpose()).norm() == 0.0);
  Eigen::SelfAdjointEigenSolver<MatX> eig(Kt);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  CHECK((Kt * VecX::Zero(tapered.dim())).norm() == 0.0);

  // Strain relaxation rates are G/nu and E/nu; the slowest is 0.1 dt.
  const double dt = 0.05;
  const MatX D = tapered.damping_matrix(tapered.viscosity_for_step(dt));
  const int n = tapered.dim() - 6;
  Eigen::GeneralizedSelfAdjointEigenSolver<MatX> gen(Kt.bottomRightCorner(n, n), D.bottomRightCorner(n, n));
  CHECK(1.0 / gen.eigenvalues().minCoeff() == doctest::Approx(0.1 * dt).epsilon(1e-9));

  // Taper: bending stiffness decreases monotonically.
  double prev = 1e300;
  for (int i = 0; i <= 50; ++i) {
    const double ei = tapered.section_stiffness(tapered.length() * i / 50)(1);
    CHECK(ei < prev);
    prev = ei;
  }
}

TEST_CASE("cantilever matches Euler-Bernoulli and is objective") {
  RodParams p = uniform_params(8);
  const RodModel rod(p);
  const double EI = rod.section_stiffness(0.0)(1);
  const double L = rod.length();
  const double target = 0.015 * L;  // deflection 1.5% of the length
  const double F = 3.0 * EI * target / (L * L * L);
  const VecX q = solve_tip_load(rod, Pose(), Vec3(0, F, 0));
  const Pose tip = rod_pose(rod, Pose(), q, L);
  CHECK(std::abs(tip.p.y() - target) < 0.02 * target);

  // Rigidly moved base with the load rotated along: identical strains.
  const Pose gb = exp_se3((Twist() << 0.7, -0.3, 1.1, 5.0, -2.0, 3.0).finished());
  const VecX q2 = solve_tip_load(rod, gb, gb.R * Vec3(0, F, 0));
  CHECK((q2 - q).norm() < 1e-10 * q.norm() + 1e-14);
  CHECK((rod.stiffness_matrix() * (q2 - q)).norm() < 1e-10);
}

TEST_CASE("invalid rods") {
  RodParams p;
  p.elements = 0;
  CHECK_THROWS_AS(RodModel{p}, InvalidArgument);
  const RodModel rod{RodParams{}};
  CHECK_THROWS_AS(forward_kinematics(rod, Pose(), VecX::Zero(3), {0.0}, false), DimensionMismatch);
  VecX q = VecX::Zero(rod.dim());
  CHECK(rod.strain_admissible(q));
  q(6 + 3) = -2.0;
  CHECK(!rod.strain_admissible(q));
}
