#pragma once

// Exact SE(3)/SO(3) kernel. Twists and wrenches are ordered
// [angular(3); linear(3)] everywhere in the library.

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cisim {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Body strain / body velocity: [kappa or omega; epsilon or v].
using Twist = Vec6;
/// Load: [torque; force].
using Wrench = Vec6;

/// Rigid transform (R, p) on SE(3).
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();

  Pose() = default;
  Pose(const Mat3& rotation, const Vec3& position) : R(rotation), p(position) {}

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m);
  static Pose translation(const Vec3& p) { return {Mat3::Identity(), p}; }

  Mat4 matrix() const;
  Pose inverse() const { return {R.transpose(), -R.transpose() * p}; }
  Vec3 apply(const Vec3& x) const { return R * x + p; }

  /// RᵀR = I and det R = +1 within `tol`.
  bool is_valid(double tol = 1e-10) const;

  friend Pose operator*(const Pose& a, const Pose& b) {
    return {a.R * b.R, a.R * b.p + a.p};
  }
};

/// Cut-off below which exp_se3 switches to its Taylor branch.
inline constexpr double kSmallAngle = 1e-6;

Mat3 skew(const Vec3& v);
Vec3 unskew(const Mat3& m);

Mat4 hat(const Twist& xi);
/// Throws InvalidArgument if `m` is not in se(3) within 1e-9.
Twist vee(const Mat4& m);

Mat3 exp_so3(const Vec3& phi);
/// Throws NearPiRotation when the rotation angle is >= pi - 1e-6.
Vec3 log_so3(const Mat3& R);

/// exp(hat(xi) * ell), closed-form Rodrigues + V matrix.
Pose exp_se3(const Twist& xi, double ell = 1.0);
/// Inverse of exp_se3(., 1). Throws NearPiRotation near angle pi.
Twist log_se3(const Pose& g);

/// Ad_g = [[R, 0], [p~R, R]].
Mat6 adjoint_pose(const Pose& g);
/// ad_xi = [[k~, 0], [e~, k~]].
Mat6 adjoint_twist(const Twist& xi);

/// Right Jacobian of the SE(3) exponential:
/// exp(x + d) = exp(x) * exp(T(x) d) + O(|d|^2).
Mat6 dexp_right(const Twist& x);

/// Pure translation by d along the local x axis.
inline Pose trans_x(double d) { return Pose::translation(Vec3(d, 0.0, 0.0)); }

}  // namespace cisim
