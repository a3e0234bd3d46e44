#include "cisim/liegroup.hpp"

#include <cmath>
#include <numbers>

#include "cisim/error.hpp"

namespace cisim {

namespace {

// Below this angle the trigonometric coefficients are evaluated from their
// Taylor series; the closed forms lose digits to cancellation there.
constexpr double kSeriesAngle = 0.5;

// sin(t)/t
double coef_a(double t) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return 1.0 + t2 * (-1.0 / 6 + t2 * (1.0 / 120 + t2 * (-1.0 / 5040 + t2 * (1.0 / 362880 +
                 t2 * (-1.0 / 39916800 + t2 / 6227020800.0)))));
  }
  return std::sin(t) / t;
}

// (1 - cos t)/t^2
double coef_b(double t) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return 0.5 + t2 * (-1.0 / 24 + t2 * (1.0 / 720 + t2 * (-1.0 / 40320 + t2 * (1.0 / 3628800 +
                 t2 * (-1.0 / 479001600 + t2 / 87178291200.0)))));
  }
  return (1.0 - std::cos(t)) / (t * t);
}

// (t - sin t)/t^3
double coef_c(double t) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return 1.0 / 6 + t2 * (-1.0 / 120 + t2 * (1.0 / 5040 + t2 * (-1.0 / 362880 + t2 * (1.0 / 39916800 +
                     t2 * (-1.0 / 6227020800.0 + t2 / 1307674368000.0)))));
  }
  return (t - std::sin(t)) / (t * t * t);
}

// (1 - t sin t / (2(1 - cos t)))/t^2, the phi~^2 coefficient of V^-1.
double coef_vinv(double t) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return 1.0 / 12 + t2 * (1.0 / 720 + t2 * (1.0 / 30240 + t2 * (1.0 / 1209600 +
                      t2 * (1.0 / 47900160 + t2 * (691.0 / 1307674368000.0)))));
  }
  return (1.0 - t * std::sin(t) / (2.0 * (1.0 - std::cos(t)))) / (t * t);
}

// Coefficients of the SE(3) exponential Jacobian
// sum_k A^k/(k+1)! = I + c1 A + c2 A^2 + c3 A^3 + c4 A^4, A = ad_x.
void dexp_coefs(double t, double& c1, double& c2, double& c3, double& c4) {
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    const double t4 = t2 * t2;
    c1 = 0.5 + t4 * (-1.0 / 720 + t2 * (1.0 / 20160 + t2 * (-1.0 / 1209600 +
               t2 * (1.0 / 119750400 - t2 / 17435658240.0))));
    c2 = 1.0 / 6 + t4 * (-1.0 / 5040 + t2 * (1.0 / 181440 + t2 * (-1.0 / 13305600 +
                   t2 * (1.0 / 1556755200 - t2 / 261534873600.0))));
    c3 = 1.0 / 24 + t2 * (-1.0 / 360 + t2 * (1.0 / 13440 + t2 * (-1.0 / 907200 +
                    t2 * (1.0 / 95800320 + t2 * (-1.0 / 14529715200.0 + t2 / 2988969984000.0)))));
    c4 = 1.0 / 120 + t2 * (-1.0 / 2520 + t2 * (1.0 / 120960 + t2 * (-1.0 / 9979200 +
                     t2 * (1.0 / 1245404160 + t2 * (-1.0 / 217945728000.0 + t2 / 50812489728000.0)))));
    return;
  }
  const double s = std::sin(t);
  const double c = std::cos(t);
  const double t2 = t * t;
  c1 = (4.0 - t * s - 4.0 * c) / (2.0 * t2);
  c2 = (4.0 * t - 5.0 * s + t * c) / (2.0 * t2 * t);
  c3 = (2.0 - t * s - 2.0 * c) / (2.0 * t2 * t2);
  c4 = (2.0 * t - 3.0 * s + t * c) / (2.0 * t2 * t2 * t);
}

}  // namespace

Pose Pose::from_matrix(const Mat4& m) {
  return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = R;
  m.topRightCorner<3, 1>() = p;
  return m;
}

bool Pose::is_valid(double tol) const {
  if (!R.allFinite() || !p.allFinite()) return false;
  if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(R.determinant() - 1.0) <= tol;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Vec3 unskew(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Mat4 hat(const Twist& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = skew(xi.head<3>());
  m.topRightCorner<3, 1>() = xi.tail<3>();
  return m;
}

Twist vee(const Mat4& m) {
  constexpr double tol = 1e-9;
  const Mat3 w = m.topLeftCorner<3, 3>();
  if ((w + w.transpose()).cwiseAbs().maxCoeff() > tol || m.row(3).cwiseAbs().maxCoeff() > tol) {
    throw InvalidArgument("vee: matrix is not in se(3)");
  }
  Twist xi;
  xi << 0.5 * (w(2, 1) - w(1, 2)), 0.5 * (w(0, 2) - w(2, 0)), 0.5 * (w(1, 0) - w(0, 1)),
      m.topRightCorner<3, 1>();
  return xi;
}

Mat3 exp_so3(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 W = skew(phi);
  if (t < kSmallAngle) return Mat3::Identity() + W + 0.5 * W * W;
  return Mat3::Identity() + coef_a(t) * W + coef_b(t) * W * W;
}

Vec3 log_so3(const Mat3& R) {
  const Vec3 axis2 = unskew(R - R.transpose());  // 2 sin(t) * axis
  const double cos_t = 0.5 * (R.trace() - 1.0);
  const double t = std::atan2(0.5 * axis2.norm(), cos_t);
  if (t >= std::numbers::pi - 1e-6) {
    throw NearPiRotation("log_so3: rotation angle too close to pi");
  }
  return 0.5 * axis2 / coef_a(t);
}

Pose exp_se3(const Twist& xi, double ell) {
  const Vec3 phi = xi.head<3>() * ell;
  const Vec3 rho = xi.tail<3>() * ell;
  const double t = phi.norm();
  const Mat3 W = skew(phi);
  const Mat3 W2 = W * W;
  Pose g;
  if (t < kSmallAngle) {
    g.R = Mat3::Identity() + W + 0.5 * W2;
    g.p = rho + W * rho / 2.0 + W2 * rho / 6.0;
    return g;
  }
  const double b = coef_b(t);
  g.R = Mat3::Identity() + coef_a(t) * W + b * W2;
  g.p = rho + b * (W * rho) + coef_c(t) * (W2 * rho);
  return g;
}

Twist log_se3(const Pose& g) {
  const Vec3 phi = log_so3(g.R);
  const Mat3 W = skew(phi);
  const double t = phi.norm();
  const Vec3 rho = g.p - 0.5 * (W * g.p) + coef_vinv(t) * (W * (W * g.p));
  Twist xi;
  xi << phi, rho;
  return xi;
}

Mat6 adjoint_pose(const Pose& g) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = g.R;
  ad.bottomRightCorner<3, 3>() = g.R;
  ad.bottomLeftCorner<3, 3>() = skew(g.p) * g.R;
  return ad;
}

Mat6 adjoint_twist(const Twist& xi) {
  Mat6 ad = Mat6::Zero();
  const Mat3 K = skew(xi.head<3>());
  ad.topLeftCorner<3, 3>() = K;
  ad.bottomRightCorner<3, 3>() = K;
  ad.bottomLeftCorner<3, 3>() = skew(xi.tail<3>());
  return ad;
}

Mat6 dexp_right(const Twist& x) {
  double c1, c2, c3, c4;
  dexp_coefs(x.head<3>().norm(), c1, c2, c3, c4);
  const Mat6 A = -adjoint_twist(x);
  const Mat6 A2 = A * A;
  return Mat6::Identity() + c1 * A + c2 * A2 + c3 * (A2 * A) + c4 * (A2 * A2);
}

}  // namespace cisim
