#include "cisim/contact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "cisim/error.hpp"

namespace cisim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_beta(double b) {
  b = std::fmod(b, kTwoPi);
  return b < 0.0 ? b + kTwoPi : b;
}

struct SurfaceEval {
  Vec3 pc;
  SurfaceJacobian J;
  double f;
  Vec2 grad;
};

SurfaceEval evaluate(const LumenModel& lumen, const Vec3& p, double s, double beta) {
  SurfaceEval e;
  e.pc = lumen.surface_point(s, beta);
  e.J = lumen.surface_jacobian(s, beta);
  const Vec3 r = e.pc - p;
  e.f = 0.5 * r.squaredNorm();
  e.grad = e.J.transpose() * r;
  return e;
}

Vec2 projected(const Vec2& g, double s, double L) {
  Vec2 pg = g;
  if (s <= 0.0 && g(0) > 0.0) pg(0) = 0.0;
  if (s >= L && g(0) < 0.0) pg(0) = 0.0;
  return pg;
}

// Hessian of the squared distance by differencing the analytic gradient,
// one-sided in s so the stencil stays inside the current segment.
Mat2 fd_hessian(const LumenModel& lumen, const Vec3& p, double s, double beta, const Vec2& g0) {
  const double h = 1e-6;
  const std::size_t seg = lumen.segment_of(s);
  const double s_hi = lumen.frames()[seg + 1].s;
  const double s_lo = lumen.frames()[seg].s;
  Mat2 H;
  if (s + h <= s_hi) {
    H.col(0) = (evaluate(lumen, p, s + h, beta).grad - g0) / h;
  } else {
    H.col(0) = (g0 - evaluate(lumen, p, std::max(s_lo, s - h), beta).grad) / std::max(1e-12, s - std::max(s_lo, s - h));
  }
  H.col(1) = (evaluate(lumen, p, s, beta + h).grad - evaluate(lumen, p, s, beta - h).grad) / (2 * h);
  return 0.5 * (H + H.transpose());
}

ClosestPoint descend(const LumenModel& lumen, const Vec3& p, SurfaceParam X, bool lock_s = false) {
  const double L = lumen.length();
  const double tol = 1e-8 * (1.0 + p.norm());
  const double max_ds = std::max(0.5, 2.0 * lumen.max_radius());
  ClosestPoint out;
  X.s = std::clamp(X.s, 0.0, L);
  X.beta = wrap_beta(X.beta);
  SurfaceEval cur = evaluate(lumen, p, X.s, X.beta);
  int it = 0;
  for (; it < 60; ++it) {
    Vec2 pg = projected(cur.grad, X.s, L);
    if (lock_s) pg(0) = 0.0;
    if (pg.norm() <= tol) {
      out.stationary = true;
      break;
    }
    const Mat2 H = fd_hessian(lumen, p, X.s, X.beta, cur.grad);
    const Mat2 gn = cur.J.transpose() * cur.J;
    Vec2 d;
    const bool s_locked = lock_s || (pg(0) == 0.0 && cur.grad(0) != 0.0);
    if (s_locked) {
      const double h11 = H(1, 1) > 0.0 ? H(1, 1) : gn(1, 1);
      d << 0.0, -cur.grad(1) / h11;
    } else if (H(0, 0) > 0.0 && H.determinant() > 0.0) {
      d = -H.ldlt().solve(cur.grad);
    } else {
      d = -(gn + 1e-12 * Mat2::Identity()).ldlt().solve(cur.grad);
    }
    if (cur.grad.dot(d) >= 0.0) d = -pg;
    // Trust limits in s (mm) and beta (rad).
    const double scale = std::max({1.0, std::abs(d(0)) / max_ds, std::abs(d(1)) / 1.0});
    d /= scale;

    double alpha = 1.0;
    bool accepted = false;
    SurfaceEval trial;
    SurfaceParam Xt;
    for (int ls = 0; ls < 40; ++ls) {
      Xt.s = std::clamp(X.s + alpha * d(0), 0.0, L);
      Xt.beta = wrap_beta(X.beta + alpha * d(1));
      trial = evaluate(lumen, p, Xt.s, Xt.beta);
      const Vec2 step(Xt.s - X.s, alpha * d(1));
      if (trial.f <= cur.f + 1e-4 * cur.grad.dot(step)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const bool tiny = std::abs(Xt.s - X.s) < 1e-15 * (1.0 + L) && std::abs(alpha * d(1)) < 1e-15;
    X = Xt;
    cur = trial;
    if (tiny) break;
  }
  out.X = X;
  out.point = cur.pc;
  out.distance = std::sqrt(2.0 * cur.f);
  out.iterations = it;
  out.on_boundary = X.s <= 0.0 || X.s >= L;
  if (!out.stationary) {
    Vec2 pg = projected(cur.grad, X.s, L);
    if (lock_s) pg(0) = 0.0;
    out.stationary = pg.norm() <= tol;
  }
  return out;
}

}  // namespace

ClosestPoint closest_point(const LumenModel& lumen, const Vec3& p, std::optional<SurfaceParam> seed) {
  if (seed) return descend(lumen, p, *seed);

  const double L = lumen.length();
  struct Cand {
    double f;
    SurfaceParam X;
  };
  std::vector<Cand> grid;
  constexpr int ns = 16, nb = 8;
  for (int i = 0; i < ns; ++i) {
    const double s = L * i / (ns - 1);
    for (int j = 0; j < nb; ++j) {
      const double b = kTwoPi * j / nb;
      grid.push_back({(lumen.surface_point(s, b) - p).squaredNorm(), {s, b}});
    }
  }
  std::sort(grid.begin(), grid.end(), [](const Cand& a, const Cand& b) {
    return a.f < b.f || (a.f == b.f && (a.X.s < b.X.s || (a.X.s == b.X.s && a.X.beta < b.X.beta)));
  });
  std::vector<SurfaceParam> seeds;
  for (std::size_t i = 0; i < std::min<std::size_t>(3, grid.size()); ++i) seeds.push_back(grid[i].X);

  // Nearest lumen station, best of the eight grid angles there.
  std::size_t best_station = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lumen.frames().size(); ++i) {
    const double d = (lumen.frames()[i].g.p - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best_station = i;
    }
  }
  const double s_st = lumen.frames()[best_station].s;
  SurfaceParam st_seed{s_st, 0.0};
  double st_f = std::numeric_limits<double>::infinity();
  for (int j = 0; j < nb; ++j) {
    const double b = kTwoPi * j / nb;
    const double f = (lumen.surface_point(s_st, b) - p).squaredNorm();
    if (f < st_f) {
      st_f = f;
      st_seed.beta = b;
    }
  }
  seeds.push_back(st_seed);

  ClosestPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  for (const auto& sd : seeds) {
    const ClosestPoint c = descend(lumen, p, sd);
    if (c.distance < best.distance) best = c;
  }
  return best;
}

ClosestPoint closest_point_on_section(const LumenModel& lumen, const Vec3& p, double s,
                                     std::optional<double> beta_seed) {
  s = std::clamp(s, 0.0, lumen.length());
  if (beta_seed) return descend(lumen, p, {s, *beta_seed}, true);
  ClosestPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 8; ++j) {
    const ClosestPoint c = descend(lumen, p, {s, kTwoPi * j / 8}, true);
    if (c.distance < best.distance - 1e-15) best = c;
  }
  return best;
}

Pose contact_frame(const LumenModel& lumen, const SurfaceParam& X) {
  const SurfaceJacobian J = lumen.surface_jacobian(X.s, X.beta);
  const Vec3 t1 = J.col(0);
  const Vec3 t2 = J.col(1);
  Vec3 n = t1.cross(t2);
  if (n.norm() <= 1e-9) throw DegenerateTangents("contact_frame: surface tangents are parallel");
  n.normalize();
  const Vec3 pc = lumen.surface_point(X.s, X.beta);
  const Vec3 center = lumen.pose_at(X.s).p;
  if (n.dot(center - pc) < 0.0) n = -n;
  const Vec3 e1 = t1.normalized();
  const Vec3 e2 = n.cross(e1);
  Mat3 R;
  R << n, e1, e2;
  return {R, pc};
}

double normal_gap(const Pose& g_c, const Pose& g, double r_ea) {
  return g_c.R.col(0).dot(g.p - g_c.p) - r_ea;
}

double smooth_plus(double x, double eps) {
  const double h = std::hypot(x, eps);
  // For x < 0 the direct sum cancels; use D(x) D(-x) = eps^2/4 instead.
  return x >= 0.0 ? 0.5 * (x + h) : 0.5 * eps * eps / (h - x);
}

double smooth_plus_derivative(double x, double eps) { return 0.5 * (1.0 + x / std::hypot(x, eps)); }

Vec3 ContactLaw::force(const Vec3& u, Mat3* jac) const {
  const Vec2 ut = u.tail<2>();
  const double rho = std::sqrt(ut.squaredNorm() + eps_t * eps_t);
  const Vec2 t = rho > 0.0 ? Vec2(ut / rho) : Vec2::Zero();
  const double lam_n = smooth_plus(-u(0), eps);
  const double x = rho - mu * lam_n;
  const double Dx = smooth_plus(x, eps);
  Vec3 f;
  f << lam_n, Dx * t - ut;
  if (jac) {
    const double dlam = -smooth_plus_derivative(-u(0), eps);
    const double dDx = smooth_plus_derivative(x, eps);
    const Mat2 dt = rho > 0.0 ? Mat2((Mat2::Identity() - t * t.transpose()) / rho) : Mat2::Zero();
    jac->setZero();
    (*jac)(0, 0) = dlam;
    // x depends on u_n through lambda_n and on u_t through rho.
    jac->block<2, 1>(1, 0) = dDx * (-mu * dlam) * t;
    jac->block<2, 2>(1, 1) = dDx * t * t.transpose() + Dx * dt - Mat2::Identity();
  }
  return f;
}

Vec3 ContactLaw::residual(double d_n, const Vec2& v_t, const Vec3& u, Mat3* jac) const {
  const Vec2 ut = u.tail<2>();
  const double rho = std::sqrt(ut.squaredNorm() + eps_t * eps_t);
  const Vec2 t = rho > 0.0 ? Vec2(ut / rho) : Vec2::Zero();
  const double lam_n = smooth_plus(-u(0), eps);
  const double x = rho - mu * lam_n;
  const double Dx = smooth_plus(x, eps);
  Vec3 r;
  r << d_n - smooth_plus(u(0), eps), v_t - Dx * t;
  if (jac) {
    const double dlam = -smooth_plus_derivative(-u(0), eps);
    const double dDx = smooth_plus_derivative(x, eps);
    const Mat2 dt = rho > 0.0 ? Mat2((Mat2::Identity() - t * t.transpose()) / rho) : Mat2::Zero();
    jac->setZero();
    (*jac)(0, 0) = -smooth_plus_derivative(u(0), eps);
    jac->block<2, 1>(1, 0) = -dDx * (-mu * dlam) * t;
    jac->block<2, 2>(1, 1) = -(dDx * t * t.transpose() + Dx * dt);
  }
  return r;
}

Wrench transfer_wrench(const Pose& g, const Pose& g_c, const Vec3& force_nt) {
  Wrench lc;
  lc << Vec3::Zero(), force_nt;
  return adjoint_pose(g_c.inverse() * g).transpose() * lc;
}

Wrench contact_wrench(const Pose& g, const Pose& g_c, const Vec3& u, const ContactLaw& law) {
  return transfer_wrench(g, g_c, law.force(u));
}

Vec2 sliding_velocity(const Pose& g, const Pose& g_c, const Twist& eta) {
  const Twist ec = adjoint_pose(g_c.inverse() * g) * eta;
  return ec.tail<2>();
}

std::vector<double> contact_stations(double rod_length, int count, bool refine_distal) {
  if (count < 1) throw InvalidArgument("contact_stations: need at least one station");
  std::vector<double> s;
  for (int k = 1; k <= count; ++k) {
    const double sk = rod_length * k / count;
    if (refine_distal && sk > 0.75 * rod_length) s.push_back(sk - 0.5 * rod_length / count);
    s.push_back(sk);
  }
  s.back() = rod_length;
  return s;
}

}  // namespace cisim
