#pragma once

// Contact between rod stations and the analytic lumen wall: closest-point
// search, contact frames, and the smoothed Signorini/Coulomb slack law.

#include <optional>
#include <vector>

#include "cisim/liegroup.hpp"
#include "cisim/lumen.hpp"

namespace cisim {

struct SurfaceParam {
  double s = 0.0;
  double beta = 0.0;
};

struct ClosestPoint {
  SurfaceParam X;
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  bool stationary = false;  // projected gradient below tolerance
  bool on_boundary = false;  // s clamped at 0 or L
  int iterations = 0;
};

/// Minimizes 0.5 |p_c(s, beta) - p|^2. Without a seed the search starts from
/// the best points of a 16 x 8 (s, beta) grid and the nearest lumen station.
ClosestPoint closest_point(const LumenModel& lumen, const Vec3& p,
                           std::optional<SurfaceParam> seed = std::nullopt);

/// Same search with s held fixed (beta only), multi-start over 8 angles
/// without a seed.
ClosestPoint closest_point_on_section(const LumenModel& lumen, const Vec3& p, double s,
                                     std::optional<double> beta_seed = std::nullopt);

/// R_c = [n e1 e2] at p_c(X), n pointing into the lumen.
Pose contact_frame(const LumenModel& lumen, const SurfaceParam& X);

/// (g_c^-1 g)_{1,4} - r_ea: positive in separation.
double normal_gap(const Pose& g_c, const Pose& g, double r_ea);

/// D_eps(x) = (x + sqrt(x^2 + eps^2)) / 2 and its derivative.
double smooth_plus(double x, double eps);
double smooth_plus_derivative(double x, double eps);

/// Smoothed contact law for one pair. Slack u = [u_n; u_t].
struct ContactLaw {
  double mu = 0.58;
  double eps = 1e-6;
  double eps_t = 1e-8;

  /// [Lambda_n; Lambda_t] = [D(-u_n); D(x) t - u_t], optionally with d/du.
  Vec3 force(const Vec3& u, Mat3* jac = nullptr) const;
  /// [d_n - D(u_n); v_t - D(x) t], optionally with d/du.
  Vec3 residual(double d_n, const Vec2& v_t, const Vec3& u, Mat3* jac = nullptr) const;
};

/// Contact-frame wrench [0; Lambda_n; Lambda_t] transferred to the rod body
/// frame: Ad^T_{g_c^-1 g} Lambda_c.
Wrench contact_wrench(const Pose& g, const Pose& g_c, const Vec3& u, const ContactLaw& law);
Wrench transfer_wrench(const Pose& g, const Pose& g_c, const Vec3& force_nt);

/// Tangential components of Ad_{g_c^-1 g} eta.
Vec2 sliding_velocity(const Pose& g, const Pose& g_c, const Twist& eta);

struct ContactPair {
  int k = 0;
  double s_rod = 0.0;
  SurfaceParam X;
  Pose g_c;
  double d_n = 0.0;
  Vec3 u = Vec3::Zero();
  bool active = false;
};

/// Rod arc lengths of the contact stations: k L / M for k = 1..M, with the
/// density doubled over the distal quarter when `refine_distal` is set.
std::vector<double> contact_stations(double rod_length, int count, bool refine_distal = false);

}  // namespace cisim
