#pragma once

// Analytic lumen: piecewise-constant-strain pose curve g_c(s) swept by a
// vertically asymmetric ellipse f(s, beta).

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cisim/liegroup.hpp"
#include "cisim/station.hpp"

namespace cisim {

struct StationFrame {
  double s = 0.0;
  Pose g;
};

/// Rotation axis of a spiral lumen, used to report the insertion angle.
struct SpiralAxis {
  Vec3 center = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
};

using SurfaceJacobian = Eigen::Matrix<double, 3, 2>;

/// Local frames from station samples: x along the tangent, z along the
/// major axis (re-orthogonalised against x), y = z × x. The (y, z) pair is
/// rotated by pi whenever z would reverse relative to the previous station.
std::vector<StationFrame> build_frames(const std::vector<StationSample>& stations);

/// Constant body strain per segment, (1/ds) log(g_i^-1 g_{i+1}).
std::vector<Twist> fit_pcs(const std::vector<StationFrame>& frames);

/// b = b_l - (b_l - b_u) w^p with w = (1 + sin beta)/2.
double profile_b(double b_l, double b_u, double p, double beta);

class LumenModel {
 public:
  LumenModel() = default;

  /// Fits the segment twists from the frames. Profiles are sampled at the
  /// stations and must be strictly positive.
  LumenModel(std::vector<StationFrame> frames, std::vector<double> a, std::vector<double> b_u,
             std::vector<double> b_l, double p = 2.0);

  /// Assembles a model from already-fitted parts (deserialization path).
  static LumenModel from_parts(std::vector<StationFrame> frames, std::vector<Twist> xi,
                               std::vector<double> a, std::vector<double> b_u,
                               std::vector<double> b_l, double p, double length);

  const std::vector<StationFrame>& frames() const { return frames_; }
  const std::vector<Twist>& twists() const { return xi_; }
  const std::vector<double>& a() const { return a_; }
  const std::vector<double>& b_u() const { return b_u_; }
  const std::vector<double>& b_l() const { return b_l_; }
  double exponent() const { return p_; }
  double length() const { return length_; }
  std::size_t segments() const { return xi_.size(); }

  const std::optional<SpiralAxis>& spiral_axis() const { return spiral_; }
  void set_spiral_axis(const SpiralAxis& axis) { spiral_ = axis; }

  /// Segment containing s; a node belongs to the segment on its right.
  std::size_t segment_of(double s) const;

  /// Clamps s into [0, L] when it lies outside by at most 1e-9 (counted in
  /// clamp_warnings()); throws OutOfRange beyond that.
  double checked_arclength(double s) const;
  std::size_t clamp_warnings() const { return clamp_count_ ? clamp_count_->load() : 0; }

  Pose pose_at(double s) const;

  double a_at(double s) const;
  double b_u_at(double s) const;
  double b_l_at(double s) const;
  double b_at(double s, double beta) const;

  /// Cross-section contour f(s, beta) in the local frame.
  Vec3 section(double s, double beta) const;
  Vec3 surface_point(double s, double beta) const;
  /// [dp_c/ds, dp_c/dbeta], closed form.
  SurfaceJacobian surface_jacobian(double s, double beta) const;

  /// Largest of a, b_u, b_l over all stations.
  double max_radius() const;

 private:
  void validate() const;
  double interp(const std::vector<double>& v, double s, std::size_t seg) const;
  double slope(const std::vector<double>& v, std::size_t seg) const;

  std::vector<StationFrame> frames_;
  std::vector<Twist> xi_;
  std::vector<double> a_, b_u_, b_l_;
  double p_ = 2.0;
  double length_ = 0.0;
  std::optional<SpiralAxis> spiral_;
  std::shared_ptr<std::atomic<std::size_t>> clamp_count_ =
      std::make_shared<std::atomic<std::size_t>>(0);
};

/// Planar spiral generator for desk-scale experiments. The centerline is the
/// Archimedean spiral r(theta) = R(theta)[cos theta, sin theta, rise*theta/2pi]
/// with the polar radius R tapering linearly from start_radius to end_radius,
/// so the local radius of curvature follows the same taper. Cross-section
/// radii taper linearly in arc length.
struct SpiralParams {
  double turns = 2.5;
  double start_radius = 3.6;  // mm
  double end_radius = 1.0;    // mm
  double rise = 0.0;          // mm per turn along the axis (0 = planar)
  double a_start = 0.5, a_end = 0.32;
  double bu_start = 0.42, bu_end = 0.28;
  double bl_start = 0.5, bl_end = 0.32;
  double exponent = 2.0;
  int stations = 40;
};

struct SyntheticLumen {
  LumenModel model;
  SpiralParams params;
  std::vector<double> s_table;      // dense arc-length table
  std::vector<double> theta_table;  // matching polar angle
  double total_angle = 0.0;

  /// Polar angle (rad) swept from the entrance at arc length s.
  double angle_at(double s) const;
  /// Exact centerline point at arc length s.
  Vec3 centerline(double s) const;
  double a_exact(double s) const;
  double bu_exact(double s) const;
  double bl_exact(double s) const;
};

SyntheticLumen make_spiral_lumen(const SpiralParams& params = {});

/// Straight tube along +x from the origin with constant radii.
LumenModel make_straight_tube(double length, double a, double b_u, double b_l, int stations = 8,
                              double p = 2.0);

/// Straight tube along +x whose radii taper linearly from `a0` to `a1`.
LumenModel make_tapered_tube(double length, double a0, double a1, int stations = 8);

std::string lumen_to_json(const LumenModel& model);
LumenModel lumen_from_json(const std::string& text);
void save_lumen(const LumenModel& model, const std::string& path);
LumenModel load_lumen(const std::string& path);

}  // namespace cisim
