#pragma once

// Evaluation metrics: integrated mean error between force traces, spiral
// insertion angle, and batch statistics over repeated runs.

#include <optional>
#include <string>
#include <vector>

#include "cisim/contact.hpp"
#include "cisim/lumen.hpp"

namespace cisim {

/// Force magnitude (N) and lateral components against a strictly increasing
/// abscissa (depth in mm or time in s).
struct ForceTrace {
  std::vector<double> x;
  std::vector<double> F;
  std::vector<Vec2> f_perp;

  void validate() const;
};

/// Trapezoidal mean of |(F_a - F_b) / F_a| over the common abscissa range,
/// with |F_a| floored at `floor`. Not symmetric in its arguments.
double ime(const ForceTrace& a, const ForceTrace& b, double floor = 1e-6);

/// Reads depth_mm (or t when `by_time`) and the base force columns of a
/// trajectory CSV.
ForceTrace read_force_trace(const std::string& csv_path, bool by_time = false);

/// Plane + circle fit of the centerline. Throws AxisUndefined when the
/// points are not close to planar or the circle fit is degenerate.
SpiralAxis fit_spiral_axis(const LumenModel& lumen);

/// Unwrapped azimuth of the centerline about the spiral axis, tabulated once.
class SpiralAngleMap {
 public:
  explicit SpiralAngleMap(const LumenModel& lumen, double ds = 0.05);

  const SpiralAxis& axis() const { return axis_; }
  /// Accumulated angle (deg) of r(s), zero at the entrance, increasing inward.
  double angle_deg(double s) const;
  /// Arc length of the centerline point closest to x.
  double centerline_arclength(const Vec3& x) const;
  /// Angle at the centerline point closest to the tip.
  double insertion_angle_deg(const Vec3& tip) const;

 private:
  double raw_azimuth(double s) const;

  const LumenModel* lumen_;
  SpiralAxis axis_;
  Vec3 u_, v_;
  double sign_ = 1.0;
  std::vector<double> s_, alpha_;
  std::vector<Vec3> r_;
};

double insertion_angle(const LumenModel& lumen, const Vec3& tip);

enum class Termination { MaxDepth, LumenEnd, Stall, NonConvergence, MaxSteps, PlanEnd };
std::string to_string(Termination t);
Termination termination_from_string(const std::string& s);

struct DepthReport {
  double alpha_max_deg = 0.0;
  Termination cause = Termination::MaxDepth;

  /// Ended by solver failure rather than a detected stall or a stop rule.
  bool premature() const { return cause == Termination::NonConvergence; }
  bool success() const { return alpha_max_deg >= 280.0 && !premature(); }
};

struct BatchStats {
  int n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample, n - 1 denominator
  int successes = 0;
  int premature = 0;
};

BatchStats batch_stats(const std::vector<DepthReport>& reports);

}  // namespace cisim
