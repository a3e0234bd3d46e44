#include "cisim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/SVD>

#include "cisim/error.hpp"

namespace cisim {

namespace {

double wrap_pi(double a) {
  return std::remainder(a, 2.0 * std::numbers::pi);
}

double lerp(const std::vector<double>& x, const std::vector<double>& y, double t) {
  const auto it = std::upper_bound(x.begin(), x.end(), t);
  if (it == x.begin()) return y.front();
  if (it == x.end()) return y.back();
  const std::size_t i = static_cast<std::size_t>(it - x.begin());
  const double w = (t - x[i - 1]) / (x[i] - x[i - 1]);
  return (1.0 - w) * y[i - 1] + w * y[i];
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void ForceTrace::validate() const {
  if (x.size() != F.size() || (!f_perp.empty() && f_perp.size() != x.size())) {
    throw DimensionMismatch("ForceTrace: column lengths differ");
  }
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) throw InvalidArgument("ForceTrace: abscissa must increase strictly");
  }
}

double ime(const ForceTrace& a, const ForceTrace& b, double floor) {
  a.validate();
  b.validate();
  if (a.x.size() < 2 || b.x.size() < 2) throw NoOverlap("ime: traces need two samples each");
  const double lo = std::max(a.x.front(), b.x.front());
  const double hi = std::min(a.x.back(), b.x.back());
  if (!(hi > lo)) throw NoOverlap("ime: abscissa ranges do not overlap");

  std::vector<double> knots = {lo, hi};
  for (const auto* xs : {&a.x, &b.x}) {
    for (double v : *xs) {
      if (v > lo && v < hi) knots.push_back(v);
    }
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  auto rel = [&](double t) {
    const double fa = lerp(a.x, a.F, t);
    const double fb = lerp(b.x, b.F, t);
    return std::abs(fa - fb) / std::max(std::abs(fa), floor);
  };
  double integral = 0.0;
  double prev = rel(knots.front());
  for (std::size_t i = 1; i < knots.size(); ++i) {
    const double cur = rel(knots[i]);
    integral += 0.5 * (prev + cur) * (knots[i] - knots[i - 1]);
    prev = cur;
  }
  return integral / (hi - lo);
}

ForceTrace read_force_trace(const std::string& csv_path, bool by_time) {
  std::ifstream in(csv_path);
  if (!in) throw InvalidArgument("read_force_trace: cannot open " + csv_path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("read_force_trace: empty file " + csv_path);
  const auto header = split_csv(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError("read_force_trace: missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t cx = column(by_time ? "t" : "depth_mm");
  const std::size_t cf[3] = {column("f0x"), column("f0y"), column("f0z")};
  ForceTrace tr;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw ParseError("read_force_trace: ragged row in " + csv_path);
    Vec3 f;
    for (int i = 0; i < 3; ++i) f(i) = std::stod(cells[cf[i]]);
    tr.x.push_back(std::stod(cells[cx]));
    tr.F.push_back(f.norm());
    tr.f_perp.emplace_back(f(1), f(2));
  }
  tr.validate();
  return tr;
}

SpiralAxis fit_spiral_axis(const LumenModel& lumen) {
  const int n = 400;
  Eigen::MatrixX3d P(n + 1, 3);
  for (int i = 0; i <= n; ++i) P.row(i) = lumen.pose_at(lumen.length() * i / n).p.transpose();
  const Vec3 c = P.colwise().mean().transpose();
  const Eigen::MatrixX3d Q = P.rowwise() - c.transpose();
  Eigen::JacobiSVD<Eigen::MatrixX3d> svd(Q, Eigen::ComputeThinV);
  const Vec3 sv = svd.singularValues();
  if (sv(1) <= 1e-6 * sv(0)) throw AxisUndefined("fit_spiral_axis: centerline is collinear");
  const Vec3 u = svd.matrixV().col(0), v = svd.matrixV().col(1), w = svd.matrixV().col(2);

  // Algebraic circle fit in the plane: 2 x cx + 2 y cy + k = x^2 + y^2.
  Eigen::MatrixX3d A(n + 1, 3);
  VecX rhs(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double x = Q.row(i).dot(u), y = Q.row(i).dot(v);
    A.row(i) << 2 * x, 2 * y, 1.0;
    rhs(i) = x * x + y * y;
  }
  const Vec3 sol = A.colPivHouseholderQr().solve(rhs);
  const Vec3 center = c + sol(0) * u + sol(1) * v;
  double mean_r = 0.0;
  for (int i = 0; i <= n; ++i) {
    const Vec3 d = P.row(i).transpose() - center;
    mean_r += (d - d.dot(w) * w).norm();
  }
  mean_r /= (n + 1);
  const double plane_rms = sv(2) / std::sqrt(static_cast<double>(n + 1));
  if (!(mean_r > 0.0) || !std::isfinite(mean_r) || plane_rms > 0.2 * mean_r) {
    throw AxisUndefined("fit_spiral_axis: centerline is not a planar spiral");
  }
  return {center, w};
}

SpiralAngleMap::SpiralAngleMap(const LumenModel& lumen, double ds) : lumen_(&lumen) {
  axis_ = lumen.spiral_axis() ? *lumen.spiral_axis() : fit_spiral_axis(lumen);
  const Vec3 w = axis_.axis.normalized();
  u_ = (std::abs(w.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).cross(w).normalized();
  v_ = w.cross(u_);

  const int n = std::max(1, static_cast<int>(std::ceil(lumen.length() / ds)));
  s_.resize(static_cast<std::size_t>(n) + 1);
  alpha_.resize(s_.size());
  r_.resize(s_.size());
  r_[0] = lumen.pose_at(0.0).p;
  double prev = raw_azimuth(0.0);
  alpha_[0] = 0.0;
  for (int i = 1; i <= n; ++i) {
    const double s = lumen.length() * i / n;
    const double cur = raw_azimuth(s);
    s_[static_cast<std::size_t>(i)] = s;
    r_[static_cast<std::size_t>(i)] = lumen.pose_at(s).p;
    alpha_[static_cast<std::size_t>(i)] = alpha_[static_cast<std::size_t>(i) - 1] + wrap_pi(cur - prev);
    prev = cur;
  }
  if (alpha_.back() < 0.0) {
    sign_ = -1.0;
    for (double& a : alpha_) a = -a;
  }
}

double SpiralAngleMap::raw_azimuth(double s) const {
  const Vec3 d = lumen_->pose_at(s).p - axis_.center;
  return std::atan2(d.dot(v_), d.dot(u_));
}

double SpiralAngleMap::angle_deg(double s) const {
  s = std::clamp(s, 0.0, lumen_->length());
  const auto it = std::upper_bound(s_.begin(), s_.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - s_.begin()) - 1;
  const double a = alpha_[i] + sign_ * wrap_pi(raw_azimuth(s) - raw_azimuth(s_[i]));
  return a * 180.0 / std::numbers::pi;
}

double SpiralAngleMap::centerline_arclength(const Vec3& x) const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < r_.size(); ++i) {
    if ((r_[i] - x).squaredNorm() < (r_[best] - x).squaredNorm()) best = i;
  }
  // Gauss-Newton on the unit-speed curve, kept inside the bracketing cells.
  const double lo = s_[best > 0 ? best - 1 : 0];
  const double hi = s_[std::min(best + 1, s_.size() - 1)];
  double s = s_[best];
  for (int it = 0; it < 20; ++it) {
    const Pose g = lumen_->pose_at(s);
    const double step = g.R.col(0).dot(x - g.p);
    s = std::clamp(s + step, lo, hi);
    if (std::abs(step) < 1e-12) break;
  }
  return s;
}

double SpiralAngleMap::insertion_angle_deg(const Vec3& tip) const {
  return angle_deg(centerline_arclength(tip));
}

double insertion_angle(const LumenModel& lumen, const Vec3& tip) {
  return SpiralAngleMap(lumen).insertion_angle_deg(tip);
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::MaxDepth: return "max_depth";
    case Termination::LumenEnd: return "lumen_end";
    case Termination::Stall: return "stall";
    case Termination::NonConvergence: return "nonconvergence";
    case Termination::MaxSteps: return "max_steps";
    case Termination::PlanEnd: return "plan_end";
  }
  return "unknown";
}

Termination termination_from_string(const std::string& s) {
  for (Termination t : {Termination::MaxDepth, Termination::LumenEnd, Termination::Stall,
                        Termination::NonConvergence, Termination::MaxSteps, Termination::PlanEnd}) {
    if (to_string(t) == s) return t;
  }
  throw ParseError("unknown termination cause: " + s);
}

BatchStats batch_stats(const std::vector<DepthReport>& reports) {
  BatchStats st;
  st.n = static_cast<int>(reports.size());
  if (reports.empty()) throw InvalidArgument("batch_stats: no reports");
  for (const auto& r : reports) {
    st.mean += r.alpha_max_deg;
    st.successes += r.success() ? 1 : 0;
    st.premature += r.premature() ? 1 : 0;
  }
  st.mean /= st.n;
  if (st.n > 1) {
    double ss = 0.0;
    for (const auto& r : reports) ss += (r.alpha_max_deg - st.mean) * (r.alpha_max_deg - st.mean);
    st.stddev = std::sqrt(ss / (st.n - 1));
  }
  return st;
}

}  // namespace cisim
