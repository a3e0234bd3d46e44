#include "cisim/lumen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "cisim/error.hpp"

namespace cisim {

using json = nlohmann::json;

std::vector<StationFrame> build_frames(const std::vector<StationSample>& stations) {
  if (stations.size() < 2) throw InvalidArgument("build_frames: need at least two stations");
  std::vector<StationFrame> frames;
  frames.reserve(stations.size());
  for (std::size_t i = 0; i < stations.size(); ++i) {
    const StationSample& st = stations[i];
    const double tn = st.t.norm();
    const Vec3 major = st.p_plus - st.p_minus;
    const double mn = major.norm();
    if (tn == 0.0 || mn == 0.0) throw ParallelAxes("build_frames: zero tangent or zero major axis");
    const Vec3 x = st.t / tn;
    const Vec3 z0 = major / mn;
    const Vec3 zx = z0.cross(x);
    if (zx.norm() <= 1e-6) throw ParallelAxes("build_frames: major axis parallel to tangent");
    Vec3 y = zx / zx.norm();
    Vec3 z = x.cross(y);
    if (!frames.empty() && z.dot(frames.back().g.R.col(2)) < 0.0) {
      y = -y;
      z = -z;
    }
    Mat3 R;
    R << x, y, z;
    frames.push_back({st.s, Pose(R, st.r)});
  }
  return frames;
}

std::vector<Twist> fit_pcs(const std::vector<StationFrame>& frames) {
  std::vector<Twist> xi;
  xi.reserve(frames.size() > 0 ? frames.size() - 1 : 0);
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    const double ds = frames[i + 1].s - frames[i].s;
    if (!(ds > 0.0)) throw InvalidArgument("fit_pcs: station arc lengths must increase");
    xi.push_back(log_se3(frames[i].g.inverse() * frames[i + 1].g) / ds);
  }
  return xi;
}

double profile_b(double b_l, double b_u, double p, double beta) {
  const double w = 0.5 * (1.0 + std::sin(beta));
  return b_l - (b_l - b_u) * std::pow(w, p);
}

LumenModel::LumenModel(std::vector<StationFrame> frames, std::vector<double> a,
                       std::vector<double> b_u, std::vector<double> b_l, double p)
    : frames_(std::move(frames)), a_(std::move(a)), b_u_(std::move(b_u)), b_l_(std::move(b_l)),
      p_(p) {
  if (frames_.size() < 2) throw InvalidArgument("LumenModel: need at least two stations");
  xi_ = fit_pcs(frames_);
  length_ = frames_.back().s - frames_.front().s;
  validate();
}

LumenModel LumenModel::from_parts(std::vector<StationFrame> frames, std::vector<Twist> xi,
                                  std::vector<double> a, std::vector<double> b_u,
                                  std::vector<double> b_l, double p, double length) {
  LumenModel m;
  m.frames_ = std::move(frames);
  m.xi_ = std::move(xi);
  m.a_ = std::move(a);
  m.b_u_ = std::move(b_u);
  m.b_l_ = std::move(b_l);
  m.p_ = p;
  m.length_ = length;
  m.validate();
  return m;
}

void LumenModel::validate() const {
  const std::size_t n = frames_.size();
  if (n < 2 || xi_.size() != n - 1 || a_.size() != n || b_u_.size() != n || b_l_.size() != n) {
    throw InvalidArgument("LumenModel: inconsistent array sizes");
  }
  if (frames_.front().s != 0.0) throw InvalidArgument("LumenModel: first station must be at s = 0");
  if (!(p_ >= 1.0)) throw InvalidArgument("LumenModel: flattening exponent must be >= 1");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(a_[i] > 0.0 && b_u_[i] > 0.0 && b_l_[i] > 0.0)) {
      throw InvalidArgument("LumenModel: cross-section radii must be positive");
    }
    if (i + 1 < n && !(frames_[i + 1].s > frames_[i].s)) {
      throw InvalidArgument("LumenModel: station arc lengths must increase");
    }
  }
}

std::size_t LumenModel::segment_of(double s) const {
  const auto it = std::upper_bound(frames_.begin(), frames_.end(), s,
                                   [](double v, const StationFrame& f) { return v < f.s; });
  const auto idx = static_cast<std::size_t>(std::distance(frames_.begin(), it));
  if (idx == 0) return 0;
  return std::min(idx - 1, xi_.size() - 1);
}

double LumenModel::checked_arclength(double s) const {
  if (s >= 0.0 && s <= length_) return s;
  if (s < -1e-9 || s > length_ + 1e-9) {
    throw OutOfRange("LumenModel: arc length " + std::to_string(s) + " outside [0, L]");
  }
  clamp_count_->fetch_add(1);
  return std::clamp(s, 0.0, length_);
}

Pose LumenModel::pose_at(double s) const {
  s = checked_arclength(s);
  const std::size_t i = segment_of(s);
  const double ds = s - frames_[i].s;
  if (ds == 0.0) return frames_[i].g;
  return frames_[i].g * exp_se3(xi_[i], ds);
}

double LumenModel::interp(const std::vector<double>& v, double s, std::size_t seg) const {
  const double s0 = frames_[seg].s;
  const double s1 = frames_[seg + 1].s;
  const double u = (s - s0) / (s1 - s0);
  return (1.0 - u) * v[seg] + u * v[seg + 1];
}

double LumenModel::slope(const std::vector<double>& v, std::size_t seg) const {
  return (v[seg + 1] - v[seg]) / (frames_[seg + 1].s - frames_[seg].s);
}

double LumenModel::a_at(double s) const {
  s = checked_arclength(s);
  return interp(a_, s, segment_of(s));
}
double LumenModel::b_u_at(double s) const {
  s = checked_arclength(s);
  return interp(b_u_, s, segment_of(s));
}
double LumenModel::b_l_at(double s) const {
  s = checked_arclength(s);
  return interp(b_l_, s, segment_of(s));
}
double LumenModel::b_at(double s, double beta) const {
  return profile_b(b_l_at(s), b_u_at(s), p_, beta);
}

Vec3 LumenModel::section(double s, double beta) const {
  return {0.0, a_at(s) * std::cos(beta), b_at(s, beta) * std::sin(beta)};
}

Vec3 LumenModel::surface_point(double s, double beta) const {
  const Pose g = pose_at(s);
  return g.p + g.R * section(s, beta);
}

SurfaceJacobian LumenModel::surface_jacobian(double s, double beta) const {
  s = checked_arclength(s);
  const std::size_t i = segment_of(s);
  const Pose g = frames_[i].g * exp_se3(xi_[i], s - frames_[i].s);
  const Vec3 kappa = xi_[i].head<3>();
  const Vec3 eps = xi_[i].tail<3>();

  const double sb = std::sin(beta);
  const double cb = std::cos(beta);
  const double w = 0.5 * (1.0 + sb);
  const double a = interp(a_, s, i);
  const double bu = interp(b_u_, s, i);
  const double bl = interp(b_l_, s, i);
  const double wp = std::pow(w, p_);
  const double b = bl - (bl - bu) * wp;

  const double da = slope(a_, i);
  const double dbu = slope(b_u_, i);
  const double dbl = slope(b_l_, i);
  const double db_ds = dbl - (dbl - dbu) * wp;
  const double db_dbeta = -(bl - bu) * p_ * std::pow(w, p_ - 1.0) * 0.5 * cb;

  const Vec3 f(0.0, a * cb, b * sb);
  const Vec3 df_ds(0.0, da * cb, db_ds * sb);
  const Vec3 df_dbeta(0.0, -a * sb, db_dbeta * sb + b * cb);

  SurfaceJacobian J;
  J.col(0) = g.R * (eps + kappa.cross(f) + df_ds);
  J.col(1) = g.R * df_dbeta;
  return J;
}

double LumenModel::max_radius() const {
  double r = 0.0;
  for (std::size_t i = 0; i < a_.size(); ++i) r = std::max({r, a_[i], b_u_[i], b_l_[i]});
  return r;
}

// ---------------------------------------------------------------------------
// Synthetic fixtures

namespace {

struct SpiralCurve {
  const SpiralParams& prm;
  double theta_max;

  double radius(double th) const {
    return prm.start_radius + (prm.end_radius - prm.start_radius) * th / theta_max;
  }
  Vec3 point(double th) const {
    const double R = radius(th);
    return {R * std::cos(th), R * std::sin(th), prm.rise * th / (2.0 * std::numbers::pi)};
  }
  Vec3 derivative(double th) const {
    const double R = radius(th);
    const double dR = (prm.end_radius - prm.start_radius) / theta_max;
    return {dR * std::cos(th) - R * std::sin(th), dR * std::sin(th) + R * std::cos(th),
            prm.rise / (2.0 * std::numbers::pi)};
  }
  double speed(double th) const { return derivative(th).norm(); }
};

double lerp(double a, double b, double u) { return a + (b - a) * u; }

// Polar angle at arc length s: table lookup followed by Newton steps on the
// Simpson arc length measured from the nearest table node.
double refine_angle(const SpiralCurve& curve, const std::vector<double>& s_table,
                    const std::vector<double>& theta_table, double s) {
  const auto it = std::upper_bound(s_table.begin(), s_table.end(), s);
  std::size_t k = static_cast<std::size_t>(std::distance(s_table.begin(), it));
  k = std::clamp<std::size_t>(k, 1, s_table.size() - 1) - 1;
  const double u = (s - s_table[k]) / (s_table[k + 1] - s_table[k]);
  const double t0 = theta_table[k];
  double th = lerp(t0, theta_table[k + 1], u);
  for (int iter = 0; iter < 4; ++iter) {
    const double tm = 0.5 * (t0 + th);
    const double arc =
        s_table[k] + (th - t0) / 6.0 * (curve.speed(t0) + 4.0 * curve.speed(tm) + curve.speed(th));
    th -= (arc - s) / curve.speed(th);
  }
  return th;
}

}  // namespace

double SyntheticLumen::angle_at(double s) const {
  return refine_angle({params, total_angle}, s_table, theta_table, s);
}

Vec3 SyntheticLumen::centerline(double s) const {
  return SpiralCurve{params, total_angle}.point(angle_at(s));
}

double SyntheticLumen::a_exact(double s) const {
  return lerp(params.a_start, params.a_end, s / s_table.back());
}
double SyntheticLumen::bu_exact(double s) const {
  return lerp(params.bu_start, params.bu_end, s / s_table.back());
}
double SyntheticLumen::bl_exact(double s) const {
  return lerp(params.bl_start, params.bl_end, s / s_table.back());
}

SyntheticLumen make_spiral_lumen(const SpiralParams& prm) {
  if (prm.stations < 2 || prm.turns <= 0.0 || prm.start_radius <= 0.0 || prm.end_radius <= 0.0) {
    throw InvalidArgument("make_spiral_lumen: invalid spiral parameters");
  }
  SyntheticLumen out;
  out.params = prm;
  out.total_angle = 2.0 * std::numbers::pi * prm.turns;
  const SpiralCurve curve{prm, out.total_angle};

  // Neighbouring turns must not overlap in the plane.
  const double spacing = std::abs(prm.start_radius - prm.end_radius) / prm.turns;
  if (prm.rise == 0.0 && prm.turns > 1.0) {
    const double widest = std::max(prm.a_start, prm.a_end);
    if (spacing <= 2.0 * widest) {
      throw InvalidArgument("make_spiral_lumen: turns overlap; reduce radii or widen the spiral");
    }
  }

  // Dense arc-length table by composite Simpson integration.
  const int n = 20000;
  out.s_table.resize(n + 1);
  out.theta_table.resize(n + 1);
  const double dth = out.total_angle / n;
  out.s_table[0] = 0.0;
  out.theta_table[0] = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t0 = k * dth;
    const double t1 = t0 + dth;
    out.theta_table[k + 1] = t1;
    out.s_table[k + 1] = out.s_table[k] + dth / 6.0 *
                                              (curve.speed(t0) + 4.0 * curve.speed(t0 + 0.5 * dth) +
                                               curve.speed(t1));
  }
  const double L = out.s_table.back();

  std::vector<StationFrame> frames;
  std::vector<double> a, bu, bl;
  for (int i = 0; i < prm.stations; ++i) {
    const double s = L * i / (prm.stations - 1);
    const double th_ref = out.angle_at(s);
    const Vec3 x = curve.derivative(th_ref).normalized();
    Vec3 z = Vec3::UnitZ() - Vec3::UnitZ().dot(x) * x;
    z.normalize();
    const Vec3 y = z.cross(x);
    Mat3 R;
    R << x, y, z;
    frames.push_back({i == prm.stations - 1 ? L : s, Pose(R, curve.point(th_ref))});
    const double u = s / L;
    a.push_back(lerp(prm.a_start, prm.a_end, u));
    bu.push_back(lerp(prm.bu_start, prm.bu_end, u));
    bl.push_back(lerp(prm.bl_start, prm.bl_end, u));
  }
  frames.front().s = 0.0;
  out.model = LumenModel(std::move(frames), std::move(a), std::move(bu), std::move(bl),
                         prm.exponent);
  out.model.set_spiral_axis({Vec3::Zero(), Vec3::UnitZ()});
  return out;
}

LumenModel make_straight_tube(double length, double a, double b_u, double b_l, int stations,
                              double p) {
  if (stations < 2 || length <= 0.0) throw InvalidArgument("make_straight_tube: bad arguments");
  std::vector<StationFrame> frames;
  for (int i = 0; i < stations; ++i) {
    const double s = length * i / (stations - 1);
    frames.push_back({s, Pose::translation(Vec3(s, 0.0, 0.0))});
  }
  const auto n = static_cast<std::size_t>(stations);
  return LumenModel(std::move(frames), std::vector<double>(n, a), std::vector<double>(n, b_u),
                    std::vector<double>(n, b_l), p);
}

LumenModel make_tapered_tube(double length, double a0, double a1, int stations) {
  if (stations < 2 || length <= 0.0) throw InvalidArgument("make_tapered_tube: bad arguments");
  std::vector<StationFrame> frames;
  std::vector<double> r;
  for (int i = 0; i < stations; ++i) {
    const double u = static_cast<double>(i) / (stations - 1);
    frames.push_back({length * u, Pose::translation(Vec3(length * u, 0.0, 0.0))});
    r.push_back(lerp(a0, a1, u));
  }
  return LumenModel(std::move(frames), r, r, r, 1.0);
}

// ---------------------------------------------------------------------------
// JSON

std::string lumen_to_json(const LumenModel& m) {
  json j;
  j["schema"] = "cisim.lumen/1";
  json st = json::array();
  for (const auto& f : m.frames()) {
    json g = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) g.push_back(f.g.R(r, c));
      g.push_back(f.g.p(r));
    }
    st.push_back({{"s", f.s}, {"g", g}});
  }
  j["stations"] = st;
  json xi = json::array();
  for (const auto& x : m.twists()) xi.push_back(std::vector<double>(x.data(), x.data() + 6));
  j["xi"] = xi;
  j["a"] = m.a();
  j["b_u"] = m.b_u();
  j["b_l"] = m.b_l();
  j["p"] = m.exponent();
  j["L"] = m.length();
  if (m.spiral_axis()) {
    const auto& ax = *m.spiral_axis();
    j["spiral_axis"] = {{"center", {ax.center.x(), ax.center.y(), ax.center.z()}},
                        {"axis", {ax.axis.x(), ax.axis.y(), ax.axis.z()}}};
  }
  return j.dump(1);
}

LumenModel lumen_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("lumen JSON: ") + e.what());
  }
  try {
    std::vector<StationFrame> frames;
    for (const auto& st : j.at("stations")) {
      const auto g = st.at("g").get<std::vector<double>>();
      if (g.size() != 12) throw ParseError("lumen JSON: station pose needs 12 values");
      StationFrame f;
      f.s = st.at("s").get<double>();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) f.g.R(r, c) = g[4 * r + c];
        f.g.p(r) = g[4 * r + 3];
      }
      frames.push_back(f);
    }
    std::vector<Twist> xi;
    for (const auto& x : j.at("xi")) {
      const auto v = x.get<std::vector<double>>();
      if (v.size() != 6) throw ParseError("lumen JSON: twist needs 6 values");
      xi.push_back(Eigen::Map<const Vec6>(v.data()));
    }
    LumenModel m = LumenModel::from_parts(
        std::move(frames), std::move(xi), j.at("a").get<std::vector<double>>(),
        j.at("b_u").get<std::vector<double>>(), j.at("b_l").get<std::vector<double>>(),
        j.at("p").get<double>(), j.at("L").get<double>());
    if (j.contains("spiral_axis")) {
      const auto c = j["spiral_axis"].at("center").get<std::vector<double>>();
      const auto a = j["spiral_axis"].at("axis").get<std::vector<double>>();
      if (c.size() != 3 || a.size() != 3) throw ParseError("lumen JSON: bad spiral_axis");
      m.set_spiral_axis({Vec3(c[0], c[1], c[2]), Vec3(a[0], a[1], a[2])});
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("lumen JSON: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("lumen JSON: ") + e.what());
  }
}

void save_lumen(const LumenModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << lumen_to_json(model) << '\n';
}

LumenModel load_lumen(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return lumen_from_json(ss.str());
}

}  // namespace cisim
