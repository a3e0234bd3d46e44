#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"

#include "cisim/error.hpp"
#include "cisim/lumen.hpp"

using namespace cisim;

namespace {

constexpr double kPi = std::numbers::pi;

StationSample station(double s, Vec3 r, Vec3 t, Vec3 pm, Vec3 pp) {
  StationSample st;
  st.s = s;
  st.r = r;
  st.t = t;
  st.p_minus = pm;
  st.p_plus = pp;
  st.a = 0.5 * (pp - pm).norm();
  return st;
}

// Circular arc of radius R in the xy plane, starting at the origin along +x.
Pose arc_pose(double R, double s) {
  const double th = s / R;
  Mat3 rot;
  rot << std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0, 0, 0, 1;
  return {rot, Vec3(R * std::sin(th), R * (1 - std::cos(th)), 0)};
}

LumenModel quarter_arc(double R) {
  std::vector<StationFrame> frames = {{0.0, arc_pose(R, 0.0)}, {R * kPi / 2, arc_pose(R, R * kPi / 2)}};
  return LumenModel(frames, {0.3, 0.25}, {0.2, 0.22}, {0.3, 0.26}, 2.0);
}

}  // namespace

TEST_CASE("build_frames") {
  std::vector<StationSample> st = {
      station(0, Vec3::Zero(), Vec3::UnitX(), Vec3(0, 0, -1), Vec3(0, 0, 1)),
      station(1, Vec3(1, 0, 0), Vec3::UnitX(), Vec3(0, 0, 1), Vec3(0, 0, -1)),
  };
  const auto frames = build_frames(st);
  CHECK((frames[0].g.R - Mat3::Identity()).norm() < 1e-15);
  // Swapped endpoints are flipped back for continuity.
  CHECK((frames[1].g.R - Mat3::Identity()).norm() < 1e-15);
  CHECK(frames[1].g.R.determinant() == doctest::Approx(1.0));

  st[1].p_plus = Vec3(1.0, 0, 0);
  st[1].p_minus = Vec3(-1.0, 0, 0);
  CHECK_THROWS_AS(build_frames(st), ParallelAxes);
}

TEST_CASE("build_frames on a helix") {
  const double rh = 2.0, pitch = 1.0;
  const double c = pitch / (2 * kPi);
  const double speed = std::sqrt(rh * rh + c * c);
  std::vector<StationSample> st;
  const int n = 72;  // two turns, 36 stations per turn
  for (int i = 0; i < n; ++i) {
    const double th = 2 * kPi * i / 36.0;
    const Vec3 r(rh * std::cos(th), rh * std::sin(th), c * th);
    const Vec3 t = Vec3(-rh * std::sin(th), rh * std::cos(th), c) / speed;
    // Major axis along the helix binormal-ish direction with alternating sign.
    Vec3 m = Vec3::UnitZ() - Vec3::UnitZ().dot(t) * t;
    m.normalize();
    if (i % 3 == 0) m = -m;
    st.push_back(station(speed * th, r, t, r - 0.3 * m, r + 0.3 * m));
  }
  const auto frames = build_frames(st);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(frames[i].g.R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((frames[i].g.R.col(0) - st[i].t).norm() < 1e-9);
    if (i > 0) {
      const Mat3 dR = frames[i - 1].g.R.transpose() * frames[i].g.R;
      CHECK(log_so3(dR).norm() < kPi / 4);
    }
  }
}

TEST_CASE("fit_pcs") {
  std::vector<StationFrame> same = {{0.0, Pose()}, {1.0, Pose()}};
  CHECK(fit_pcs(same)[0].isZero(0.0));

  std::vector<StationFrame> tr = {{0.0, Pose()}, {0.7, Pose::translation(Vec3(0.7, 0, 0))}};
  Twist ex;
  ex << 0, 0, 0, 1, 0, 0;
  CHECK((fit_pcs(tr)[0] - ex).norm() < 1e-15);

  const double R = 1.7;
  const LumenModel m = quarter_arc(R);
  Twist expected;
  expected << 0, 0, 1 / R, 1, 0, 0;
  CHECK((m.twists()[0] - expected).norm() < 1e-9);
}

TEST_CASE("pose_at") {
  const double R = 1.7;
  const LumenModel m = quarter_arc(R);
  const double L = m.length();
  CHECK(m.pose_at(0.0).matrix() == m.frames()[0].g.matrix());
  CHECK((m.pose_at(L).matrix() - m.frames()[1].g.matrix()).cwiseAbs().maxCoeff() < 1e-8);
  const Pose mid = m.pose_at(0.5 * L);
  const Vec3 on_arc(R * std::sin(kPi / 4), R * (1 - std::cos(kPi / 4)), 0);
  CHECK((mid.p - on_arc).norm() < 1e-8);

  CHECK_NOTHROW(m.pose_at(L + 5e-10));
  CHECK(m.clamp_warnings() == 1);
  CHECK_THROWS_AS(m.pose_at(L + 1e-6), OutOfRange);
  CHECK_THROWS_AS(m.pose_at(-1e-6), OutOfRange);
}

TEST_CASE("profile_b") {
  CHECK(profile_b(0.4, 0.3, 2.0, kPi / 2) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(profile_b(0.4, 0.3, 2.0, 3 * kPi / 2) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(profile_b(1.0, 0.5, 1.0, 0.0) == doctest::Approx(0.75).epsilon(1e-15));

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 2 * kPi);
  for (int i = 0; i < 200; ++i) {
    const double b = profile_b(0.4, 0.3, 1.0 + i % 4, u(rng));
    CHECK(b >= 0.3 - 1e-15);
    CHECK(b <= 0.4 + 1e-15);
  }
}

TEST_CASE("surface_point") {
  const LumenModel tube = make_straight_tube(4.0, 0.6, 0.4, 0.5);
  CHECK((tube.surface_point(0.0, 0.0) - Vec3(0, 0.6, 0)).norm() < 1e-15);
  CHECK((tube.surface_point(0.0, kPi / 2) - Vec3(0, 0, 0.4)).norm() < 1e-15);
  CHECK((tube.surface_point(2.0, 2 * kPi - 1e-12) - tube.surface_point(2.0, 0.0)).norm() < 1e-9);
  // Normal-plane property.
  const SyntheticLumen sp = make_spiral_lumen();
  for (double s : {0.3, 5.0, 17.2}) {
    const Pose g = sp.model.pose_at(s);
    for (double b : {0.1, 1.9, 4.0}) {
      CHECK(std::abs(g.R.col(0).dot(sp.model.surface_point(s, b) - g.p)) < 1e-12);
    }
  }
}

TEST_CASE("surface_jacobian") {
  const LumenModel tube = make_straight_tube(4.0, 0.6, 0.6, 0.6);
  const SurfaceJacobian J = tube.surface_jacobian(1.3, 0.0);
  CHECK((J.col(0) - Vec3::UnitX()).norm() < 1e-15);
  CHECK((J.col(1) - Vec3(0, 0, 0.6)).norm() < 1e-15);

  const SyntheticLumen sp = make_spiral_lumen();
  const LumenModel& m = sp.model;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> us(0.0, m.length());
  std::uniform_real_distribution<double> ub(0.0, 2 * kPi);
  const double h = 1e-6;
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const double s = us(rng);
    const double b = ub(rng);
    const std::size_t seg = m.segment_of(s);
    if (s - h < m.frames()[seg].s || s + h > m.frames()[seg + 1].s) continue;
    const SurfaceJacobian Ja = m.surface_jacobian(s, b);
    const Vec3 ds = (m.surface_point(s + h, b) - m.surface_point(s - h, b)) / (2 * h);
    const Vec3 db = (m.surface_point(s, b + h) - m.surface_point(s, b - h)) / (2 * h);
    CHECK((Ja.col(0) - ds).norm() < 1e-5 * ds.norm());
    CHECK((Ja.col(1) - db).norm() < 1e-5 * db.norm());
    ++checked;
  }
  CHECK(checked > 250);
}

TEST_CASE("beta continuity at 0 and pi") {
  const SyntheticLumen sp = make_spiral_lumen();
  const LumenModel& m = sp.model;
  for (double s : {0.5, 9.1, 20.0}) {
    for (double b0 : {0.0, kPi}) {
      const double e = 1e-10;
      CHECK((m.surface_point(s, b0 + e) - m.surface_point(s, b0 - e)).norm() < 1e-9);
      CHECK((m.surface_jacobian(s, b0 + e) - m.surface_jacobian(s, b0 - e)).norm() < 1e-9);
    }
    CHECK((m.surface_point(s, 2 * kPi) - m.surface_point(s, 0.0)).norm() < 1e-9);
  }
}

TEST_CASE("synthetic spiral reconstruction") {
  const SyntheticLumen sp = make_spiral_lumen();
  const LumenModel& m = sp.model;
  REQUIRE(m.frames().size() == 40);
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < m.frames().size(); ++i) {
    const double ds = m.frames()[i + 1].s - m.frames()[i].s;
    const Pose g = m.frames()[i].g * exp_se3(m.twists()[i], ds);
    worst = std::max(worst, (g.matrix() - m.frames()[i + 1].g.matrix()).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-8);
  CHECK(sp.total_angle == doctest::Approx(5 * kPi));
  // Station positions lie on the exact centerline.
  for (const auto& f : m.frames()) CHECK((sp.centerline(f.s) - f.g.p).norm() < 1e-9);
  // Profiles interpolate the generating tapers exactly (both are linear in s).
  for (double s : {0.0, 3.3, 20.0, m.length()}) {
    CHECK(m.a_at(s) == doctest::Approx(sp.a_exact(s)).epsilon(1e-12));
  }
  // Polar angle of the centerline tracks angle_at.
  for (double s : {1.0, 10.0, 25.0}) {
    const Vec3 c = sp.centerline(s);
    double th = std::atan2(c.y(), c.x());
    const double target = sp.angle_at(s);
    while (th < target - kPi) th += 2 * kPi;
    CHECK(th == doctest::Approx(target).epsilon(1e-9));
  }
}

TEST_CASE("rigid invariance of the surface") {
  const SyntheticLumen sp = make_spiral_lumen();
  const Pose T = exp_se3((Twist() << 0.4, -0.2, 0.9, 3.0, -1.0, 2.0).finished());
  std::vector<StationFrame> moved = sp.model.frames();
  for (auto& f : moved) f.g = T * f.g;
  const LumenModel m2(moved, sp.model.a(), sp.model.b_u(), sp.model.b_l(), sp.model.exponent());
  for (double s : {0.2, 7.7, 30.0}) {
    for (double b : {0.0, 1.0, 3.5}) {
      CHECK((m2.surface_point(s, b) - T.apply(sp.model.surface_point(s, b))).norm() < 1e-9);
    }
  }
}

TEST_CASE("JSON round trip is bit exact") {
  SyntheticLumen sp = make_spiral_lumen();
  const std::string text = lumen_to_json(sp.model);
  const LumenModel back = lumen_from_json(text);
  REQUIRE(back.frames().size() == sp.model.frames().size());
  for (std::size_t i = 0; i < back.frames().size(); ++i) {
    CHECK(back.frames()[i].s == sp.model.frames()[i].s);
    CHECK(back.frames()[i].g.matrix() == sp.model.frames()[i].g.matrix());
    CHECK(back.a()[i] == sp.model.a()[i]);
    CHECK(back.b_u()[i] == sp.model.b_u()[i]);
    CHECK(back.b_l()[i] == sp.model.b_l()[i]);
  }
  for (std::size_t i = 0; i < back.twists().size(); ++i) CHECK(back.twists()[i] == sp.model.twists()[i]);
  CHECK(back.length() == sp.model.length());
  REQUIRE(back.spiral_axis().has_value());
  CHECK(lumen_to_json(back) == text);

  CHECK_THROWS_AS(lumen_from_json("{\"stations\": 3}"), ParseError);
  CHECK_THROWS_AS(lumen_from_json("not json"), ParseError);
}

TEST_CASE("invalid models are rejected") {
  std::vector<StationFrame> frames = {{0.0, Pose()}, {1.0, Pose::translation(Vec3(1, 0, 0))}};
  CHECK_THROWS_AS(LumenModel(frames, {0.1, -0.1}, {0.1, 0.1}, {0.1, 0.1}), InvalidArgument);
  CHECK_THROWS_AS(LumenModel(frames, {0.1, 0.1}, {0.1, 0.1}, {0.1, 0.1}, 0.5), InvalidArgument);
  SpiralParams p;
  p.a_start = 0.6;
  CHECK_THROWS_AS(make_spiral_lumen(p), InvalidArgument);
}
