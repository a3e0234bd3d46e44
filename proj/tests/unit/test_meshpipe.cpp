#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"

#include "cisim/error.hpp"
#include "cisim/meshpipe.hpp"

using namespace cisim;

namespace {

constexpr double kPi = std::numbers::pi;

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("cisim_test_" + name)).string();
}

TriMesh unit_cube() {
  std::vector<std::array<Vec3, 3>> soup;
  const Vec3 c[8] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                     {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  const int quads[6][4] = {{0, 3, 2, 1}, {4, 5, 6, 7}, {0, 1, 5, 4},
                           {2, 3, 7, 6}, {1, 2, 6, 5}, {0, 4, 7, 3}};
  for (const auto& q : quads) {
    soup.push_back({c[q[0]], c[q[1]], c[q[2]]});
    soup.push_back({c[q[0]], c[q[2]], c[q[3]]});
  }
  return weld_soup(soup);
}

TriMesh merge(const TriMesh& a, const TriMesh& b) {
  TriMesh m = a;
  const int off = static_cast<int>(a.vertices.size());
  m.vertices.insert(m.vertices.end(), b.vertices.begin(), b.vertices.end());
  for (auto t : b.triangles) m.triangles.push_back({t[0] + off, t[1] + off, t[2] + off});
  return m;
}

TriMesh translate(TriMesh m, const Vec3& d) {
  for (auto& v : m.vertices) v += d;
  return m;
}

}  // namespace

TEST_CASE("STL loading and welding") {
  const TriMesh cube = unit_cube();
  CHECK(cube.vertices.size() == 8);
  CHECK(cube.triangles.size() == 12);

  const std::string bin = tmp_path("cube.stl");
  const std::string asc = tmp_path("cube_ascii.stl");
  save_stl_binary(cube, bin);
  save_stl_ascii(cube, asc);
  const TriMesh mb = load_trimesh(bin);
  const TriMesh ma = load_trimesh(asc);
  CHECK(mb.vertices.size() == 8);
  CHECK(mb.triangles.size() == 12);
  REQUIRE(ma.vertices.size() == mb.vertices.size());
  for (std::size_t i = 0; i < ma.vertices.size(); ++i) CHECK(ma.vertices[i] == mb.vertices[i]);
  CHECK(ma.triangles == mb.triangles);

  // One zero-area facet (collinear corners) is dropped.
  const std::string bad = tmp_path("degenerate.stl");
  {
    std::ofstream out(bad);
    out << "solid x\n facet normal 0 0 1\n outer loop\n vertex 0 0 0\n vertex 1 0 0\n vertex 0 1 0\n"
           " endloop\n endfacet\n facet normal 0 0 1\n outer loop\n vertex 0 0 0\n vertex 1 0 0\n"
           " vertex 2 0 0\n endloop\n endfacet\nendsolid x\n";
  }
  const TriMesh md = load_trimesh(bad);
  CHECK(md.triangles.size() == 1);
  CHECK(md.dropped_triangles == 1);

  const std::string empty = tmp_path("empty.stl");
  { std::ofstream out(empty); }
  CHECK_THROWS_AS(load_trimesh(empty), EmptyMesh);
  CHECK_THROWS_AS(load_trimesh(tmp_path("does_not_exist.stl")), ParseError);
  std::remove(bin.c_str());
  std::remove(asc.c_str());
  std::remove(bad.c_str());
  std::remove(empty.c_str());
}

TEST_CASE("arclength_parametrize") {
  const auto cl = arclength_parametrize({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}});
  CHECK(cl.s == std::vector<double>{0.0, 1.0, 2.0});
  CHECK(arclength_parametrize({{0, 0, 0}, {3, 4, 0}}).length() == 5.0);
  CHECK_THROWS_AS(arclength_parametrize({{0, 0, 0}, {0, 0, 0}, {1, 0, 0}}), DegeneratePolyline);
  CHECK_THROWS_AS(arclength_parametrize({{0, 0, 0}}), DegeneratePolyline);

  // Discretized helix against the closed-form length.
  const double R = 2.0, c = 0.5, turns = 3.0;
  std::vector<Vec3> pts;
  for (int k = 0; k < 1000; ++k) {
    const double th = 2 * kPi * turns * k / 999.0;
    pts.emplace_back(R * std::cos(th), R * std::sin(th), c * th);
  }
  const double exact = 2 * kPi * turns * std::sqrt(R * R + c * c);
  CHECK(std::abs(arclength_parametrize(pts).length() - exact) < 1e-3 * exact);
}

TEST_CASE("select_samples") {
  const auto line = arclength_parametrize({{0, 0, 0}, {2, 0, 0}});
  const auto u = select_samples(line, {SampleStrategy::Kind::Uniform, 4, 0.0});
  CHECK(u == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0});

  // Arc (first half) followed by a straight line (second half).
  std::vector<Vec3> pts;
  const double R = 1.0;
  const int na = 200;
  for (int k = 0; k <= na; ++k) {
    const double th = kPi * k / na;
    pts.emplace_back(R * std::sin(th), R * (1 - std::cos(th)), 0);
  }
  const double arc_len = kPi * R;
  for (int k = 1; k <= na; ++k) pts.emplace_back(-arc_len * k / na, 2 * R, 0);
  const auto cl = arclength_parametrize(pts);
  const auto g0 = select_samples(cl, {SampleStrategy::Kind::CurvatureRefined, 20, 0.0});
  const auto gu = select_samples(cl, {SampleStrategy::Kind::Uniform, 20, 0.0});
  for (std::size_t i = 0; i < g0.size(); ++i) CHECK(g0[i] == doctest::Approx(gu[i]).epsilon(1e-12));

  const auto g5 = select_samples(cl, {SampleStrategy::Kind::CurvatureRefined, 20, 5.0});
  CHECK(g5.front() == 0.0);
  CHECK(g5.back() == cl.length());
  int on_arc = 0, on_line = 0;
  for (std::size_t i = 1; i + 1 < g5.size(); ++i) {
    CHECK(g5[i] > g5[i - 1]);
    (g5[i] < 0.5 * cl.length() ? on_arc : on_line)++;
  }
  CHECK(on_arc > on_line);
}

TEST_CASE("slice_normal_plane and select_component") {
  const double R = 1.0;
  const LumenModel tube = make_straight_tube(6.0, R, R, R, 4);
  const TriMesh mesh = triangulate_lumen(tube, 0.05);
  const auto contours = slice_normal_plane(mesh, Vec3(2.51, 0, 0), Vec3::UnitX());
  REQUIRE(contours.size() == 1);
  CHECK(contours[0].closed);
  const int nb = static_cast<int>(std::ceil(2 * kPi * R / 0.05));
  const double sag = R * (1 - std::cos(kPi / nb));
  for (const auto& p : contours[0].points) {
    CHECK(std::abs(p.x() - 2.51) < 1e-12);
    const double rad = std::hypot(p.y(), p.z());
    CHECK(rad <= R + 1e-12);
    CHECK(rad >= R - sag - 1e-12);
  }

  CHECK_THROWS_AS(slice_normal_plane(mesh, Vec3(50, 0, 0), Vec3::UnitX()), NoIntersection);

  const TriMesh two = merge(mesh, translate(mesh, Vec3(0, 5, 0)));
  const auto both = slice_normal_plane(two, Vec3(3.0, 0, 0), Vec3::UnitX());
  CHECK(both.size() == 2);
  const Contour& pick = select_component(both, Vec3(3.0, 0.1, 0));
  for (const auto& p : pick.points) CHECK(p.y() < 2.0);
  const Contour& pick_b = select_component(both, Vec3(3.0, 4.8, 0));
  for (const auto& p : pick_b.points) CHECK(p.y() > 2.0);
  CHECK(&select_component({contours[0]}, Vec3::Zero()) != nullptr);

  // Equidistant centroids: the denser contour wins.
  Contour c40, c80;
  for (int i = 0; i < 40; ++i) c40.points.emplace_back(0, 1 + std::cos(2 * kPi * i / 40), std::sin(2 * kPi * i / 40));
  for (int i = 0; i < 80; ++i) c80.points.emplace_back(0, -1 + std::cos(2 * kPi * i / 80), std::sin(2 * kPi * i / 80));
  const std::vector<Contour> tie = {c40, c80};
  CHECK(select_component(tie, Vec3::Zero()).points.size() == 80);
}

TEST_CASE("pca_section") {
  const Vec3 t = Vec3::UnitX();
  const auto [e2, e3] = plane_basis(t);
  CHECK(std::abs(e2.dot(t)) < 1e-15);
  CHECK(std::abs(e3.dot(e2)) < 1e-15);

  // Ellipse with semi-axes (2, 1) along e2, e3.
  std::vector<Vec3> ell;
  const int n = 400;
  for (int i = 0; i < n; ++i) {
    const double th = 2 * kPi * i / n;
    ell.push_back(2 * std::cos(th) * e2 + std::sin(th) * e3);
  }
  // Oracle: brute-force covariance eigenvalues of the same samples.
  double sxx = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    const double th = 2 * kPi * i / n;
    sxx += 4 * std::cos(th) * std::cos(th);
    syy += std::sin(th) * std::sin(th);
  }
  const PcaSection sec = pca_section(ell, Vec3::Zero(), t);
  CHECK(sec.a == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(std::abs(sec.major.dot(e2)) - 1.0) < 1e-12);
  CHECK(sec.anisotropy == doctest::Approx(syy / sxx).epsilon(1e-12));
  CHECK(sec.anisotropy == doctest::Approx(0.25).epsilon(1e-12));
  // Endpoints are contour members.
  CHECK(std::find(ell.begin(), ell.end(), sec.p_plus) != ell.end());
  CHECK(std::find(ell.begin(), ell.end(), sec.p_minus) != ell.end());

  std::vector<Vec3> circ;
  for (int i = 0; i < 360; ++i) {
    const double th = 2 * kPi * i / 360;
    circ.push_back(std::cos(th) * e2 + std::sin(th) * e3);
  }
  const PcaSection sc = pca_section(circ, Vec3::Zero(), t);
  CHECK(sc.a == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sc.anisotropy > 0.99);

  const PcaSection two = pca_section({3.0 * e2, -3.0 * e2}, Vec3::Zero(), t);
  CHECK(two.a == doctest::Approx(3.0));
  CHECK((two.p_plus - 3.0 * e2).norm() + (two.p_minus + 3.0 * e2).norm() < 1e-15);

  CHECK_THROWS_AS(pca_section({Vec3(0, 1, 1), Vec3(0, 1, 1), Vec3(0, 1, 1)}, Vec3::Zero(), t),
                  DegenerateContour);

  // Rigid invariance of a.
  const Pose T = exp_se3((Twist() << 0.3, 1.1, -0.4, 2.0, 1.0, -3.0).finished());
  std::vector<Vec3> moved;
  for (const auto& p : ell) moved.push_back(T.apply(p));
  const PcaSection sm = pca_section(moved, T.p, T.R * t);
  CHECK(std::abs(sm.a - sec.a) < 1e-9);
}

TEST_CASE("stations JSON") {
  StationSample st;
  st.s = 1.25;
  st.r = Vec3(1, 2, 3);
  st.t = Vec3(0, 1, 0);
  st.a = 0.4;
  st.p_minus = Vec3(0.1, 0.2, 0.3);
  st.p_plus = Vec3(-0.1, 0.7, 0.3);
  st.anisotropy = 0.5;
  const std::string text = stations_to_json({st, st});
  for (const char* key : {"\"s\"", "\"r\"", "\"t\"", "\"a\"", "\"p_minus\"", "\"p_plus\"", "\"anisotropy\""}) {
    CHECK(text.find(key) != std::string::npos);
  }
  const auto back = stations_from_json(text);
  REQUIRE(back.size() == 2);
  CHECK(back[1].p_plus == st.p_plus);
  CHECK(back[1].anisotropy == st.anisotropy);
}

TEST_CASE("tube mesh round trip recovers the generating radius") {
  const LumenModel tube = make_tapered_tube(8.0, 0.6, 0.4, 5);
  const double chord = 0.05;
  const TriMesh mesh = triangulate_lumen(tube, chord, 2 * chord);
  std::vector<Vec3> pts;
  for (int k = 0; k <= 160; ++k) pts.emplace_back(8.0 * k / 160, 0, 0);
  const auto cl = arclength_parametrize(pts);
  const auto samples = select_samples(cl, {SampleStrategy::Kind::Uniform, 16, 0.0});
  // Circular sections are ill-conditioned for PCA; a is still the half extent.
  const auto ex = extract_stations(mesh, cl, samples);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(std::abs(ex.stations[i].a - tube.a_at(samples[i])) < 2 * chord);
  }
  const LumenModel rebuilt = lumen_from_stations(ex);
  CHECK(rebuilt.length() == doctest::Approx(8.0));
}
