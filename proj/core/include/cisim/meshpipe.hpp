#pragma once

// Surface mesh + centerline polyline -> cross-section stations.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cisim/liegroup.hpp"
#include "cisim/lumen.hpp"
#include "cisim/station.hpp"

namespace cisim {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  /// Zero-area triangles dropped while loading.
  std::size_t dropped_triangles = 0;
};

enum class StlFormat { Auto, Binary, Ascii };

/// Reads an STL file; vertices closer than `weld_tol` mm are merged.
TriMesh load_trimesh(const std::string& path, StlFormat format = StlFormat::Auto,
                     double weld_tol = 1e-6);
/// Builds a welded mesh from a triangle soup (three corners per triangle).
TriMesh weld_soup(const std::vector<std::array<Vec3, 3>>& soup, double weld_tol = 1e-6);

void save_stl_binary(const TriMesh& mesh, const std::string& path);
void save_stl_ascii(const TriMesh& mesh, const std::string& path);

struct CenterlinePolyline {
  std::vector<Vec3> points;
  std::vector<double> s;  // cumulative arc length, s[0] = 0

  double length() const { return s.empty() ? 0.0 : s.back(); }
  /// Linear interpolation at arc length s (clamped to [0, L]).
  Vec3 at(double s) const;
  /// Unit tangent by central differences of at() with step h; one-sided at the ends.
  Vec3 tangent(double s, double h) const;
  /// Mean segment length, the default tangent step.
  double mean_spacing() const;
};

CenterlinePolyline arclength_parametrize(const std::vector<Vec3>& points);

/// CSV (x,y,z per row; a non-numeric header row is skipped) or a JSON array of
/// 3-arrays, chosen by extension.
std::vector<Vec3> load_centerline_points(const std::string& path);

struct SampleStrategy {
  enum class Kind { Uniform, CurvatureRefined } kind = Kind::Uniform;
  int n = 40;          // number of intervals; n + 1 samples are returned
  double gamma = 0.0;  // curvature weight for CurvatureRefined
};

std::vector<double> select_samples(const CenterlinePolyline& cl, const SampleStrategy& strategy);

/// Discrete curvature at each polyline vertex (turning angle over the mean
/// adjacent segment length; zero at the ends).
std::vector<double> discrete_curvature(const CenterlinePolyline& cl);

struct Contour {
  std::vector<Vec3> points;
  bool closed = false;
};

std::vector<Contour> slice_normal_plane(const TriMesh& mesh, const Vec3& r, const Vec3& t,
                                        double match_tol = 1e-6);

const Contour& select_component(const std::vector<Contour>& contours, const Vec3& r);

struct PcaSection {
  Vec3 p_minus = Vec3::Zero();
  Vec3 p_plus = Vec3::Zero();
  double a = 0.0;
  double anisotropy = 0.0;
  Vec3 major = Vec3::UnitY();  // unit major-axis direction in 3D
};

/// Deterministic in-plane basis (e2, e3) orthogonal to t.
std::pair<Vec3, Vec3> plane_basis(const Vec3& t);

PcaSection pca_section(const std::vector<Vec3>& contour, const Vec3& r, const Vec3& t);

/// Endpoints and effective radius along a prescribed in-plane direction.
PcaSection extremal_section(const std::vector<Vec3>& contour, const Vec3& direction);

struct ExtractOptions {
  double anisotropy_threshold = 0.9;
  bool smooth = false;       // 3-point moving average on closed contours
  double tangent_step = 0.0;  // 0 selects the centerline mean spacing
};

struct ExtractedStations {
  std::vector<StationSample> stations;
  std::vector<double> b_u;  // perpendicular extents either side of the major axis
  std::vector<double> b_l;
  std::vector<bool> propagated;  // major direction inherited from the previous station
};

ExtractedStations extract_stations(const TriMesh& mesh, const CenterlinePolyline& cl,
                                   const std::vector<double>& s_samples,
                                   const ExtractOptions& options = {});

/// LumenModel from extracted stations (build_frames + profiles).
LumenModel lumen_from_stations(const ExtractedStations& ex, double p = 2.0);

std::string stations_to_json(const std::vector<StationSample>& stations);
std::vector<StationSample> stations_from_json(const std::string& text);

/// Triangulates the lumen surface with edge lengths at most `chord` mm. The
/// tube is extended past both ends by `extend` mm along the end segments.
TriMesh triangulate_lumen(const LumenModel& model, double chord, double extend = 0.0);

}  // namespace cisim
