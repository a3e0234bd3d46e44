#include "cisim/meshpipe.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "cisim/error.hpp"

namespace cisim {

using json = nlohmann::json;

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::size_t h = static_cast<std::size_t>(k.x) * 73856093u;
    h ^= static_cast<std::size_t>(k.y) * 19349663u;
    h ^= static_cast<std::size_t>(k.z) * 83492791u;
    return h;
  }
};

// Spatial hash that returns the index of an existing point within `tol`,
// inserting the point otherwise.
class PointWelder {
 public:
  explicit PointWelder(double tol) : tol_(tol), cell_(std::max(tol, 1e-12)) {}

  int insert(const Vec3& p, std::vector<Vec3>& points) {
    const CellKey c = key(p);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = grid_.find({c.x + dx, c.y + dy, c.z + dz});
          if (it == grid_.end()) continue;
          for (int idx : it->second) {
            if ((points[static_cast<std::size_t>(idx)] - p).norm() <= tol_) return idx;
          }
        }
      }
    }
    const int idx = static_cast<int>(points.size());
    points.push_back(p);
    grid_[c].push_back(idx);
    return idx;
  }

 private:
  CellKey key(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
            static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }

  double tol_;
  double cell_;
  std::unordered_map<CellKey, std::vector<int>, CellHash> grid_;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::array<Vec3, 3>> parse_stl_binary(const std::string& data) {
  if (data.size() < 84) throw ParseError("binary STL: file too short");
  std::uint32_t n = 0;
  std::memcpy(&n, data.data() + 80, 4);
  if (data.size() < 84 + 50ull * n) throw ParseError("binary STL: truncated triangle records");
  std::vector<std::array<Vec3, 3>> soup(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const char* rec = data.data() + 84 + 50ull * i;
    float f[12];
    std::memcpy(f, rec, sizeof(f));
    for (int v = 0; v < 3; ++v) soup[i][v] = Vec3(f[3 + 3 * v], f[4 + 3 * v], f[5 + 3 * v]);
  }
  return soup;
}

std::vector<std::array<Vec3, 3>> parse_stl_ascii(const std::string& data) {
  std::istringstream in(data);
  std::string tok;
  std::vector<std::array<Vec3, 3>> soup;
  std::array<Vec3, 3> tri;
  int corner = 0;
  while (in >> tok) {
    if (tok != "vertex") continue;
    double x, y, z;
    if (!(in >> x >> y >> z)) throw ParseError("ASCII STL: malformed vertex line");
    tri[corner++] = Vec3(x, y, z);
    if (corner == 3) {
      soup.push_back(tri);
      corner = 0;
    }
  }
  if (corner != 0) throw ParseError("ASCII STL: facet with fewer than three vertices");
  return soup;
}

bool looks_binary(const std::string& data) {
  if (data.size() < 84) return false;
  std::uint32_t n = 0;
  std::memcpy(&n, data.data() + 80, 4);
  return data.size() == 84 + 50ull * n;
}

}  // namespace

TriMesh weld_soup(const std::vector<std::array<Vec3, 3>>& soup, double weld_tol) {
  TriMesh mesh;
  PointWelder welder(weld_tol);
  for (const auto& tri : soup) {
    std::array<int, 3> idx{};
    for (int v = 0; v < 3; ++v) idx[v] = welder.insert(tri[v], mesh.vertices);
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(idx[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(idx[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(idx[2])];
    const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm()});
    const bool repeated = idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2];
    if (repeated || (b - a).cross(c - a).norm() <= 1e-12 * scale) {
      ++mesh.dropped_triangles;
      continue;
    }
    mesh.triangles.push_back(idx);
  }
  if (mesh.triangles.empty()) throw EmptyMesh("mesh has no non-degenerate triangles");
  return mesh;
}

TriMesh load_trimesh(const std::string& path, StlFormat format, double weld_tol) {
  const std::string data = read_file(path);
  if (data.empty()) throw EmptyMesh("empty STL file: " + path);
  bool binary = format == StlFormat::Binary;
  if (format == StlFormat::Auto) {
    binary = looks_binary(data) || data.compare(0, 5, "solid") != 0;
  }
  const auto soup = binary ? parse_stl_binary(data) : parse_stl_ascii(data);
  if (soup.empty()) throw EmptyMesh("STL file has no triangles: " + path);
  return weld_soup(soup, weld_tol);
}

void save_stl_binary(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  char header[80] = {};
  std::memcpy(header, "cisim binary STL", 16);
  out.write(header, 80);
  const auto n = static_cast<std::uint32_t>(mesh.triangles.size());
  out.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& tri : mesh.triangles) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
    const Vec3 nrm = (b - a).cross(c - a).normalized();
    float f[12];
    for (int k = 0; k < 3; ++k) {
      f[k] = static_cast<float>(nrm[k]);
      f[3 + k] = static_cast<float>(a[k]);
      f[6 + k] = static_cast<float>(b[k]);
      f[9 + k] = static_cast<float>(c[k]);
    }
    out.write(reinterpret_cast<const char*>(f), sizeof(f));
    const std::uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(&attr), 2);
  }
}

void save_stl_ascii(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  // float precision so that both formats load to identical vertices.
  out << std::setprecision(9);
  out << "solid cisim\n";
  for (const auto& tri : mesh.triangles) {
    std::array<Vec3, 3> v;
    for (int k = 0; k < 3; ++k) v[k] = mesh.vertices[static_cast<std::size_t>(tri[k])].cast<float>().cast<double>();
    const Vec3 nrm = (v[1] - v[0]).cross(v[2] - v[0]).normalized();
    out << " facet normal " << nrm.x() << ' ' << nrm.y() << ' ' << nrm.z() << "\n  outer loop\n";
    for (const auto& p : v) out << "   vertex " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    out << "  endloop\n endfacet\n";
  }
  out << "endsolid cisim\n";
}

// ---------------------------------------------------------------------------
// Centerline

CenterlinePolyline arclength_parametrize(const std::vector<Vec3>& points) {
  if (points.size() < 2) throw DegeneratePolyline("centerline needs at least two points");
  CenterlinePolyline cl;
  cl.points = points;
  cl.s.resize(points.size());
  cl.s[0] = 0.0;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double d = (points[k + 1] - points[k]).norm();
    if (d == 0.0) throw DegeneratePolyline("centerline has repeated consecutive points");
    cl.s[k + 1] = cl.s[k] + d;
  }
  return cl;
}

Vec3 CenterlinePolyline::at(double sq) const {
  sq = std::clamp(sq, 0.0, length());
  auto it = std::upper_bound(s.begin(), s.end(), sq);
  std::size_t k = static_cast<std::size_t>(std::distance(s.begin(), it));
  k = std::clamp<std::size_t>(k, 1, s.size() - 1) - 1;
  const double u = (sq - s[k]) / (s[k + 1] - s[k]);
  return (1.0 - u) * points[k] + u * points[k + 1];
}

Vec3 CenterlinePolyline::tangent(double sq, double h) const {
  const double lo = std::max(0.0, sq - h);
  const double hi = std::min(length(), sq + h);
  return (at(hi) - at(lo)).normalized();
}

double CenterlinePolyline::mean_spacing() const {
  return length() / static_cast<double>(points.size() - 1);
}

std::vector<Vec3> load_centerline_points(const std::string& path) {
  const std::string data = read_file(path);
  std::vector<Vec3> pts;
  const bool is_json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  if (is_json) {
    try {
      for (const auto& p : json::parse(data)) {
        const auto v = p.get<std::vector<double>>();
        if (v.size() != 3) throw ParseError("centerline JSON: each point needs 3 coordinates");
        pts.emplace_back(v[0], v[1], v[2]);
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("centerline JSON: ") + e.what());
    }
  } else {
    std::istringstream in(data);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      double x, y, z;
      if (!(ls >> x >> y >> z)) {
        if (first) {
          first = false;
          continue;
        }
        throw ParseError("centerline CSV: malformed row '" + line + "'");
      }
      first = false;
      pts.emplace_back(x, y, z);
    }
  }
  return pts;
}

std::vector<double> discrete_curvature(const CenterlinePolyline& cl) {
  const std::size_t n = cl.points.size();
  std::vector<double> kappa(n, 0.0);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const Vec3 d0 = cl.points[k] - cl.points[k - 1];
    const Vec3 d1 = cl.points[k + 1] - cl.points[k];
    const double ang = std::atan2(d0.cross(d1).norm(), d0.dot(d1));
    kappa[k] = ang / (0.5 * (d0.norm() + d1.norm()));
  }
  return kappa;
}

std::vector<double> select_samples(const CenterlinePolyline& cl, const SampleStrategy& st) {
  if (st.n < 1) throw InvalidArgument("select_samples: need at least two samples");
  const double L = cl.length();
  std::vector<double> out(static_cast<std::size_t>(st.n) + 1);
  if (st.kind == SampleStrategy::Kind::Uniform || st.gamma == 0.0) {
    for (int i = 0; i <= st.n; ++i) out[static_cast<std::size_t>(i)] = L * i / st.n;
    out.back() = L;
    return out;
  }
  // Cumulative density F(s) = int (1 + gamma kappa) ds with kappa linear
  // between polyline vertices; samples at equal increments of F.
  const auto kappa = discrete_curvature(cl);
  std::vector<double> F(cl.s.size(), 0.0);
  for (std::size_t k = 0; k + 1 < cl.s.size(); ++k) {
    const double ds = cl.s[k + 1] - cl.s[k];
    F[k + 1] = F[k] + ds * (1.0 + st.gamma * 0.5 * (kappa[k] + kappa[k + 1]));
  }
  const double total = F.back();
  out[0] = 0.0;
  for (int i = 1; i < st.n; ++i) {
    const double target = total * i / st.n;
    auto it = std::upper_bound(F.begin(), F.end(), target);
    std::size_t k = static_cast<std::size_t>(std::distance(F.begin(), it));
    k = std::clamp<std::size_t>(k, 1, F.size() - 1) - 1;
    // Invert the quadratic F on [s_k, s_k+1] (density linear in s).
    const double ds = cl.s[k + 1] - cl.s[k];
    const double r0 = 1.0 + st.gamma * kappa[k];
    const double r1 = 1.0 + st.gamma * kappa[k + 1];
    const double df = target - F[k];
    const double slope = (r1 - r0) / ds;
    double x;
    if (std::abs(slope) < 1e-14) {
      x = df / r0;
    } else {
      x = (-r0 + std::sqrt(std::max(0.0, r0 * r0 + 2.0 * slope * df))) / slope;
    }
    out[static_cast<std::size_t>(i)] = cl.s[k] + std::clamp(x, 0.0, ds);
  }
  out.back() = L;
  return out;
}

// ---------------------------------------------------------------------------
// Slicing

std::vector<Contour> slice_normal_plane(const TriMesh& mesh, const Vec3& r, const Vec3& t,
                                        double match_tol) {
  const Vec3 n = t.normalized();
  std::vector<double> d(mesh.vertices.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = n.dot(mesh.vertices[i] - r);

  // Vertices exactly on the plane count as positive (symbolic perturbation),
  // so every crossing lies on an edge with a strict sign change.
  using EdgeKey = std::pair<int, int>;
  std::vector<std::array<EdgeKey, 2>> segs;
  for (const auto& tri : mesh.triangles) {
    EdgeKey ends[2];
    int count = 0;
    for (int e = 0; e < 3; ++e) {
      const int a = tri[e];
      const int b = tri[(e + 1) % 3];
      const bool na = d[static_cast<std::size_t>(a)] < 0.0;
      const bool nb = d[static_cast<std::size_t>(b)] < 0.0;
      if (na != nb) ends[count++] = {std::min(a, b), std::max(a, b)};
    }
    if (count == 2) segs.push_back({ends[0], ends[1]});
  }
  if (segs.empty()) throw NoIntersection("normal plane does not intersect the mesh");

  auto edge_point = [&](const EdgeKey& e) {
    const Vec3& pa = mesh.vertices[static_cast<std::size_t>(e.first)];
    const Vec3& pb = mesh.vertices[static_cast<std::size_t>(e.second)];
    const double da = d[static_cast<std::size_t>(e.first)];
    const double db = d[static_cast<std::size_t>(e.second)];
    return Vec3(pa + (da / (da - db)) * (pb - pa));
  };

  std::map<EdgeKey, std::vector<std::size_t>> by_edge;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    by_edge[segs[i][0]].push_back(i);
    by_edge[segs[i][1]].push_back(i);
  }

  std::vector<bool> used(segs.size(), false);
  std::vector<std::vector<EdgeKey>> chains;
  std::vector<bool> closed_flags;
  auto next_seg = [&](const EdgeKey& e, std::size_t from) -> std::optional<std::size_t> {
    for (std::size_t j : by_edge[e]) {
      if (j != from && !used[j]) return j;
    }
    return std::nullopt;
  };
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (used[i]) continue;
    used[i] = true;
    std::vector<EdgeKey> chain = {segs[i][0], segs[i][1]};
    bool closed = false;
    // Forward.
    std::size_t cur = i;
    while (true) {
      const EdgeKey tail = chain.back();
      const auto nx = next_seg(tail, cur);
      if (!nx) break;
      used[*nx] = true;
      const EdgeKey other = segs[*nx][0] == tail ? segs[*nx][1] : segs[*nx][0];
      cur = *nx;
      if (other == chain.front()) {
        closed = true;
        break;
      }
      chain.push_back(other);
    }
    if (!closed) {
      // Backward from the head.
      cur = i;
      std::vector<EdgeKey> head;
      EdgeKey front = chain.front();
      while (true) {
        const auto nx = next_seg(front, cur);
        if (!nx) break;
        used[*nx] = true;
        const EdgeKey other = segs[*nx][0] == front ? segs[*nx][1] : segs[*nx][0];
        cur = *nx;
        head.push_back(other);
        front = other;
      }
      chain.insert(chain.begin(), head.rbegin(), head.rend());
    }
    chains.push_back(std::move(chain));
    closed_flags.push_back(closed);
  }

  std::vector<Contour> out;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    Contour con;
    con.closed = closed_flags[c];
    for (const auto& e : chains[c]) con.points.push_back(edge_point(e));
    out.push_back(std::move(con));
  }

  // Join open chains whose endpoints coincide within match_tol (meshes that
  // were not welded exactly).
  bool merged = true;
  while (merged) {
    merged = false;
    for (std::size_t a = 0; a < out.size() && !merged; ++a) {
      if (out[a].closed) continue;
      if (out[a].points.size() > 2 &&
          (out[a].points.front() - out[a].points.back()).norm() <= match_tol) {
        out[a].points.pop_back();
        out[a].closed = true;
        merged = true;
        break;
      }
      for (std::size_t b = 0; b < out.size() && !merged; ++b) {
        if (a == b || out[b].closed) continue;
        if ((out[a].points.back() - out[b].points.front()).norm() <= match_tol) {
          out[a].points.insert(out[a].points.end(), out[b].points.begin() + 1, out[b].points.end());
          out.erase(out.begin() + static_cast<std::ptrdiff_t>(b));
          merged = true;
        }
      }
    }
  }
  return out;
}

const Contour& select_component(const std::vector<Contour>& contours, const Vec3& r) {
  if (contours.empty()) throw InvalidArgument("select_component: no contours");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < contours.size(); ++i) {
    Vec3 c = Vec3::Zero();
    for (const auto& p : contours[i].points) c += p;
    c /= static_cast<double>(contours[i].points.size());
    const double dist = (c - r).norm();
    if (dist < best_d - 1e-9) {
      best = i;
      best_d = dist;
    } else if (std::abs(dist - best_d) <= 1e-9 &&
               contours[i].points.size() > contours[best].points.size()) {
      best = i;
      best_d = std::min(best_d, dist);
    }
  }
  return contours[best];
}

// ---------------------------------------------------------------------------
// Sections

std::pair<Vec3, Vec3> plane_basis(const Vec3& t) {
  const Vec3 tn = t.normalized();
  int least = 0;
  for (int k = 1; k < 3; ++k) {
    if (std::abs(tn[k]) < std::abs(tn[least])) least = k;
  }
  const Vec3 e2 = tn.cross(Vec3::Unit(least)).normalized();
  return {e2, tn.cross(e2)};
}

PcaSection extremal_section(const std::vector<Vec3>& contour, const Vec3& direction) {
  if (contour.empty()) throw DegenerateContour("empty contour");
  std::size_t imin = 0, imax = 0;
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -vmin;
  for (std::size_t i = 0; i < contour.size(); ++i) {
    const double v = direction.dot(contour[i]);
    if (v < vmin) {
      vmin = v;
      imin = i;
    }
    if (v > vmax) {
      vmax = v;
      imax = i;
    }
  }
  PcaSection sec;
  sec.p_minus = contour[imin];
  sec.p_plus = contour[imax];
  sec.a = 0.5 * (sec.p_plus - sec.p_minus).norm();
  sec.major = direction.normalized();
  return sec;
}

PcaSection pca_section(const std::vector<Vec3>& contour, const Vec3& r, const Vec3& t) {
  if (contour.size() < 2) throw DegenerateContour("contour needs at least two points");
  const auto [e2, e3] = plane_basis(t);
  std::vector<Vec2> q;
  q.reserve(contour.size());
  Vec2 mean = Vec2::Zero();
  for (const auto& p : contour) {
    const Vec3 d = p - r;
    q.emplace_back(d.dot(e2), d.dot(e3));
    mean += q.back();
  }
  mean /= static_cast<double>(q.size());
  Mat2 cov = Mat2::Zero();
  double scale = 0.0;
  for (const auto& v : q) {
    cov += (v - mean) * (v - mean).transpose();
    scale = std::max(scale, (v - mean).squaredNorm());
  }
  cov /= static_cast<double>(q.size());
  Eigen::SelfAdjointEigenSolver<Mat2> eig(cov);
  const double l1 = eig.eigenvalues()(1);
  const double l2 = std::max(0.0, eig.eigenvalues()(0));
  if (!(l1 > 1e-14 * std::max(scale, 1e-300))) throw DegenerateContour("contour covariance has rank 0");
  Vec2 u = eig.eigenvectors().col(1);
  if (std::abs(u.x()) >= std::abs(u.y()) ? u.x() < 0.0 : u.y() < 0.0) u = -u;
  PcaSection sec = extremal_section(contour, u.x() * e2 + u.y() * e3);
  sec.anisotropy = l2 / l1;
  return sec;
}

namespace {

std::vector<Vec3> smooth_closed(const std::vector<Vec3>& pts) {
  const std::size_t n = pts.size();
  std::vector<Vec3> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = (pts[(i + n - 1) % n] + pts[i] + pts[(i + 1) % n]) / 3.0;
  }
  return out;
}

}  // namespace

ExtractedStations extract_stations(const TriMesh& mesh, const CenterlinePolyline& cl,
                                   const std::vector<double>& s_samples,
                                   const ExtractOptions& opt) {
  const double h = opt.tangent_step > 0.0 ? opt.tangent_step : cl.mean_spacing();
  ExtractedStations out;
  std::optional<Vec3> prev_major;
  for (double s : s_samples) {
    StationSample st;
    st.s = s;
    st.r = cl.at(s);
    st.t = cl.tangent(s, h);
    const auto contours = slice_normal_plane(mesh, st.r, st.t);
    const Contour& con = select_component(contours, st.r);
    const std::vector<Vec3> pts =
        opt.smooth && con.closed && con.points.size() >= 3 ? smooth_closed(con.points) : con.points;
    PcaSection sec = pca_section(pts, st.r, st.t);
    bool propagated = false;
    if (sec.anisotropy > opt.anisotropy_threshold && prev_major) {
      Vec3 dir = *prev_major - prev_major->dot(st.t) * st.t;
      if (dir.norm() > 1e-9) {
        const double aniso = sec.anisotropy;
        sec = extremal_section(pts, dir.normalized());
        sec.anisotropy = aniso;
        propagated = true;
      }
    }
    if (prev_major && sec.major.dot(*prev_major) < 0.0) {
      std::swap(sec.p_minus, sec.p_plus);
      sec.major = -sec.major;
    }
    prev_major = sec.major;
    st.a = sec.a;
    st.p_minus = sec.p_minus;
    st.p_plus = sec.p_plus;
    st.anisotropy = sec.anisotropy;

    // Perpendicular extents either side of the major-axis line, measured
    // along y = z x x of the station frame.
    const Vec3 z = (sec.p_plus - sec.p_minus).normalized();
    Vec3 y = z.cross(st.t);
    double bu = 0.0, bl = 0.0;
    if (y.norm() > 1e-9) {
      y.normalize();
      for (const auto& p : pts) {
        const double v = (p - sec.p_minus).dot(y);
        bu = std::max(bu, v);
        bl = std::max(bl, -v);
      }
    }
    out.b_u.push_back(bu > 0.0 ? bu : st.a);
    out.b_l.push_back(bl > 0.0 ? bl : st.a);
    out.stations.push_back(st);
    out.propagated.push_back(propagated);
  }
  return out;
}

LumenModel lumen_from_stations(const ExtractedStations& ex, double p) {
  auto frames = build_frames(ex.stations);
  const double s0 = frames.front().s;
  for (auto& f : frames) f.s -= s0;
  std::vector<double> a;
  for (const auto& st : ex.stations) a.push_back(st.a);
  const std::vector<double> bu = ex.b_u.empty() ? a : ex.b_u;
  const std::vector<double> bl = ex.b_l.empty() ? a : ex.b_l;
  return LumenModel(std::move(frames), std::move(a), bu, bl, p);
}

std::string stations_to_json(const std::vector<StationSample>& stations) {
  json arr = json::array();
  auto v3 = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  for (const auto& st : stations) {
    arr.push_back({{"s", st.s},
                   {"r", v3(st.r)},
                   {"t", v3(st.t)},
                   {"a", st.a},
                   {"p_minus", v3(st.p_minus)},
                   {"p_plus", v3(st.p_plus)},
                   {"anisotropy", st.anisotropy}});
  }
  return arr.dump(1);
}

std::vector<StationSample> stations_from_json(const std::string& text) {
  try {
    const json arr = json::parse(text);
    auto v3 = [](const json& j) {
      const auto v = j.get<std::vector<double>>();
      if (v.size() != 3) throw ParseError("stations JSON: vectors need 3 entries");
      return Vec3(v[0], v[1], v[2]);
    };
    std::vector<StationSample> out;
    for (const auto& j : arr) {
      StationSample st;
      st.s = j.at("s").get<double>();
      st.r = v3(j.at("r"));
      st.t = v3(j.at("t"));
      st.a = j.at("a").get<double>();
      st.p_minus = v3(j.at("p_minus"));
      st.p_plus = v3(j.at("p_plus"));
      st.anisotropy = j.at("anisotropy").get<double>();
      out.push_back(st);
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(std::string("stations JSON: ") + e.what());
  }
}

TriMesh triangulate_lumen(const LumenModel& model, double chord, double extend) {
  if (!(chord > 0.0)) throw InvalidArgument("triangulate_lumen: chord must be positive");
  const double L = model.length();
  const double rmax = model.max_radius();
  double stretch = 1.0;
  for (const auto& xi : model.twists()) {
    stretch = std::max(stretch, xi.tail<3>().norm() + xi.head<3>().norm() * rmax);
  }
  const double total = L + 2.0 * extend;
  const int rings = static_cast<int>(std::ceil(total * stretch / chord)) + 1;
  const int nb = std::max(8, static_cast<int>(std::ceil(2.0 * std::numbers::pi * rmax / chord)));

  const Pose g_end = model.pose_at(L);
  const Twist& xi0 = model.twists().front();
  const Twist& xi1 = model.twists().back();

  TriMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(rings * nb));
  for (int i = 0; i < rings; ++i) {
    const double s = -extend + total * i / (rings - 1);
    Pose g;
    double sc;
    if (s < 0.0) {
      g = model.frames().front().g * exp_se3(xi0, s);
      sc = 0.0;
    } else if (s > L) {
      g = g_end * exp_se3(xi1, s - L);
      sc = L;
    } else {
      g = model.pose_at(s);
      sc = s;
    }
    for (int j = 0; j < nb; ++j) {
      const double beta = 2.0 * std::numbers::pi * j / nb;
      mesh.vertices.push_back(g.apply(model.section(sc, beta)));
    }
  }
  for (int i = 0; i + 1 < rings; ++i) {
    for (int j = 0; j < nb; ++j) {
      const int a = i * nb + j;
      const int b = i * nb + (j + 1) % nb;
      const int c = (i + 1) * nb + j;
      const int d = (i + 1) * nb + (j + 1) % nb;
      mesh.triangles.push_back({a, b, d});
      mesh.triangles.push_back({a, d, c});
    }
  }
  return mesh;
}

}  // namespace cisim
