#include "cisim/rod.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cisim/error.hpp"

namespace cisim {

namespace {

constexpr double kGauss = 0.57735026918962576451;  // 1/sqrt(3)

}  // namespace

RodModel::RodModel(const RodParams& params) : params_(params) {
  if (params_.elements < 1) throw InvalidArgument("rod: need at least one element");
  if (params_.substeps < 1) throw InvalidArgument("rod: substeps must be >= 1");
  if (!(params_.length > 0.0 && params_.youngs > 0.0 && params_.base_diameter > 0.0 &&
        params_.tip_diameter > 0.0)) {
    throw InvalidArgument("rod: length, modulus and diameters must be positive");
  }
  if (!(params_.poisson > -1.0 && params_.poisson < 0.5)) {
    throw InvalidArgument("rod: Poisson ratio must lie in (-1, 0.5)");
  }
  sigma_.resize(static_cast<std::size_t>(nodes()));
  for (int k = 0; k <= params_.elements; ++k) {
    sigma_[static_cast<std::size_t>(k)] = params_.length * k / params_.elements;
  }
  sigma_.back() = params_.length;
}

double RodModel::radius(double s) const {
  const double u = std::clamp(s / params_.length, 0.0, 1.0);
  return 0.5 * (params_.base_diameter + (params_.tip_diameter - params_.base_diameter) * u);
}

Vec6 RodModel::section_damping_shape(double s) const {
  const double r = radius(s);
  const double r2 = r * r;
  const double A = std::numbers::pi * r2;
  const double I = 0.25 * std::numbers::pi * r2 * r2;
  Vec6 d;
  d << 2.0 * I, I, I, A, A, A;
  return d;
}

Vec6 RodModel::section_stiffness(double s) const {
  const Vec6 d = section_damping_shape(s);
  const double E = params_.youngs;
  const double G = shear_modulus();
  Vec6 k;
  k << G * d(0), E * d(1), E * d(2), E * d(3), G * d(4), G * d(5);
  return k;
}

BasisWeights RodModel::basis(double s) const {
  s = std::clamp(s, 0.0, params_.length);
  const double h = params_.length / params_.elements;
  int e = static_cast<int>(std::floor(s / h));
  e = std::clamp(e, 0, params_.elements - 1);
  const double s0 = sigma_[static_cast<std::size_t>(e)];
  const double s1 = sigma_[static_cast<std::size_t>(e) + 1];
  const double t = (s - s0) / (s1 - s0);
  return {e, 1.0 - t, t};
}

Jacobian RodModel::basis_matrix(double s) const {
  Jacobian phi = Jacobian::Zero(6, dim());
  const BasisWeights b = basis(s);
  phi.block<6, 6>(0, 6 + 6 * b.element).diagonal().setConstant(b.w0);
  phi.block<6, 6>(0, 12 + 6 * b.element).diagonal().setConstant(b.w1);
  return phi;
}

Twist RodModel::strain(const VecX& q, double s) const {
  const BasisWeights b = basis(s);
  return params_.xi0 + b.w0 * q.segment<6>(6 + 6 * b.element) +
         b.w1 * q.segment<6>(12 + 6 * b.element);
}

MatX RodModel::stiffness_matrix() const {
  MatX K = MatX::Zero(dim(), dim());
  for (int e = 0; e < params_.elements; ++e) {
    const double s0 = sigma_[static_cast<std::size_t>(e)];
    const double h = sigma_[static_cast<std::size_t>(e) + 1] - s0;
    for (double g : {-kGauss, kGauss}) {
      const double t = 0.5 * (1.0 + g);
      const Vec6 k = section_stiffness(s0 + t * h) * (0.5 * h);
      const double w[2] = {1.0 - t, t};
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          K.block<6, 6>(6 + 6 * (e + a), 6 + 6 * (e + b)).diagonal() += w[a] * w[b] * k;
        }
      }
    }
  }
  return K;
}

MatX RodModel::damping_matrix(double nu) const {
  MatX D = MatX::Zero(dim(), dim());
  for (int e = 0; e < params_.elements; ++e) {
    const double s0 = sigma_[static_cast<std::size_t>(e)];
    const double h = sigma_[static_cast<std::size_t>(e) + 1] - s0;
    for (double g : {-kGauss, kGauss}) {
      const double t = 0.5 * (1.0 + g);
      const Vec6 d = section_damping_shape(s0 + t * h) * (0.5 * h * nu);
      const double w[2] = {1.0 - t, t};
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          D.block<6, 6>(6 + 6 * (e + a), 6 + 6 * (e + b)).diagonal() += w[a] * w[b] * d;
        }
      }
    }
  }
  return D;
}

bool RodModel::strain_admissible(const VecX& q) const {
  for (int e = 0; e < params_.elements; ++e) {
    const double s0 = sigma_[static_cast<std::size_t>(e)];
    const double h = sigma_[static_cast<std::size_t>(e) + 1] - s0;
    for (double g : {-kGauss, kGauss}) {
      if (!(strain(q, s0 + 0.5 * (1.0 + g) * h)(3) > 0.0)) return false;
    }
  }
  return true;
}

RodState RodState::zero(const RodModel& rod, const Pose& g_b) {
  RodState st;
  st.q = VecX::Zero(rod.dim());
  st.qdot = VecX::Zero(rod.dim());
  st.g_b = g_b;
  return st;
}

std::vector<double> uniform_grid(double length, int count) {
  std::vector<double> s(static_cast<std::size_t>(count) + 1);
  for (int i = 0; i <= count; ++i) s[static_cast<std::size_t>(i)] = length * i / count;
  s.back() = length;
  return s;
}

namespace {

// One midpoint-frozen step of length h starting at s0 within element e.
struct Step {
  Twist xi;
  Pose dg;
  BasisWeights mid;
};

Step make_step(const RodModel& rod, const VecX& q, double s0, double h) {
  Step st;
  st.mid = rod.basis(s0 + 0.5 * h);
  st.xi = rod.params().xi0 + st.mid.w0 * q.segment<6>(6 + 6 * st.mid.element) +
          st.mid.w1 * q.segment<6>(12 + 6 * st.mid.element);
  st.dg = exp_se3(st.xi, h);
  return st;
}

// J_next = Ad_{exp(-h xi)} J + h T(h xi) Phi(mid), touching only the live
// leading columns.
void advance_jacobian(const Step& st, double h, const Jacobian& J,
                      Jacobian& out, int live_cols) {
  const Mat6 ad = adjoint_pose(st.dg.inverse());
  out.leftCols(live_cols).noalias() = ad * J.leftCols(live_cols);
  if (out.cols() > live_cols) out.rightCols(out.cols() - live_cols).setZero();
  const Mat6 T = h * dexp_right(h * st.xi);
  const int c0 = 6 + 6 * st.mid.element;
  out.block<6, 6>(0, c0) += st.mid.w0 * T;
  out.block<6, 6>(0, c0 + 6) += st.mid.w1 * T;
}

}  // namespace

RodFrames forward_kinematics(const RodModel& rod, const Pose& g_b, const VecX& q,
                             const std::vector<double>& queries, bool with_jacobian) {
  if (q.size() != rod.dim()) throw DimensionMismatch("forward_kinematics: q has wrong size");
  for (std::size_t i = 1; i < queries.size(); ++i) {
    if (queries[i] < queries[i - 1]) throw InvalidArgument("forward_kinematics: queries must be sorted");
  }
  const int n = rod.elements();
  const int m = rod.params().substeps;
  const int dim = rod.dim();

  RodFrames out;
  out.s = queries;
  out.g.resize(queries.size());
  if (with_jacobian) out.J.resize(queries.size());

  const Twist qb = q.head<6>();
  Pose g = g_b * exp_se3(qb);
  Jacobian J;
  Jacobian Jn;
  if (with_jacobian) {
    J = Jacobian::Zero(6, dim);
    J.leftCols<6>() = dexp_right(qb);
    Jn.resize(6, dim);
  }

  std::size_t qi = 0;
  // Queries at s <= 0 take the base frame.
  while (qi < queries.size() && queries[qi] <= 0.0) {
    out.g[qi] = g;
    if (with_jacobian) out.J[qi] = J;
    ++qi;
  }
  const auto& sig = rod.node_s();
  for (int e = 0; e < n && qi < queries.size(); ++e) {
    const double se = sig[static_cast<std::size_t>(e)];
    const double h = (sig[static_cast<std::size_t>(e) + 1] - se) / m;
    const int live = std::min(dim, 6 + 6 * (e + 2));
    for (int j = 0; j < m && qi < queries.size(); ++j) {
      const double s0 = se + h * j;
      const double s1 = (j == m - 1) ? sig[static_cast<std::size_t>(e) + 1] : s0 + h;
      // Partial steps for queries inside (s0, s1).
      while (qi < queries.size() && queries[qi] < s1) {
        const double hp = queries[qi] - s0;
        const Step st = make_step(rod, q, s0, hp);
        out.g[qi] = g * st.dg;
        if (with_jacobian) {
          out.J[qi].resize(6, dim);
          advance_jacobian(st, hp, J, out.J[qi], live);
        }
        ++qi;
      }
      const Step st = make_step(rod, q, s0, s1 - s0);
      g = g * st.dg;
      if (with_jacobian) {
        advance_jacobian(st, s1 - s0, J, Jn, live);
        std::swap(J, Jn);
      }
      while (qi < queries.size() && queries[qi] == s1) {
        out.g[qi] = g;
        if (with_jacobian) out.J[qi] = J;
        ++qi;
      }
    }
  }
  // Queries beyond the tip clamp to the tip.
  for (; qi < queries.size(); ++qi) {
    out.g[qi] = g;
    if (with_jacobian) out.J[qi] = J;
  }
  return out;
}

Pose rod_pose(const RodModel& rod, const Pose& g_b, const VecX& q, double s) {
  return forward_kinematics(rod, g_b, q, {s}, false).g[0];
}

Jacobian geometric_jacobian(const RodModel& rod, const Pose& g_b, const VecX& q, double s) {
  return forward_kinematics(rod, g_b, q, {s}, true).J[0];
}

}  // namespace cisim
