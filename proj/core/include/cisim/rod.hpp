#pragma once

// Cosserat rod with piecewise-linear strain coordinates.
//
// Generalized coordinates q = [q_base(6); q_strain(6 (n+1))]. The base pose
// is g(0) = g_b exp(q_base); the strain field is xi(s) = xi0 + Phi(s) q_strain
// with C0 hat functions on the nodes.

#include <vector>

#include "cisim/liegroup.hpp"

namespace cisim {

using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

struct RodParams {
  double length = 25.0;        // mm
  int elements = 8;            // n; nodes = n + 1
  double youngs = 25.2;        // MPa
  double poisson = 0.45;
  double base_diameter = 0.4;  // mm
  double tip_diameter = 0.3;   // mm
  int substeps = 8;            // kinematic sub-intervals per element
  Twist xi0 = (Twist() << 0, 0, 0, 1, 0, 0).finished();
};

struct BasisWeights {
  int element = 0;  // node indices element, element + 1
  double w0 = 1.0;
  double w1 = 0.0;
};

class RodModel {
 public:
  explicit RodModel(const RodParams& params = {});

  const RodParams& params() const { return params_; }
  int elements() const { return params_.elements; }
  int nodes() const { return params_.elements + 1; }
  int dim() const { return 6 + 6 * nodes(); }
  double length() const { return params_.length; }
  const std::vector<double>& node_s() const { return sigma_; }
  double shear_modulus() const { return params_.youngs / (2.0 * (1.0 + params_.poisson)); }

  double radius(double s) const;
  /// Diagonal of K(s) = diag(GJ, EI, EI, EA, GA, GA).
  Vec6 section_stiffness(double s) const;
  /// Diagonal of D(s)/nu = diag(J, I, I, A, A, A).
  Vec6 section_damping_shape(double s) const;

  BasisWeights basis(double s) const;
  /// Dense 6 x dim row block of Phi at s (zero on the base columns).
  Jacobian basis_matrix(double s) const;
  Twist strain(const VecX& q, double s) const;

  /// K = int Phi^T K Phi ds, 2-point Gauss per element; zero base block.
  MatX stiffness_matrix() const;
  /// D = nu int Phi^T diag(J,I,I,A,A,A) Phi ds.
  MatX damping_matrix(double nu) const;
  /// nu such that the slowest strain mode relaxes with time constant 0.1 dt.
  double viscosity_for_step(double dt) const { return 0.1 * dt * shear_modulus(); }

  /// Axial stretch is positive at every quadrature point.
  bool strain_admissible(const VecX& q) const;

 private:
  RodParams params_;
  std::vector<double> sigma_;
};

struct RodState {
  VecX q;
  VecX qdot;
  Pose g_b;

  static RodState zero(const RodModel& rod, const Pose& g_b = {});
};

/// Poses (and optionally body Jacobians, eta = J qdot) at sorted arc lengths.
struct RodFrames {
  std::vector<double> s;
  std::vector<Pose> g;
  std::vector<Jacobian> J;
};

/// Integrates g' = g xi^ with midpoint-frozen strain on `substeps` uniform
/// sub-intervals per element. Queries between grid points are reached by a
/// partial step from the preceding grid point.
RodFrames forward_kinematics(const RodModel& rod, const Pose& g_b, const VecX& q,
                             const std::vector<double>& queries, bool with_jacobian);

/// Convenience: pose and Jacobian at one arc length.
Pose rod_pose(const RodModel& rod, const Pose& g_b, const VecX& q, double s);
Jacobian geometric_jacobian(const RodModel& rod, const Pose& g_b, const VecX& q, double s);

/// Uniform output grid of `count` + 1 points on [0, L].
std::vector<double> uniform_grid(double length, int count);

}  // namespace cisim
