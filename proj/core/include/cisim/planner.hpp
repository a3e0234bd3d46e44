#pragma once

// Lateral-force feedback planner. At each converged state the equilibrium,
// base-boundary and contact equations are differentiated in time with the
// geometry frozen, giving the sensitivity of the base wrench to the RCM
// inputs (omega_b, v_par). A damped pseudo-inverse law then picks omega_b so
// that the lateral base force decays at rate k.

#include <string>
#include <vector>

#include "cisim/dynamics.hpp"

namespace cisim {

struct PlannerSettings {
  double k = 5.0;           // 1/s
  double eps_dls = 1e-6;    // relative to tr(J_perp J_perp^T) / 2
  double omega_max = 0.5;   // rad/s
};

/// Quantities frozen at a converged state: station Jacobians, contact frame
/// transfers and slack values of the active pairs.
struct FrozenState {
  MatX K;
  double d_a = 0.0;
  double dt = 0.0;  // tangential rows are velocity level over one step
  ContactLaw law;
  Wrench lambda0 = Wrench::Zero();
  std::vector<double> s_rod;
  std::vector<Jacobian> J;     // body Jacobians, 6 x dim
  std::vector<Mat6> Ad;        // Ad_{g_c^-1 g}
  std::vector<Mat3> R_rel;     // R_c^T R
  std::vector<Vec3> u;

  int dim() const { return static_cast<int>(K.rows()); }
  int pairs() const { return static_cast<int>(u.size()); }
  /// F_e = -sum J^T Ad^T [0; Lambda(u)] with the frozen factors.
  VecX external_force(const std::vector<Vec3>& u) const;
};

FrozenState freeze(const Simulator& sim);

/// Unknowns [qdot (dim); Lambda_0dot (6); udot (3 M)].
/// A = [[K, -J0^T, F_lambda], [J0, 0, 0], [C_q, 0, C_lambda]].
struct DiffSystem {
  MatX A;
  Eigen::Matrix<double, Eigen::Dynamic, 3> B_omega;
  VecX B_v;
  int dim = 0;
  int pairs = 0;

  int lambda0_offset() const { return dim; }
  int slack_offset() const { return dim + 6; }
};

DiffSystem assemble_diff_system(const FrozenState& fs);

struct SensitivityPack {
  Eigen::Matrix<double, 6, 3> H_omega = Eigen::Matrix<double, 6, 3>::Zero();
  Vec6 H_v = Vec6::Zero();
  Eigen::Matrix<double, 2, 3> J_perp = Eigen::Matrix<double, 2, 3>::Zero();
  Vec2 b_perp = Vec2::Zero();
  Vec2 f_perp = Vec2::Zero();  // N
};

/// Solves A x = B. Throws SingularA when A is rank deficient at 1e-10
/// relative pivot threshold.
SensitivityPack sensitivities(const DiffSystem& sys, const Wrench& lambda0);

/// omega = -J^T (J J^T + eps I)^-1 (k f + b v), eps = eps_dls tr(J J^T) / 2,
/// then clamped to |omega| <= omega_max.
Vec3 feedback_omega(const SensitivityPack& pack, double v_par, const PlannerSettings& ps);

/// FD oracle: solves the nonlinear frozen model with the base displaced by
/// +-delta (G_omega omega + G_v v) and returns the central difference of
/// Lambda_0. Agrees with the rows of A to second order in delta.
Wrench frozen_response(const FrozenState& fs, const Vec3& omega, double v, double delta);

struct PlanEntry {
  double depth_mm = 0.0;
  Mat3 R_b = Mat3::Identity();
  double d_a = 0.0;
};

struct Plan {
  std::vector<PlanEntry> entries;
  double k = 0.0;
  double eps_dls = 0.0;
  double v_par = 0.0;
  double step_mm = 0.0;
};

struct PlanResult {
  Plan plan;
  Trajectory trajectory;
  int singular_steps = 0;  // steps that held the previous omega
};

/// Closed-loop insertion: every step converges the dynamics, evaluates the
/// sensitivities and integrates R_b <- R_b exp(omega dt).
PlanResult plan_insertion(const LumenModel& lumen, const RodModel& rod, const SimSettings& settings,
                          const InsertionProtocol& protocol, const RcmState& start,
                          const PlannerSettings& ps, const StepObserver& observer = {});

/// Open-loop replay of a plan's orientations. Ends with PlanEnd when the
/// plan is exhausted.
Trajectory replay_plan(const LumenModel& lumen, const RodModel& rod, const SimSettings& settings,
                       const InsertionProtocol& protocol, const RcmState& start, const Plan& plan);

std::string plan_to_json(const Plan& plan);
Plan plan_from_json(const std::string& text);
void save_plan(const Plan& plan, const std::string& path);
Plan load_plan(const std::string& path);

/// Base frames whose x axes lie on rings about `axis`: `rings` polar offsets
/// half_angle * j / rings (j = 1..rings), `per_ring` azimuths each. With
/// half_angle 0 a single frame along the axis is returned.
std::vector<Mat3> sample_cone_orientations(const Vec3& axis, double half_angle, int per_ring,
                                           int rings = 1, const Vec3& up = Vec3::UnitZ());

/// Normalized mean base x axis over the last 20% of each plan's depth range.
Vec3 goid(const std::vector<Plan>& plans);

}  // namespace cisim
