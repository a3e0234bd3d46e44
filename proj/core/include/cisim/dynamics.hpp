#pragma once

// Quasi-static insertion with viscous regularization: implicit Euler on
//   D qdot + K q + F_e + F_0 = 0,  g(0) = g_b,  C(q, lambda) = 0
// solved by damped Newton per step. The base block of q is prescribed by the
// RCM motion and the base wrench Lambda_0 is recovered as its reaction.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cisim/contact.hpp"
#include "cisim/lumen.hpp"
#include "cisim/metrics.hpp"
#include "cisim/rcm.hpp"
#include "cisim/rod.hpp"

namespace cisim {

struct ContactSettings {
  ContactLaw law;
  int stations = 64;
  bool refine_distal = false;
  /// Stations join the Newton system when their predicted gap drops below
  /// this (mm) and leave it above twice this.
  double activation_gap = 0.1;
  /// Adds a station that follows the material point at the pivot and keeps
  /// it inside the entrance ring. Regular stations closer than a quarter
  /// spacing past the pivot are skipped in its favour.
  bool pivot_station = true;
};

struct NewtonSettings {
  double tol = 1e-8;  // infinity norm of the scaled residual
  int max_iter = 40;
  double min_step = 1e-4;
  /// A failed step is retried with the base motion split into 2, 4, ...
  /// up to this many sub-increments.
  int max_splits = 8;
};

struct SimSettings {
  ContactSettings contact;
  NewtonSettings newton;
  double dt = 0.05;  // s
  /// Viscosity scale nu (MPa s); zero or negative selects 0.1 dt G.
  double viscosity = 0.0;
};

/// Per-station contact state. Inactive stations carry no slack unknowns.
struct PairState {
  double s_rod = 0.0;
  bool active = false;
  bool located = false;  // X holds a previous closest point usable as seed
  bool pivot = false;    // tracks s_rod = d_a against the entrance ring
  SurfaceParam X;
  Pose g_c;
  Pose g;          // rod frame at the station
  double d_n = 0.0;
  Vec2 v_t = Vec2::Zero();
  Vec3 u = Vec3::Zero();
  Vec3 force = Vec3::Zero();  // [Lambda_n; Lambda_t] in the contact frame
  bool stick = false;
};

struct DaeState {
  VecX q;     // base block is zero between steps (rebased)
  VecX qdot;
  Pose g_b;
  RcmState rcm;
  std::vector<PairState> pairs;
  Wrench lambda0 = Wrench::Zero();  // base wrench, base body frame
  double t = 0.0;
  int step = 0;
  Pose tip;
  SurfaceParam tip_X;  // tip projection onto the wall
};

struct StepReport {
  int iterations = 0;
  double residual = 0.0;
  int active_pairs = 0;
};

class Simulator {
 public:
  /// The rod starts straight with its base on the RCM axis at `start`.
  Simulator(const LumenModel& lumen, const RodModel& rod, const SimSettings& settings,
            const RcmState& start);

  const DaeState& state() const { return state_; }
  const LumenModel& lumen() const { return *lumen_; }
  const RodModel& rod() const { return *rod_; }
  const SimSettings& settings() const { return settings_; }
  const MatX& stiffness() const { return K_; }

  /// One implicit Euler step to the base pose given by (R_b, d_a). Throws
  /// NonConvergence and leaves the state untouched on failure.
  StepReport step(const Mat3& R_b, double d_a);

 private:
  StepReport advance(const Mat3& R_b, double d_a, double dt);
  void locate(PairState& p, const Vec3& x) const;

  const LumenModel* lumen_;
  const RodModel* rod_;
  SimSettings settings_;
  MatX K_, D_;
  DaeState state_;
};

/// Per-step record of an insertion run.
struct TrajectorySample {
  int step = 0;
  double t = 0.0;
  double depth_mm = 0.0;  // commanded advance
  double alpha_deg = 0.0;
  Wrench lambda0 = Wrench::Zero();
  Vec3 tip = Vec3::Zero();
  bool stall = false;
  Mat3 R_b = Mat3::Identity();
  double d_a = 0.0;
  double tip_s = 0.0;
  int iterations = 0;
  VecX q;
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  Termination cause = Termination::MaxDepth;
  int stall_step = -1;
  double alpha_max_deg = 0.0;
  std::string message;

  DepthReport report() const { return {alpha_max_deg, cause}; }
};

struct InsertionProtocol {
  double v_par = 1.0;       // mm/s
  double max_depth = -1.0;  // mm; negative means the rod length
  int max_steps = 100000;
  int stall_window = 20;
  double stall_ratio = 0.1;
  bool stop_on_stall = true;
  bool keep_q = false;
};

/// Supplies the base orientation for the next step. `sim` holds the last
/// converged state.
using OrientationSource = std::function<Mat3(const Simulator& sim, int next_step)>;

/// Observer called after every converged step (pair dumps, planner hooks).
using StepObserver = std::function<void(const Simulator& sim, const TrajectorySample& sample)>;

/// RCM start for an insertion: pivot at the lumen entrance, tool axis
/// `direction`, tip at the pivot.
RcmState insertion_start(const LumenModel& lumen, const RodModel& rod, const Vec3& direction,
                         double v_par = 1.0);

/// Tool axis rotated from the entrance tangent by `yaw_deg` about the
/// entrance frame z axis, then `pitch_deg` about its y axis.
Vec3 entrance_direction(const LumenModel& lumen, double yaw_deg, double pitch_deg = 0.0);

/// Base frame with x along `direction`, z as close as possible to `up`.
Mat3 frame_from_direction(const Vec3& direction, const Vec3& up = Vec3::UnitZ());

Trajectory run_insertion(const LumenModel& lumen, const RodModel& rod, const SimSettings& settings,
                         const InsertionProtocol& protocol, const RcmState& start,
                         const OrientationSource& orientation = {},
                         const StepObserver& observer = {});

/// Trajectory CSV: step, t, depth_mm, depth_alpha_deg, f0x..z, tau0x..z,
/// tip_x..z, stall_flag. Doubles use round-trip precision.
void write_trajectory_csv(const Trajectory& tr, std::ostream& out);
void save_trajectory_csv(const Trajectory& tr, const std::string& path);

/// Pair dump rows: step, k, s_rod, s_surf, beta, d_n, lambda_n, lambda_t1,
/// lambda_t2, stick_flag.
void write_pair_header(std::ostream& out);
void write_pair_rows(const DaeState& state, std::ostream& out);

}  // namespace cisim
