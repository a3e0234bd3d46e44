#include "cisim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "cisim/error.hpp"

namespace cisim {

namespace {

// Forward kinematics at stations in any order (the pivot station moves).
RodFrames frames_at(const RodModel& rod, const Pose& g_b, const VecX& q, const std::vector<double>& s,
                    bool with_jacobian) {
  if (std::is_sorted(s.begin(), s.end())) return forward_kinematics(rod, g_b, q, s, with_jacobian);
  std::vector<std::size_t> order(s.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
  std::vector<double> sorted(s.size());
  for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = s[order[i]];
  const RodFrames f = forward_kinematics(rod, g_b, q, sorted, with_jacobian);
  RodFrames out;
  out.s = s;
  out.g.resize(s.size());
  if (with_jacobian) out.J.resize(s.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.g[order[i]] = f.g[i];
    if (with_jacobian) out.J[order[i]] = f.J[i];
  }
  return out;
}

// Newton system of one step. Unknowns x = [q_strain; u for active pairs].
struct StepSystem {
  const RodModel& rod;
  const MatX& K;
  const MatX& D;
  double dt;
  Twist qb;       // prescribed base increment
  Pose g_b;       // base pose before the step
  VecX q_prev;    // base block zero
  std::vector<int> act;
  std::vector<double> s_act;
  std::vector<double> r_act;
  std::vector<Pose> g_c;
  std::vector<ContactLaw> laws;
  VecX scale;     // row scaling of the dynamic block
  int N = 0;

  int size() const { return N + 3 * static_cast<int>(act.size()); }

  VecX full_q(const VecX& x) const {
    VecX q(rod.dim());
    q.head<6>() = qb;
    q.tail(N) = x.head(N);
    return q;
  }

  VecX residual(const VecX& x, RodFrames* frames_out = nullptr) const {
    const VecX q = full_q(x);
    const VecX qdot = (q - q_prev) / dt;
    RodFrames fr = frames_at(rod, g_b, q, s_act, true);
    VecX gen = D * qdot + K * q;
    VecX r(size());
    for (std::size_t i = 0; i < act.size(); ++i) {
      const Vec3 u = x.segment<3>(N + 3 * static_cast<int>(i));
      gen.noalias() -= fr.J[i].transpose() * transfer_wrench(fr.g[i], g_c[i], laws[i].force(u));
      const double d_n = normal_gap(g_c[i], fr.g[i], r_act[i]);
      const Vec2 v_t = sliding_velocity(fr.g[i], g_c[i], fr.J[i] * qdot);
      r.segment<3>(N + 3 * static_cast<int>(i)) = laws[i].residual(d_n, v_t, u);
    }
    r.head(N) = gen.tail(N).cwiseProduct(scale);
    if (frames_out) *frames_out = std::move(fr);
    return r;
  }

  MatX jacobian(const VecX& x, const VecX& r0, const RodFrames& fr) const {
    const int n = size();
    MatX Jac(n, n);
    VecX xp = x;
    for (int j = 0; j < N; ++j) {
      const double h = 1e-7 * (1.0 + std::abs(x(j)));
      xp(j) = x(j) + h;
      Jac.col(j) = (residual(xp) - r0) / h;
      xp(j) = x(j);
    }
    Jac.rightCols(n - N).setZero();
    for (std::size_t i = 0; i < act.size(); ++i) {
      const int c = N + 3 * static_cast<int>(i);
      const Vec3 u = x.segment<3>(c);
      Mat3 dforce, dres;
      laws[i].force(u, &dforce);
      laws[i].residual(0.0, Vec2::Zero(), u, &dres);
      const Mat6 ad = adjoint_pose(g_c[i].inverse() * fr.g[i]);
      const Eigen::Matrix<double, 6, 3> dw = ad.transpose().rightCols<3>() * dforce;
      const MatX block = -(fr.J[i].transpose() * dw);
      Jac.block(0, c, N, 3) = block.bottomRows(N).array().colwise() * scale.array();
      Jac.block<3, 3>(c, c) = dres;
    }
    return Jac;
  }
};

double inf_norm(const VecX& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

double wrap_diff(double a, double b) { return std::remainder(a - b, 2.0 * std::numbers::pi); }

// Damped Newton on ||r||^2 with an Armijo backtrack. When the backtrack
// collapses, Levenberg-Marquardt steps of growing damping are tried before
// giving up. `refresh` updates the contact frames after each accepted step.
template <class Refresh>
int newton_solve(const StepSystem& sys, VecX& x, RodFrames& fr, const NewtonSettings& ns, Refresh&& refresh) {
  VecX r = sys.residual(x, &fr);
  double rn = inf_norm(r);
  int it = 0;
  while (rn >= ns.tol) {
    if (it >= ns.max_iter) throw NonConvergence(it, rn);
    const MatX Jac = sys.jacobian(x, r, fr);
    const double phi0 = r.squaredNorm();
    VecX xt, rt;
    bool accepted = false;
    const VecX dx = -Jac.partialPivLu().solve(r);
    if (dx.allFinite()) {
      for (double alpha = 1.0; alpha >= ns.min_step; alpha *= 0.5) {
        xt = x + alpha * dx;
        rt = sys.residual(xt);
        if (rt.allFinite() && rt.squaredNorm() <= (1.0 - 1e-4 * alpha) * phi0) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      const MatX JtJ = Jac.transpose() * Jac;
      const VecX g = Jac.transpose() * r;
      const double scale = JtJ.diagonal().maxCoeff();
      for (double mu = 1e-8 * scale; mu <= 1e2 * scale && !accepted; mu *= 10.0) {
        MatX A = JtJ;
        A.diagonal().array() += mu;
        xt = x - A.ldlt().solve(g);
        rt = sys.residual(xt);
        accepted = rt.allFinite() && rt.squaredNorm() < phi0;
      }
      if (!accepted) throw NonConvergence(it, rn);
    }
    x = xt;
    ++it;
    refresh(x);
    r = sys.residual(x, &fr);
    rn = inf_norm(r);
  }
  return it;
}

}  // namespace

Simulator::Simulator(const LumenModel& lumen, const RodModel& rod, const SimSettings& settings,
                     const RcmState& start)
    : lumen_(&lumen), rod_(&rod), settings_(settings) {
  if (!(settings_.dt > 0.0)) throw InvalidArgument("Simulator: dt must be positive");
  K_ = rod.stiffness_matrix();
  D_ = rod.damping_matrix(settings_.viscosity > 0.0 ? settings_.viscosity : rod.viscosity_for_step(settings_.dt));
  state_.q = VecX::Zero(rod.dim());
  state_.qdot = VecX::Zero(rod.dim());
  state_.rcm = start;
  state_.g_b = rcm_base_pose(start);
  for (double s : contact_stations(rod.length(), settings_.contact.stations, settings_.contact.refine_distal)) {
    PairState p;
    p.s_rod = s;
    state_.pairs.push_back(p);
  }
  if (settings_.contact.pivot_station) {
    PairState p;
    p.pivot = true;
    p.s_rod = start.d_a;
    state_.pairs.push_back(p);
  }
  state_.tip = rod_pose(rod, state_.g_b, state_.q, rod.length());
  state_.tip_X = closest_point(lumen, state_.tip.p).X;
}

void Simulator::locate(PairState& p, const Vec3& x) const {
  if (p.pivot) {
    const ClosestPoint cp =
        closest_point_on_section(*lumen_, x, 0.0, p.located ? std::optional<double>(p.X.beta) : std::nullopt);
    p.X = cp.X;
    p.located = true;
    p.g_c = contact_frame(*lumen_, p.X);
    return;
  }
  const double cell_s = lumen_->length() / 15.0;
  const double cell_b = 2.0 * std::numbers::pi / 8.0;
  ClosestPoint cp;
  if (p.located) {
    cp = closest_point(*lumen_, x, p.X);
    const bool jumped = std::abs(cp.X.s - p.X.s) > cell_s || std::abs(wrap_diff(cp.X.beta, p.X.beta)) > cell_b;
    if (jumped || !(cp.stationary || cp.on_boundary)) {
      const ClosestPoint alt = closest_point(*lumen_, x);
      if (alt.distance < cp.distance) cp = alt;
    }
  } else {
    cp = closest_point(*lumen_, x);
  }
  p.X = cp.X;
  p.located = true;
  p.g_c = contact_frame(*lumen_, p.X);
}

StepReport Simulator::step(const Mat3& R_b, double d_a) {
  const DaeState saved = state_;
  try {
    return advance(R_b, d_a, settings_.dt);
  } catch (const NonConvergence&) {
    state_ = saved;
  }
  // Retry with the base motion split into equal sub-increments.
  const Vec3 w = log_so3(saved.rcm.R_b.transpose() * R_b);
  const double d0 = saved.rcm.d_a;
  int last_it = 0;
  double last_res = 0.0;
  for (int parts = 2; parts <= settings_.newton.max_splits; parts *= 2) {
    StepReport total;
    try {
      for (int i = 1; i <= parts; ++i) {
        const double f = static_cast<double>(i) / parts;
        const bool last = i == parts;
        const StepReport r = advance(last ? R_b : Mat3(saved.rcm.R_b * exp_so3(f * w)),
                                     last ? d_a : d0 + f * (d_a - d0), settings_.dt / parts);
        total.iterations += r.iterations;
        total.residual = r.residual;
        total.active_pairs = r.active_pairs;
      }
      state_.step = saved.step + 1;
      state_.t = saved.t + settings_.dt;
      return total;
    } catch (const NonConvergence& e) {
      last_it = e.iterations();
      last_res = e.residual();
      state_ = saved;
    }
  }
  throw NonConvergence(last_it, last_res);
}

StepReport Simulator::advance(const Mat3& R_b, double d_a, double dt) {
  const RodModel& rod = *rod_;
  const ContactLaw& law = settings_.contact.law;
  const double L_lumen = lumen_->length();
  const double gap_on = settings_.contact.activation_gap;

  RcmState rcm = state_.rcm;
  rcm.R_b = R_b;
  rcm.d_a = d_a;
  const Pose g_new = rcm_base_pose(rcm);
  const Twist qb = log_se3(state_.g_b.inverse() * g_new);
  const int N = rod.dim() - 6;

  auto reset = [](PairState& p) {
    p.active = false;
    p.u.setZero();
    p.force.setZero();
    p.d_n = 0.0;
    p.v_t.setZero();
    p.stick = false;
  };
  const double spacing = rod.length() / settings_.contact.stations;
  auto activate = [&](PairState& p, const Pose& g, const Twist& eta) {
    p.active = true;
    // A penetrating newcomer starts at the force scale eps rather than at
    // its gap, which would read as a force of |d_n| newtons.
    const double dn = normal_gap(p.g_c, g, rod.radius(p.s_rod));
    p.u << std::max(dn, law.eps), sliding_velocity(g, p.g_c, eta);
  };

  // Active set from the predicted configuration: stations past the pivot
  // whose wall projection is interior, plus the pivot station once the rod
  // has entered. A candidate joins once its gap is below the threshold.
  std::vector<PairState> pairs = state_.pairs;
  for (auto& p : pairs) {
    if (p.pivot) p.s_rod = d_a;
  }
  std::vector<double> all_s;
  for (const auto& p : pairs) all_s.push_back(p.s_rod);
  VecX q(rod.dim());
  q << qb, state_.q.tail(N);
  VecX qdot_pred(rod.dim());
  qdot_pred << qb / dt, state_.qdot.tail(N);
  std::vector<bool> candidate(pairs.size(), false);
  {
    const RodFrames pred = frames_at(rod, state_.g_b, q, all_s, true);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      PairState& p = pairs[k];
      const bool inside = p.pivot ? rod.length() - d_a > 0.5 * spacing
                                  : p.s_rod > d_a + (settings_.contact.pivot_station ? 0.25 * spacing : 0.0);
      if (!inside) {
        reset(p);
        p.located = false;
        continue;
      }
      locate(p, pred.g[k].p);
      if (p.X.s >= L_lumen) {
        reset(p);
        p.located = false;
        continue;
      }
      candidate[k] = true;
      const double dn = normal_gap(p.g_c, pred.g[k], rod.radius(p.s_rod));
      if (p.active && dn > 2.0 * gap_on) reset(p);
      else if (!p.active && dn < gap_on) activate(p, pred.g[k], pred.J[k] * qdot_pred);
    }
  }

  StepReport rep;
  for (int attempt = 0;; ++attempt) {
    StepSystem sys{rod, K_, D_, dt, qb, state_.g_b, VecX::Zero(rod.dim()), {}, {}, {}, {}, {}, {}, N};
    sys.q_prev.tail(N) = state_.q.tail(N);
    sys.scale = K_.diagonal().tail(N).cwiseInverse();
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (!pairs[k].active) continue;
      sys.act.push_back(static_cast<int>(k));
      sys.s_act.push_back(pairs[k].s_rod);
      sys.r_act.push_back(rod.radius(pairs[k].s_rod));
      sys.g_c.push_back(pairs[k].g_c);
      sys.laws.push_back(law);
    }

    VecX x(sys.size());
    x.head(N) = state_.q.tail(N);
    for (std::size_t i = 0; i < sys.act.size(); ++i) {
      x.segment<3>(N + 3 * static_cast<int>(i)) = pairs[static_cast<std::size_t>(sys.act[i])].u;
    }

    auto refresh = [&](const VecX& xx) {
      const RodFrames fk = frames_at(rod, sys.g_b, sys.full_q(xx), sys.s_act, false);
      for (std::size_t i = 0; i < sys.act.size(); ++i) {
        PairState& p = pairs[static_cast<std::size_t>(sys.act[i])];
        locate(p, fk.g[i].p);
        sys.g_c[i] = p.g_c;
      }
    };

    RodFrames fr;
    const int it = newton_solve(sys, x, fr, settings_.newton, refresh);
    rep.iterations += it;
    rep.residual = inf_norm(sys.residual(x));
    rep.active_pairs = static_cast<int>(sys.act.size());
    q = sys.full_q(x);

    // Inactive candidates that ended up penetrating join the active set and
    // the step is solved again.
    std::vector<std::size_t> idle;
    std::vector<double> idle_s;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (candidate[k] && !pairs[k].active) {
        idle.push_back(k);
        idle_s.push_back(pairs[k].s_rod);
      }
    }
    bool missed = false;
    if (!idle.empty()) {
      const RodFrames fi = frames_at(rod, sys.g_b, q, idle_s, true);
      const VecX qd = (q - sys.q_prev) / dt;
      for (std::size_t i = 0; i < idle.size(); ++i) {
        PairState& p = pairs[idle[i]];
        locate(p, fi.g[i].p);
        if (normal_gap(p.g_c, fi.g[i], rod.radius(p.s_rod)) < 0.0) {
          activate(p, fi.g[i], fi.J[i] * qd);
          missed = true;
        }
      }
    }
    if (missed && attempt < 3) continue;

    // Commit.
    const VecX qdot = (q - sys.q_prev) / dt;
    Wrench base_sum = Wrench::Zero();
    for (std::size_t i = 0; i < sys.act.size(); ++i) {
      PairState& p = pairs[static_cast<std::size_t>(sys.act[i])];
      p.u = x.segment<3>(N + 3 * static_cast<int>(i));
      p.g = fr.g[i];
      p.force = sys.laws[i].force(p.u);
      p.d_n = normal_gap(p.g_c, p.g, sys.r_act[i]);
      p.v_t = sliding_velocity(p.g, p.g_c, fr.J[i] * qdot);
      const double rho = std::sqrt(p.u.tail<2>().squaredNorm() + law.eps_t * law.eps_t);
      p.stick = rho - sys.laws[i].mu * p.force(0) < 0.0;
      base_sum += (fr.J[i].transpose() * transfer_wrench(p.g, p.g_c, p.force)).head<6>();
    }
    // Base rows: -sum (J^T Lambda_e)_base = T^T Lambda_0.
    state_.lambda0 = -dexp_right(sys.qb).transpose().partialPivLu().solve(base_sum);
    state_.qdot = qdot;
    state_.q = VecX::Zero(rod.dim());
    state_.q.tail(N) = x.head(N);
    state_.g_b = g_new;
    state_.rcm = rcm;
    state_.pairs = std::move(pairs);
    state_.t += dt;
    state_.step += 1;
    state_.tip = rod_pose(rod, state_.g_b, state_.q, rod.length());
    state_.tip_X = closest_point(*lumen_, state_.tip.p, state_.tip_X).X;
    return rep;
  }
}

Mat3 frame_from_direction(const Vec3& direction, const Vec3& up) {
  const Vec3 x = direction.normalized();
  Vec3 z = up - up.dot(x) * x;
  if (z.norm() < 1e-9) {
    const Vec3 alt = std::abs(x.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    z = alt - alt.dot(x) * x;
  }
  z.normalize();
  Mat3 R;
  R << x, z.cross(x), z;
  return R;
}

RcmState insertion_start(const LumenModel& lumen, const RodModel& rod, const Vec3& direction, double v_par) {
  const Pose entrance = lumen.pose_at(0.0);
  RcmState rcm;
  rcm.p_a = entrance.p;
  rcm.R_b = frame_from_direction(direction, entrance.R.col(2));
  rcm.d_a = rod.length();
  rcm.v_par = v_par;
  return rcm;
}

Vec3 entrance_direction(const LumenModel& lumen, double yaw_deg, double pitch_deg) {
  constexpr double kRad = std::numbers::pi / 180.0;
  const Mat3 R = lumen.pose_at(0.0).R;
  const Mat3 yaw = exp_so3(R.col(2) * (yaw_deg * kRad));
  const Vec3 pitch_axis = yaw * R.col(1);
  return exp_so3(pitch_axis * (pitch_deg * kRad)) * yaw * R.col(0);
}

Trajectory run_insertion(const LumenModel& lumen, const RodModel& rod, const SimSettings& settings,
                         const InsertionProtocol& protocol, const RcmState& start,
                         const OrientationSource& orientation, const StepObserver& observer) {
  if (!(protocol.v_par >= 0.0)) throw InvalidArgument("run_insertion: v_par must be non-negative");
  Simulator sim(lumen, rod, settings, start);
  std::optional<SpiralAngleMap> angles;
  try {
    angles.emplace(lumen);
  } catch (const AxisUndefined&) {
  }

  const double step_mm = protocol.v_par * settings.dt;
  const double max_depth = protocol.max_depth < 0.0 ? start.d_a : std::min(protocol.max_depth, start.d_a);
  Trajectory tr;

  auto record = [&](int it) {
    const DaeState& st = sim.state();
    TrajectorySample s;
    s.step = st.step;
    s.t = st.t;
    s.depth_mm = start.d_a - st.rcm.d_a;
    s.lambda0 = st.lambda0;
    s.tip = st.tip.p;
    s.R_b = st.rcm.R_b;
    s.d_a = st.rcm.d_a;
    s.tip_s = st.tip_X.s;
    s.alpha_deg = angles ? angles->insertion_angle_deg(st.tip.p) : 0.0;
    s.iterations = it;
    if (protocol.keep_q) s.q = st.q;
    tr.alpha_max_deg = std::max(tr.alpha_max_deg, s.alpha_deg);
    tr.samples.push_back(std::move(s));
  };
  record(0);
  if (observer) observer(sim, tr.samples.back());

  tr.cause = Termination::MaxSteps;
  for (int k = 1; k <= protocol.max_steps; ++k) {
    const double depth = step_mm * k;
    if (depth > max_depth + 1e-12) {
      tr.cause = Termination::MaxDepth;
      break;
    }
    const Mat3 R = orientation ? orientation(sim, k) : sim.state().rcm.R_b;
    StepReport rep;
    try {
      rep = sim.step(R, std::max(0.0, start.d_a - depth));
    } catch (const NonConvergence& e) {
      tr.cause = Termination::NonConvergence;
      tr.message = e.what();
      break;
    }
    record(rep.iterations);
    TrajectorySample& cur = tr.samples.back();
    const int w = protocol.stall_window;
    if (step_mm > 0.0 && k >= w) {
      const double advance = cur.tip_s - tr.samples[static_cast<std::size_t>(k - w)].tip_s;
      if (advance < protocol.stall_ratio * w * step_mm) {
        cur.stall = true;
        if (tr.stall_step < 0) tr.stall_step = k;
      }
    }
    if (observer) observer(sim, cur);
    if (cur.stall && protocol.stop_on_stall) {
      tr.cause = Termination::Stall;
      break;
    }
    if (cur.tip_s >= lumen.length() - 1e-9) {
      tr.cause = Termination::LumenEnd;
      break;
    }
  }
  return tr;
}

namespace {

void put(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

void write_trajectory_csv(const Trajectory& tr, std::ostream& out) {
  out << "step,t,depth_mm,depth_alpha_deg,f0x,f0y,f0z,tau0x,tau0y,tau0z,tip_x,tip_y,tip_z,stall_flag\n";
  for (const auto& s : tr.samples) {
    out << s.step << ',';
    put(out, s.t);
    out << ',';
    put(out, s.depth_mm);
    out << ',';
    put(out, s.alpha_deg);
    for (int i : {3, 4, 5, 0, 1, 2}) {
      out << ',';
      put(out, s.lambda0(i));
    }
    for (int i = 0; i < 3; ++i) {
      out << ',';
      put(out, s.tip(i));
    }
    out << ',' << (s.stall ? 1 : 0) << '\n';
  }
}

void save_trajectory_csv(const Trajectory& tr, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("save_trajectory_csv: cannot open " + path);
  write_trajectory_csv(tr, out);
}

void write_pair_header(std::ostream& out) {
  out << "step,k,s_rod,s_surf,beta,d_n,lambda_n,lambda_t1,lambda_t2,stick_flag\n";
}

void write_pair_rows(const DaeState& state, std::ostream& out) {
  for (std::size_t k = 0; k < state.pairs.size(); ++k) {
    const PairState& p = state.pairs[k];
    if (!p.active) continue;
    out << state.step << ',' << k << ',';
    for (double v : {p.s_rod, p.X.s, p.X.beta, p.d_n, p.force(0), p.force(1), p.force(2)}) {
      put(out, v);
      out << ',';
    }
    out << (p.stick ? 1 : 0) << '\n';
  }
}

}  // namespace cisim
