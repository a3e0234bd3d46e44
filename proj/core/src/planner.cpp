#include "cisim/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/LU>

#include "cisim/error.hpp"
#include "json.hpp"

namespace cisim {

using json = nlohmann::json;

namespace {

// Contact-frame wrench columns [0; f] pulled back to the rod body frame.
Eigen::Matrix<double, 6, 3> pullback(const Mat6& Ad) { return Ad.transpose().rightCols<3>(); }

// A evaluated at slack values u; every other block is frozen.
MatX assemble_matrix(const FrozenState& fs, const std::vector<Vec3>& u) {
  const int n = fs.dim();
  const int M = fs.pairs();
  const int size = n + 6 + 3 * M;
  MatX A = MatX::Zero(size, size);
  A.topLeftCorner(n, n) = fs.K;
  A.block(0, n, 6, 6) = -Mat6::Identity();
  A.block(n, 0, 6, 6) = Mat6::Identity();
  for (int i = 0; i < M; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    const int c = n + 6 + 3 * i;
    Mat3 dforce, dres;
    fs.law.force(u[k], &dforce);
    fs.law.residual(0.0, Vec2::Zero(), u[k], &dres);
    A.block(0, c, n, 3) = -(fs.J[k].transpose() * (pullback(fs.Ad[k]) * dforce));
    // Normal row: gap rate of the centerline point along the frozen normal.
    A.block(c, 0, 1, n) = fs.R_rel[k].row(0) * fs.J[k].bottomRows<3>();
    // Tangential rows: slip over one step of the frozen contact frame.
    A.block(c + 1, 0, 2, n) = (fs.Ad[k] * fs.J[k]).bottomRows<2>();
    A.block<1, 3>(c, c) = dres.row(0);
    A.block<2, 3>(c + 1, c) = fs.dt * dres.bottomRows<2>();
  }
  return A;
}

Eigen::FullPivLU<MatX> factorize(const MatX& A) {
  Eigen::FullPivLU<MatX> lu(A);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible()) {
    throw SingularA("planner: differentiated system is rank deficient (rank " + std::to_string(lu.rank()) +
                    " of " + std::to_string(A.rows()) + ")");
  }
  return lu;
}

}  // namespace

VecX FrozenState::external_force(const std::vector<Vec3>& uu) const {
  VecX F = VecX::Zero(dim());
  for (std::size_t k = 0; k < uu.size(); ++k) {
    F.noalias() -= J[k].transpose() * (pullback(Ad[k]) * law.force(uu[k]));
  }
  return F;
}

FrozenState freeze(const Simulator& sim) {
  const DaeState& st = sim.state();
  FrozenState fs;
  fs.K = sim.stiffness();
  fs.d_a = st.rcm.d_a;
  fs.dt = sim.settings().dt;
  fs.law = sim.settings().contact.law;
  fs.lambda0 = st.lambda0;

  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < st.pairs.size(); ++k) {
    if (st.pairs[k].active) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return st.pairs[a].s_rod < st.pairs[b].s_rod; });
  for (std::size_t k : order) fs.s_rod.push_back(st.pairs[k].s_rod);
  const RodFrames fr = forward_kinematics(sim.rod(), st.g_b, st.q, fs.s_rod, true);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const PairState& p = st.pairs[order[i]];
    fs.J.push_back(fr.J[i]);
    fs.Ad.push_back(adjoint_pose(p.g_c.inverse() * fr.g[i]));
    fs.R_rel.push_back(p.g_c.R.transpose() * fr.g[i].R);
    fs.u.push_back(p.u);
  }
  return fs;
}

DiffSystem assemble_diff_system(const FrozenState& fs) {
  DiffSystem sys;
  sys.dim = fs.dim();
  sys.pairs = fs.pairs();
  sys.A = assemble_matrix(fs, fs.u);
  const RcmTwistMaps G = rcm_twist_maps(fs.d_a);
  sys.B_omega = Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(sys.A.rows(), 3);
  sys.B_v = VecX::Zero(sys.A.rows());
  sys.B_omega.middleRows(sys.dim, 6) = G.G_omega;
  sys.B_v.segment(sys.dim, 6) = G.G_v;
  return sys;
}

SensitivityPack sensitivities(const DiffSystem& sys, const Wrench& lambda0) {
  MatX B(sys.A.rows(), 4);
  B << sys.B_omega, sys.B_v;
  const MatX X = factorize(sys.A).solve(B);
  SensitivityPack pack;
  pack.H_omega = X.block(sys.lambda0_offset(), 0, 6, 3);
  pack.H_v = X.block(sys.lambda0_offset(), 3, 6, 1);
  pack.J_perp = pack.H_omega.bottomRows<2>();
  pack.b_perp = pack.H_v.tail<2>();
  pack.f_perp = lambda0.tail<2>();
  return pack;
}

Vec3 feedback_omega(const SensitivityPack& pack, double v_par, const PlannerSettings& ps) {
  if (!(ps.eps_dls > 0.0)) throw InvalidArgument("feedback_omega: eps_dls must be positive");
  const Mat2 JJ = pack.J_perp * pack.J_perp.transpose();
  const double tr = JJ.trace();
  if (!(tr > 0.0)) return Vec3::Zero();
  const Vec2 target = ps.k * pack.f_perp + pack.b_perp * v_par;
  Vec3 w = -pack.J_perp.transpose() * (JJ + ps.eps_dls * 0.5 * tr * Mat2::Identity()).ldlt().solve(target);
  const double n = w.norm();
  if (n > ps.omega_max) w *= ps.omega_max / n;
  return w;
}

namespace {

Wrench frozen_increment(const FrozenState& fs, const Vec3& omega, double v, double delta) {
  const int n = fs.dim();
  const int M = fs.pairs();
  const RcmTwistMaps G = rcm_twist_maps(fs.d_a);
  const Vec6 eta = G.G_omega * omega + G.G_v * v;
  const VecX F0 = fs.external_force(fs.u);
  std::vector<Vec3> res0;
  for (const auto& u : fs.u) res0.push_back(fs.law.residual(0.0, Vec2::Zero(), u));
  // A holds the dt factor on the tangential rows; C_q there is per step.
  MatX Cq = MatX::Zero(3 * M, n);
  {
    const MatX A0 = assemble_matrix(fs, fs.u);
    Cq = A0.bottomLeftCorner(3 * M, n);
  }

  VecX z = VecX::Zero(n + 6 + 3 * M);
  std::vector<Vec3> u = fs.u;
  for (int it = 0; it < 30; ++it) {
    VecX r(z.size());
    const VecX dq = z.head(n);
    r.head(n) = fs.K * dq + fs.external_force(u) - F0;
    r.head(6) -= z.segment<6>(n);
    r.segment(n, 6) = dq.head<6>() - delta * eta;
    for (int i = 0; i < M; ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      const Vec3 dres = fs.law.residual(0.0, Vec2::Zero(), u[k]) - res0[k];
      Vec3 row = Cq.middleRows(3 * i, 3) * dq;
      row(0) += dres(0);
      row.tail<2>() += fs.dt * dres.tail<2>();
      r.segment<3>(n + 6 + 3 * i) = row;
    }
    const double scale = std::abs(delta) * (1.0 + eta.norm());
    if (r.lpNorm<Eigen::Infinity>() < 1e-15 * scale && it > 0) break;
    z -= factorize(assemble_matrix(fs, u)).solve(r);
    for (int i = 0; i < M; ++i) {
      u[static_cast<std::size_t>(i)] = fs.u[static_cast<std::size_t>(i)] + z.segment<3>(n + 6 + 3 * i);
    }
  }
  return z.segment<6>(n);
}

}  // namespace

Wrench frozen_response(const FrozenState& fs, const Vec3& omega, double v, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("frozen_response: delta must be positive");
  return (frozen_increment(fs, omega, v, delta) - frozen_increment(fs, omega, v, -delta)) / (2.0 * delta);
}

PlanResult plan_insertion(const LumenModel& lumen, const RodModel& rod, const SimSettings& settings,
                          const InsertionProtocol& protocol, const RcmState& start,
                          const PlannerSettings& ps, const StepObserver& observer) {
  PlanResult out;
  Vec3 held = Vec3::Zero();
  auto source = [&](const Simulator& sim, int) -> Mat3 {
    try {
      const FrozenState fs = freeze(sim);
      held = feedback_omega(sensitivities(assemble_diff_system(fs), fs.lambda0), protocol.v_par, ps);
    } catch (const SingularA&) {
      ++out.singular_steps;
    }
    return sim.state().rcm.R_b * exp_so3(held * sim.settings().dt);
  };
  out.trajectory = run_insertion(lumen, rod, settings, protocol, start, source, observer);
  out.plan.k = ps.k;
  out.plan.eps_dls = ps.eps_dls;
  out.plan.v_par = protocol.v_par;
  out.plan.step_mm = protocol.v_par * settings.dt;
  for (const auto& s : out.trajectory.samples) out.plan.entries.push_back({s.depth_mm, s.R_b, s.d_a});
  return out;
}

Trajectory replay_plan(const LumenModel& lumen, const RodModel& rod, const SimSettings& settings,
                       const InsertionProtocol& protocol, const RcmState& start, const Plan& plan) {
  if (plan.entries.empty()) throw InvalidArgument("replay_plan: empty plan");
  InsertionProtocol p = protocol;
  p.max_steps = std::min(protocol.max_steps, static_cast<int>(plan.entries.size()) - 1);
  RcmState s0 = start;
  s0.R_b = plan.entries.front().R_b;
  auto source = [&](const Simulator&, int k) { return plan.entries[static_cast<std::size_t>(k)].R_b; };
  Trajectory tr = run_insertion(lumen, rod, settings, p, s0, source);
  if (tr.cause == Termination::MaxSteps && p.max_steps < protocol.max_steps) tr.cause = Termination::PlanEnd;
  return tr;
}

std::string plan_to_json(const Plan& plan) {
  json j;
  j["schema"] = "cisim.plan/1";
  j["meta"] = {{"k", plan.k}, {"eps_dls", plan.eps_dls}, {"v_par", plan.v_par}, {"step_mm", plan.step_mm}};
  json entries = json::array();
  for (const auto& e : plan.entries) {
    std::vector<double> R(9);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) R[static_cast<std::size_t>(3 * r + c)] = e.R_b(r, c);
    }
    entries.push_back({{"depth_mm", e.depth_mm}, {"R_b", R}, {"d_a_mm", e.d_a}});
  }
  j["entries"] = std::move(entries);
  return j.dump(1);
}

Plan plan_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    Plan plan;
    const json& meta = j.at("meta");
    plan.k = meta.at("k").get<double>();
    plan.eps_dls = meta.at("eps_dls").get<double>();
    plan.v_par = meta.at("v_par").get<double>();
    plan.step_mm = meta.at("step_mm").get<double>();
    for (const auto& e : j.at("entries")) {
      const auto R = e.at("R_b").get<std::vector<double>>();
      if (R.size() != 9) throw ParseError("plan JSON: R_b needs 9 values");
      PlanEntry pe;
      pe.depth_mm = e.at("depth_mm").get<double>();
      pe.d_a = e.at("d_a_mm").get<double>();
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) pe.R_b(r, c) = R[static_cast<std::size_t>(3 * r + c)];
      }
      plan.entries.push_back(pe);
    }
    return plan;
  } catch (const json::exception& e) {
    throw ParseError(std::string("plan JSON: ") + e.what());
  }
}

void save_plan(const Plan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << plan_to_json(plan) << '\n';
}

Plan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return plan_from_json(ss.str());
}

std::vector<Mat3> sample_cone_orientations(const Vec3& axis, double half_angle, int per_ring, int rings,
                                           const Vec3& up) {
  if (!(half_angle >= 0.0 && half_angle < 0.5 * std::numbers::pi)) {
    throw InvalidArgument("sample_cone_orientations: half angle must be in [0, pi/2)");
  }
  if (per_ring < 1 || rings < 1) throw InvalidArgument("sample_cone_orientations: need at least one sample");
  const Vec3 a = axis.normalized();
  if (half_angle == 0.0) return {frame_from_direction(a, up)};
  const Mat3 F = frame_from_direction(a, up);
  std::vector<Mat3> out;
  for (int j = 1; j <= rings; ++j) {
    const double polar = half_angle * j / rings;
    for (int i = 0; i < per_ring; ++i) {
      const double az = 2.0 * std::numbers::pi * i / per_ring;
      const Vec3 d = F * Vec3(std::cos(polar), std::sin(polar) * std::cos(az), std::sin(polar) * std::sin(az));
      out.push_back(frame_from_direction(d, up));
    }
  }
  return out;
}

Vec3 goid(const std::vector<Plan>& plans) {
  Vec3 sum = Vec3::Zero();
  int used = 0;
  for (const auto& p : plans) {
    if (p.entries.size() < 2) continue;
    const double d0 = p.entries.front().depth_mm;
    const double d1 = p.entries.back().depth_mm;
    const double cut = d1 - 0.2 * (d1 - d0);
    Vec3 mean = Vec3::Zero();
    int count = 0;
    for (const auto& e : p.entries) {
      if (e.depth_mm >= cut) {
        mean += e.R_b.col(0);
        ++count;
      }
    }
    sum += mean / count;
    ++used;
  }
  if (used == 0 || sum.norm() == 0.0) throw EmptyPlans("goid: no plan with a late-stage segment");
  return sum.normalized();
}

}  // namespace cisim
