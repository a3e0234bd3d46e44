#include <random>

#include <benchmark/benchmark.h>

#include "cisim/contact.hpp"
#include "cisim/dynamics.hpp"
#include "cisim/liegroup.hpp"
#include "cisim/meshpipe.hpp"
#include "cisim/planner.hpp"

using namespace cisim;

namespace {

const SyntheticLumen& spiral() {
  static const SyntheticLumen sp = make_spiral_lumen();
  return sp;
}

// Simulator advanced to a state with wall contact on the spiral.
Simulator engaged_simulator() {
  const LumenModel& lumen = spiral().model;
  static const RodModel rod{RodParams{}};
  const RcmState start = insertion_start(lumen, rod, entrance_direction(lumen, 0.0));
  Simulator sim(lumen, rod, SimSettings{}, start);
  for (int k = 1; k <= 60; ++k) sim.step(start.R_b, start.d_a - 0.05 * k);
  return sim;
}

void BM_ExpLogSE3(benchmark::State& state) {
  const Twist xi = (Twist() << 0.3, -1.1, 0.7, 2.0, -0.5, 1.5).finished();
  for (auto _ : state) {
    const Pose g = exp_se3(xi, 0.9);
    benchmark::DoNotOptimize(log_se3(g));
  }
}
BENCHMARK(BM_ExpLogSE3);

void BM_SurfacePoint(benchmark::State& state) {
  const LumenModel& m = spiral().model;
  double s = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(m.surface_point(s, 1.3));
    s = s > 30.0 ? 0.0 : s + 0.37;
  }
}
BENCHMARK(BM_SurfacePoint);

void BM_ClosestPoint(benchmark::State& state) {
  const LumenModel& m = spiral().model;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> us(0.0, m.length()), ub(0.0, 6.28);
  std::vector<Vec3> probes;
  for (int i = 0; i < 64; ++i) {
    const double s = us(rng);
    const Pose g = m.pose_at(s);
    probes.push_back(g.p + 0.5 * (g.R * m.section(s, ub(rng))));
  }
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(closest_point(m, probes[i++ % probes.size()]));
}
BENCHMARK(BM_ClosestPoint);

void BM_ForwardKinematics(benchmark::State& state) {
  const RodModel rod{RodParams{}};
  VecX q = VecX::Zero(rod.dim());
  for (int k = 0; k < rod.nodes(); ++k) q(6 + 6 * k + 2) = 0.05;
  const std::vector<double> s = contact_stations(rod.length(), static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_kinematics(rod, Pose(), q, s, true));
}
BENCHMARK(BM_ForwardKinematics)->Arg(16)->Arg(64);

void BM_SimulatorStep(benchmark::State& state) {
  const Simulator base = engaged_simulator();
  const RcmState rcm = base.state().rcm;
  for (auto _ : state) {
    state.PauseTiming();
    Simulator sim = base;
    state.ResumeTiming();
    benchmark::DoNotOptimize(sim.step(rcm.R_b, rcm.d_a - 0.05));
  }
}
BENCHMARK(BM_SimulatorStep)->Unit(benchmark::kMillisecond);

void BM_Sensitivities(benchmark::State& state) {
  const Simulator sim = engaged_simulator();
  for (auto _ : state) {
    const FrozenState fs = freeze(sim);
    benchmark::DoNotOptimize(sensitivities(assemble_diff_system(fs), fs.lambda0));
  }
}
BENCHMARK(BM_Sensitivities)->Unit(benchmark::kMicrosecond);

void BM_MeshStationExtraction(benchmark::State& state) {
  const LumenModel& m = spiral().model;
  const TriMesh mesh = triangulate_lumen(m, 0.05, 0.1);
  std::vector<Vec3> pts;
  for (int i = 0; i <= 2000; ++i) pts.push_back(spiral().centerline(m.length() * i / 2000));
  const CenterlinePolyline cl = arclength_parametrize(pts);
  const auto samples = select_samples(cl, {SampleStrategy::Kind::Uniform, 39, 0.0});
  for (auto _ : state) benchmark::DoNotOptimize(extract_stations(mesh, cl, samples));
}
BENCHMARK(BM_MeshStationExtraction)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
