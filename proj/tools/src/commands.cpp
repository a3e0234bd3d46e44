#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cisim/dynamics.hpp"
#include "cisim/error.hpp"
#include "cisim/meshpipe.hpp"
#include "cisim/metrics.hpp"
#include "cisim/planner.hpp"

namespace cisim::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr double kDeg = 180.0 / std::numbers::pi;

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string lumen;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_lumen = true) {
  cmd->add_option("--config", o.config, "Config file (flat TOML)");
  cmd->add_option("--set", o.sets, "Override section.key=value (repeatable)");
  if (with_lumen) cmd->add_option("--lumen", o.lumen, "Lumen JSON; overrides [lumen] source");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (!o.lumen.empty()) {
    cfg.lumen.kind = "lumen";
    cfg.lumen.path = o.lumen;
  }
  for (const auto& s : o.sets) apply_override(cfg, s);
  cfg.validate();
  return cfg;
}

double parse_value(const std::string& raw, const std::string& what) {
  std::string v = raw;
  if (v.size() > 3 && v.compare(v.size() - 3, 3, "deg") == 0) v.resize(v.size() - 3);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError("cannot parse " + what + " '" + raw + "'");
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) parts.push_back(item);
  return parts;
}

// Relative output paths land under [run] output_dir.
std::string out_path(const RunConfig& cfg, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  const fs::path full = fs::path(cfg.output_dir) / p;
  if (full.has_parent_path()) fs::create_directories(full.parent_path());
  return full.string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path + "'");
  f << text;
}

json summary_json(const Trajectory& tr) {
  return {{"alpha_max_deg", tr.alpha_max_deg},
          {"cause", to_string(tr.cause)},
          {"steps", tr.samples.empty() ? 0 : tr.samples.back().step},
          {"depth_mm", tr.samples.empty() ? 0.0 : tr.samples.back().depth_mm},
          {"stall_step", tr.stall_step},
          {"message", tr.message}};
}

// ---------------------------------------------------------------- lumen-build

struct LumenBuildOptions {
  CommonOptions common;
  bool synthetic = false;
  std::string mesh, centerline, out, stations_out;
  int samples = 0;
};

int cmd_lumen_build(const LumenBuildOptions& o, std::ostream& out) {
  RunConfig cfg = resolve(o.common);
  if (o.synthetic) cfg.lumen.kind = "synthetic";
  if (!o.mesh.empty()) {
    cfg.lumen.kind = "mesh";
    cfg.lumen.path = o.mesh;
    cfg.lumen.centerline = o.centerline;
  }
  if (o.samples > 0) cfg.lumen.samples = o.samples;
  cfg.validate();

  LumenModel model;
  if (cfg.lumen.kind == "mesh") {
    const TriMesh mesh = load_trimesh(cfg.lumen.path);
    const CenterlinePolyline cl = arclength_parametrize(load_centerline_points(cfg.lumen.centerline));
    SampleStrategy strategy;
    strategy.n = cfg.lumen.samples;
    const ExtractedStations ex = extract_stations(mesh, cl, select_samples(cl, strategy));
    if (!o.stations_out.empty()) write_text(out_path(cfg, o.stations_out), stations_to_json(ex.stations));
    model = lumen_from_stations(ex, cfg.lumen.exponent);
  } else {
    model = build_lumen(cfg.lumen);
  }
  const std::string lumen_out = out_path(cfg, o.out);
  save_lumen(model, lumen_out);
  out << json{{"lumen", lumen_out},
              {"source", cfg.lumen.kind},
              {"length_mm", model.length()},
              {"stations", model.frames().size()},
              {"clamp_warnings", model.clamp_warnings()}}
             .dump()
      << "\n";
  return kOk;
}

// ------------------------------------------------------------------- simulate

struct SimulateOptions {
  CommonOptions common;
  std::string orientation = "0";
  std::string out, pairs, summary;
};

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
  const RunConfig cfg = resolve(o.common);
  const LumenModel lumen = build_lumen(cfg.lumen);
  const RodModel rod(cfg.rod);
  const auto [yaw, pitch] = parse_angles(o.orientation);
  const RcmState start = insertion_start(lumen, rod, entrance_direction(lumen, yaw, pitch), cfg.protocol.v_par);

  std::ofstream pair_file;
  StepObserver observer;
  if (!o.pairs.empty()) {
    const std::string pairs = out_path(cfg, o.pairs);
    pair_file.open(pairs, std::ios::binary);
    if (!pair_file) throw Error("cannot write '" + pairs + "'");
    write_pair_header(pair_file);
    observer = [&](const Simulator& sim, const TrajectorySample&) { write_pair_rows(sim.state(), pair_file); };
  }
  const Trajectory tr = run_insertion(lumen, rod, cfg.settings(), cfg.protocol, start, {}, observer);
  const std::string csv = out_path(cfg, o.out);
  save_trajectory_csv(tr, csv);

  json s = summary_json(tr);
  s["trajectory"] = csv;
  s["yaw_deg"] = yaw;
  s["pitch_deg"] = pitch;
  if (!o.summary.empty()) write_text(out_path(cfg, o.summary), s.dump(1) + "\n");
  out << s.dump() << "\n";
  return kOk;
}

// ----------------------------------------------------------------------- plan

struct PlanOptions {
  CommonOptions common;
  std::string init = "0";
  std::string out, trajectory, cone;
  int jobs = 0;
};

struct PlanJob {
  Vec3 direction;
  PlanResult result;
  std::exception_ptr error;
};

void run_pool(std::vector<PlanJob>& jobs, int workers, const LumenModel& lumen, const RunConfig& cfg) {
  const RodModel rod(cfg.rod);
  const SimSettings settings = cfg.settings();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const RcmState start = insertion_start(lumen, rod, jobs[i].direction, cfg.protocol.v_par);
        jobs[i].result = plan_insertion(lumen, rod, settings, cfg.protocol, start, cfg.planner);
      } catch (...) {
        jobs[i].error = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  std::vector<std::thread> threads;
  for (int t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (const auto& j : jobs) {
    if (j.error) std::rethrow_exception(j.error);
  }
}

int cmd_plan(const PlanOptions& o, std::ostream& out) {
  RunConfig cfg = resolve(o.common);
  if (o.jobs > 0) cfg.jobs = o.jobs;
  const LumenModel lumen = build_lumen(cfg.lumen);
  const auto [yaw, pitch] = parse_angles(o.init);
  const Vec3 axis = entrance_direction(lumen, yaw, pitch);

  if (o.cone.empty()) {
    std::vector<PlanJob> jobs(1);
    jobs[0].direction = axis;
    run_pool(jobs, 1, lumen, cfg);
    const std::string plan_out = out_path(cfg, o.out);
    save_plan(jobs[0].result.plan, plan_out);
    if (!o.trajectory.empty()) save_trajectory_csv(jobs[0].result.trajectory, out_path(cfg, o.trajectory));
    json s = summary_json(jobs[0].result.trajectory);
    s["plan"] = plan_out;
    s["singular_steps"] = jobs[0].result.singular_steps;
    out << s.dump() << "\n";
    return kOk;
  }

  const auto parts = split(o.cone, ',');
  if (parts.size() < 2 || parts.size() > 3) throw ConfigError("--cone expects HALF_ANGLE[deg],COUNT[,RINGS]");
  cfg.cone_half_angle_deg = parse_value(parts[0], "cone half angle");
  cfg.cone_count = static_cast<int>(parse_value(parts[1], "cone count"));
  if (parts.size() == 3) cfg.cone_rings = static_cast<int>(parse_value(parts[2], "cone rings"));
  cfg.validate();

  std::vector<Mat3> frames =
      sample_cone_orientations(axis, cfg.cone_half_angle_deg / kDeg, cfg.cone_count, cfg.cone_rings);
  if (cfg.cone_jitter) {
    // One azimuth phase for the whole batch, drawn from the run seed.
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi / cfg.cone_count);
    const Mat3 spin = exp_so3(axis * phase(rng));
    for (auto& R : frames) R = spin * R;
  }
  std::vector<PlanJob> jobs(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) jobs[i].direction = frames[i].col(0);
  run_pool(jobs, cfg.jobs, lumen, cfg);

  const fs::path dir = out_path(cfg, o.out);
  fs::create_directories(dir);
  std::vector<Plan> plans;
  json runs = json::array();
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "%03zu", i);
    const std::string plan_path = (dir / ("plan_" + std::string(stem) + ".json")).string();
    const std::string traj_path = (dir / ("trajectory_" + std::string(stem) + ".csv")).string();
    plans.push_back(jobs[i].result.plan);
    save_plan(plans.back(), plan_path);
    save_trajectory_csv(jobs[i].result.trajectory, traj_path);
    const auto [y, p] = entrance_angles(lumen, jobs[i].direction);
    json r = summary_json(jobs[i].result.trajectory);
    r["plan"] = plan_path;
    r["trajectory"] = traj_path;
    r["yaw_deg"] = y;
    r["pitch_deg"] = p;
    r["singular_steps"] = jobs[i].result.singular_steps;
    runs.push_back(std::move(r));
  }
  const Vec3 g = goid(plans);
  const auto [gy, gp] = entrance_angles(lumen, g);
  const json summary = {{"schema", "cisim.goid/1"},
                        {"goid", {g.x(), g.y(), g.z()}},
                        {"goid_yaw_deg", gy},
                        {"goid_pitch_deg", gp},
                        {"cone", {{"axis", {axis.x(), axis.y(), axis.z()}},
                                  {"half_angle_deg", cfg.cone_half_angle_deg},
                                  {"count", cfg.cone_count},
                                  {"rings", cfg.cone_rings},
                                  {"jitter", cfg.cone_jitter},
                                  {"seed", cfg.seed}}},
                        {"runs", runs}};
  const std::string goid_path = (dir / "goid.json").string();
  write_text(goid_path, summary.dump(1) + "\n");
  out << json{{"goid", {g.x(), g.y(), g.z()}}, {"goid_yaw_deg", gy}, {"goid_pitch_deg", gp},
              {"plans", jobs.size()}, {"summary", goid_path}}
             .dump()
      << "\n";
  return kOk;
}

// --------------------------------------------------------------------- replay

struct ReplayOptions {
  CommonOptions common;
  std::string plan, out;
};

int cmd_replay(const ReplayOptions& o, std::ostream& out) {
  RunConfig cfg = resolve(o.common);
  const Plan plan = load_plan(o.plan);
  // The plan fixes the depth sequence; a bit-identical replay needs its step.
  if (plan.v_par > 0.0) cfg.protocol.v_par = plan.v_par;
  if (plan.step_mm > 0.0) cfg.step_mm = plan.step_mm;
  cfg.validate();
  const LumenModel lumen = build_lumen(cfg.lumen);
  const RodModel rod(cfg.rod);
  if (plan.entries.empty()) throw InvalidArgument("plan has no entries");
  const RcmState start = insertion_start(lumen, rod, plan.entries.front().R_b.col(0), cfg.protocol.v_par);
  InsertionProtocol protocol = cfg.protocol;
  protocol.max_depth = -1.0;
  const Trajectory tr = replay_plan(lumen, rod, cfg.settings(), protocol, start, plan);
  const std::string csv = out_path(cfg, o.out);
  save_trajectory_csv(tr, csv);
  json s = summary_json(tr);
  s["trajectory"] = csv;
  out << s.dump() << "\n";
  return kOk;
}

// -------------------------------------------------------------------- metrics

struct MetricsOptions {
  std::string a, b, out;
  bool by_time = false;
  double floor = 1e-6;
};

int cmd_metrics(const MetricsOptions& o, std::ostream& out) {
  const ForceTrace a = read_force_trace(o.a, o.by_time);
  const ForceTrace b = read_force_trace(o.b, o.by_time);
  const json s = {{"ime", ime(a, b, o.floor)},
                  {"ime_reverse", ime(b, a, o.floor)},
                  {"abscissa", o.by_time ? "t" : "depth_mm"},
                  {"samples_a", a.x.size()},
                  {"samples_b", b.x.size()}};
  if (!o.out.empty()) write_text(o.out, s.dump(1) + "\n");
  out << s.dump() << "\n";
  return kOk;
}

std::string version_text() {
  return "cisim " CISIM_VERSION_STRING
         "\n"
         "config        cisim.config/1 (flat TOML sections: lumen rod contact solver protocol planner run)\n"
         "lumen         cisim.lumen/1 (JSON)\n"
         "stations      cisim.stations/1 (JSON array of station samples)\n"
         "plan          cisim.plan/1 (JSON)\n"
         "goid          cisim.goid/1 (JSON batch summary)\n"
         "trajectory    cisim.trajectory/1 (CSV: step,t,depth_mm,depth_alpha_deg,f0x,f0y,f0z,"
         "tau0x,tau0y,tau0z,tip_x,tip_y,tip_z,stall_flag)\n"
         "pairs         cisim.pairs/1 (CSV: step,k,s_rod,s_surf,beta,d_n,lambda_n,lambda_t1,"
         "lambda_t2,stick_flag)\n"
         "mesh          STL (binary or ASCII)\n"
         "centerline    CSV x,y,z or JSON array of 3-arrays\n";
}

}  // namespace

LumenModel build_lumen(const LumenSource& source) {
  if (source.kind == "synthetic") return make_spiral_lumen(source.spiral).model;
  if (source.kind == "lumen") return load_lumen(source.path);
  if (source.kind == "stations") {
    std::ifstream f(source.path);
    if (!f) throw Error("cannot open '" + source.path + "'");
    std::stringstream buf;
    buf << f.rdbuf();
    ExtractedStations ex;
    ex.stations = stations_from_json(buf.str());
    return lumen_from_stations(ex, source.exponent);
  }
  if (source.kind == "mesh") {
    const TriMesh mesh = load_trimesh(source.path);
    const CenterlinePolyline cl = arclength_parametrize(load_centerline_points(source.centerline));
    SampleStrategy strategy;
    strategy.n = source.samples;
    return lumen_from_stations(extract_stations(mesh, cl, select_samples(cl, strategy)), source.exponent);
  }
  throw ConfigError("key 'lumen.source' has unknown value '" + source.kind + "'");
}

std::pair<double, double> parse_angles(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.empty() || parts.size() > 2) throw ConfigError("orientation expects YAW[,PITCH] in degrees");
  const double yaw = parse_value(parts[0], "yaw");
  const double pitch = parts.size() == 2 ? parse_value(parts[1], "pitch") : 0.0;
  return {yaw, pitch};
}

std::pair<double, double> entrance_angles(const LumenModel& lumen, const Vec3& direction) {
  const Vec3 local = lumen.pose_at(0.0).R.transpose() * direction.normalized();
  return {std::atan2(local.y(), local.x()) * kDeg, -std::asin(std::clamp(local.z(), -1.0, 1.0)) * kDeg};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cochlear implant insertion simulator and planner", "cisim"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "Print the tool version and file schema versions");

  LumenBuildOptions lb;
  auto* c_lb = app.add_subcommand("lumen-build", "Build a lumen JSON from a mesh or the synthetic spiral");
  add_common(c_lb, lb.common, false);
  auto* o_syn = c_lb->add_flag("--synthetic", lb.synthetic, "Use the synthetic spiral ([lumen] parameters)");
  auto* o_mesh = c_lb->add_option("--mesh", lb.mesh, "Surface mesh (STL)");
  auto* o_cl = c_lb->add_option("--centerline", lb.centerline, "Centerline polyline (CSV or JSON)");
  c_lb->add_option("--samples", lb.samples, "Number of centerline intervals");
  c_lb->add_option("--stations-out", lb.stations_out, "Also write the extracted stations JSON");
  c_lb->add_option("--out", lb.out, "Output lumen JSON")->required();
  o_mesh->needs(o_cl);
  o_mesh->excludes(o_syn);

  SimulateOptions sim;
  auto* c_sim = app.add_subcommand("simulate", "Constant-orientation insertion");
  add_common(c_sim, sim.common);
  c_sim->add_option("--orientation", sim.orientation, "YAW[,PITCH] degrees from the entrance tangent");
  c_sim->add_option("--out", sim.out, "Trajectory CSV")->required();
  c_sim->add_option("--pairs", sim.pairs, "Per-step contact pair CSV");
  c_sim->add_option("--summary", sim.summary, "Summary JSON");

  PlanOptions plan;
  auto* c_plan = app.add_subcommand("plan", "Closed-loop planning; --cone runs a batch and reports the GOID");
  add_common(c_plan, plan.common);
  c_plan->add_option("--init", plan.init, "Initial YAW[,PITCH] degrees from the entrance tangent");
  c_plan->add_option("--out", plan.out, "Plan JSON, or the output directory with --cone")->required();
  c_plan->add_option("--trajectory", plan.trajectory, "Trajectory CSV of a single plan");
  c_plan->add_option("--cone", plan.cone, "HALF_ANGLE[deg],COUNT[,RINGS] batch around --init");
  c_plan->add_option("--jobs", plan.jobs, "Worker threads for batches");

  ReplayOptions rep;
  auto* c_rep = app.add_subcommand("replay", "Open-loop replay of a plan");
  add_common(c_rep, rep.common);
  c_rep->add_option("--plan", rep.plan, "Plan JSON")->required();
  c_rep->add_option("--out", rep.out, "Trajectory CSV")->required();

  MetricsOptions met;
  auto* c_met = app.add_subcommand("metrics", "IME between two trajectory CSVs");
  c_met->add_option("--a", met.a, "Reference trajectory CSV")->required();
  c_met->add_option("--b", met.b, "Compared trajectory CSV")->required();
  c_met->add_flag("--by-time", met.by_time, "Integrate over time instead of depth");
  c_met->add_option("--floor", met.floor, "Denominator floor (N)");
  c_met->add_option("--out", met.out, "Summary JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  if (version) {
    out << version_text();
    return kOk;
  }

  try {
    if (c_lb->parsed()) return cmd_lumen_build(lb, out);
    if (c_sim->parsed()) return cmd_simulate(sim, out);
    if (c_plan->parsed()) return cmd_plan(plan, out);
    if (c_rep->parsed()) return cmd_replay(rep, out);
    if (c_met->parsed()) return cmd_metrics(met, out);
  } catch (const ConfigError& e) {
    err << "cisim: config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "cisim: error: " << e.what() << "\n";
    return kRuntime;
  }
  err << app.help();
  return kUsage;
}

}  // namespace cisim::cli
