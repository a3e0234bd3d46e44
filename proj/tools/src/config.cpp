#include "config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "cisim/error.hpp"

namespace cisim::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::string parse_string(const std::string& v) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"') return v;  // bare words from --set
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    if (v[i] == '\\' && i + 2 < v.size()) ++i;
    out += v[i];
  }
  return out;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Field>
Entry num(std::string key, Field field) {
  return {key,
          [key, field](RunConfig& c, const std::string& v) { field(c) = parse_double(key, v); },
          [field](const RunConfig& c) { return format_double(field(c)); }};
}

template <class Field>
Entry integer(std::string key, Field field) {
  return {key,
          [key, field](RunConfig& c, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(parse_int(key, v));
          },
          [field](const RunConfig& c) { return std::to_string(field(c)); }};
}

template <class Field>
Entry boolean(std::string key, Field field) {
  return {key, [key, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(key, v); },
          [field](const RunConfig& c) {
            return std::string(field(c) ? "true" : "false");
          }};
}

template <class Field>
Entry text(std::string key, Field field) {
  return {key, [field](RunConfig& c, const std::string& v) { field(c) = parse_string(v); },
          [field](const RunConfig& c) { return quote(field(c)); }};
}

#define F(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      text("lumen.source", F(lumen.kind)),
      text("lumen.path", F(lumen.path)),
      text("lumen.centerline", F(lumen.centerline)),
      integer("lumen.samples", F(lumen.samples)),
      num("lumen.exponent", F(lumen.exponent)),
      num("lumen.turns", F(lumen.spiral.turns)),
      num("lumen.start_radius_mm", F(lumen.spiral.start_radius)),
      num("lumen.end_radius_mm", F(lumen.spiral.end_radius)),
      num("lumen.rise_mm", F(lumen.spiral.rise)),
      num("lumen.a_start_mm", F(lumen.spiral.a_start)),
      num("lumen.a_end_mm", F(lumen.spiral.a_end)),
      num("lumen.bu_start_mm", F(lumen.spiral.bu_start)),
      num("lumen.bu_end_mm", F(lumen.spiral.bu_end)),
      num("lumen.bl_start_mm", F(lumen.spiral.bl_start)),
      num("lumen.bl_end_mm", F(lumen.spiral.bl_end)),
      integer("lumen.stations", F(lumen.spiral.stations)),

      num("rod.length_mm", F(rod.length)),
      integer("rod.nodes", F(rod.elements)),  // stored as elements; see below
      num("rod.youngs_mpa", F(rod.youngs)),
      num("rod.poisson", F(rod.poisson)),
      num("rod.base_diameter_mm", F(rod.base_diameter)),
      num("rod.tip_diameter_mm", F(rod.tip_diameter)),
      integer("rod.substeps", F(rod.substeps)),
      text("rod.viscosity_mode", F(viscosity_mode)),
      num("rod.viscosity_mpa_s", F(viscosity)),

      num("contact.mu", F(sim.contact.law.mu)),
      num("contact.eps", F(sim.contact.law.eps)),
      num("contact.eps_t", F(sim.contact.law.eps_t)),
      integer("contact.stations", F(sim.contact.stations)),
      boolean("contact.refine_distal", F(sim.contact.refine_distal)),
      num("contact.activation_gap_mm", F(sim.contact.activation_gap)),
      boolean("contact.pivot_station", F(sim.contact.pivot_station)),

      num("solver.tol", F(sim.newton.tol)),
      integer("solver.max_iter", F(sim.newton.max_iter)),
      num("solver.min_step", F(sim.newton.min_step)),
      integer("solver.max_splits", F(sim.newton.max_splits)),

      num("protocol.v_par", F(protocol.v_par)),
      num("protocol.step_mm", F(step_mm)),
      num("protocol.max_depth_mm", F(protocol.max_depth)),
      integer("protocol.max_steps", F(protocol.max_steps)),
      integer("protocol.stall_window", F(protocol.stall_window)),
      num("protocol.stall_ratio", F(protocol.stall_ratio)),
      boolean("protocol.stop_on_stall", F(protocol.stop_on_stall)),

      num("planner.k", F(planner.k)),
      num("planner.eps_dls", F(planner.eps_dls)),
      num("planner.omega_max", F(planner.omega_max)),
      num("planner.cone_half_angle_deg", F(cone_half_angle_deg)),
      integer("planner.cone_count", F(cone_count)),
      integer("planner.cone_rings", F(cone_rings)),
      boolean("planner.cone_jitter", F(cone_jitter)),

      integer("run.seed", F(seed)),
      text("run.output_dir", F(output_dir)),
      integer("run.jobs", F(jobs)),
  };
  return table;
}

#undef F

const Entry& find_entry(const std::string& key) {
  for (const auto& e : entries()) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

SimSettings RunConfig::settings() const {
  SimSettings s = sim;
  s.dt = step_mm / protocol.v_par;
  s.viscosity = viscosity_mode == "fixed" ? viscosity : 0.0;
  return s;
}

void RunConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0.0)) throw ConfigError(std::string("key '") + key + "' must be positive");
  };
  const std::string& k = lumen.kind;
  if (k != "synthetic" && k != "lumen" && k != "stations" && k != "mesh") {
    throw ConfigError("key 'lumen.source' must be synthetic, lumen, stations or mesh");
  }
  if (k != "synthetic" && lumen.path.empty()) throw ConfigError("key 'lumen.path' is required for source " + k);
  if (k == "mesh" && lumen.centerline.empty()) throw ConfigError("key 'lumen.centerline' is required for source mesh");
  if (lumen.samples < 2) throw ConfigError("key 'lumen.samples' must be at least 2");
  positive("lumen.exponent", lumen.exponent);
  positive("lumen.turns", lumen.spiral.turns);
  positive("lumen.start_radius_mm", lumen.spiral.start_radius);
  positive("lumen.end_radius_mm", lumen.spiral.end_radius);
  positive("lumen.a_start_mm", lumen.spiral.a_start);
  positive("lumen.a_end_mm", lumen.spiral.a_end);
  positive("lumen.bu_start_mm", lumen.spiral.bu_start);
  positive("lumen.bu_end_mm", lumen.spiral.bu_end);
  positive("lumen.bl_start_mm", lumen.spiral.bl_start);
  positive("lumen.bl_end_mm", lumen.spiral.bl_end);
  if (lumen.spiral.stations < 2) throw ConfigError("key 'lumen.stations' must be at least 2");

  positive("rod.length_mm", rod.length);
  if (rod.elements < 1) throw ConfigError("key 'rod.nodes' must be at least 2");
  positive("rod.youngs_mpa", rod.youngs);
  if (!(rod.poisson > -1.0 && rod.poisson < 0.5)) throw ConfigError("key 'rod.poisson' must lie in (-1, 0.5)");
  positive("rod.base_diameter_mm", rod.base_diameter);
  positive("rod.tip_diameter_mm", rod.tip_diameter);
  if (rod.substeps < 1) throw ConfigError("key 'rod.substeps' must be at least 1");
  if (viscosity_mode != "auto" && viscosity_mode != "fixed") {
    throw ConfigError("key 'rod.viscosity_mode' must be auto or fixed");
  }
  if (viscosity_mode == "fixed") positive("rod.viscosity_mpa_s", viscosity);

  if (!(sim.contact.law.mu >= 0.0)) throw ConfigError("key 'contact.mu' must be non-negative");
  positive("contact.eps", sim.contact.law.eps);
  positive("contact.eps_t", sim.contact.law.eps_t);
  if (sim.contact.stations < 2) throw ConfigError("key 'contact.stations' must be at least 2");
  positive("contact.activation_gap_mm", sim.contact.activation_gap);
  positive("solver.tol", sim.newton.tol);
  if (sim.newton.max_iter < 1) throw ConfigError("key 'solver.max_iter' must be at least 1");
  positive("solver.min_step", sim.newton.min_step);
  if (sim.newton.max_splits < 1) throw ConfigError("key 'solver.max_splits' must be at least 1");

  positive("protocol.v_par", protocol.v_par);
  positive("protocol.step_mm", step_mm);
  if (protocol.max_steps < 1) throw ConfigError("key 'protocol.max_steps' must be at least 1");
  if (protocol.stall_window < 1) throw ConfigError("key 'protocol.stall_window' must be at least 1");
  positive("protocol.stall_ratio", protocol.stall_ratio);

  if (!(planner.k >= 0.0)) throw ConfigError("key 'planner.k' must be non-negative");
  positive("planner.eps_dls", planner.eps_dls);
  positive("planner.omega_max", planner.omega_max);
  if (!(cone_half_angle_deg >= 0.0 && cone_half_angle_deg < 90.0)) {
    throw ConfigError("key 'planner.cone_half_angle_deg' must lie in [0, 90)");
  }
  if (cone_count < 1) throw ConfigError("key 'planner.cone_count' must be at least 1");
  if (cone_rings < 1) throw ConfigError("key 'planner.cone_rings' must be at least 1");
  if (jobs < 1) throw ConfigError("key 'run.jobs' must be at least 1");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const Entry& e = find_entry(key);
  if (key == "rod.nodes") {
    // Nodes are counted including the base, elements = nodes - 1.
    const long long nodes = parse_int(key, value);
    if (nodes < 2) throw ConfigError("key 'rod.nodes' must be at least 2");
    cfg.rod.elements = static_cast<int>(nodes - 1);
    return;
  }
  e.set(cfg, value);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not section.key=value");
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Drop comments outside quoted strings.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key '" + key + "' outside a section");
    try {
      apply_setting(cfg, section + "." + key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, buf.str(), path);
  return cfg;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

std::string to_config_text(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& e : entries()) {
    const auto dot = e.key.find('.');
    const std::string sec = e.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    const std::string value = e.key == "rod.nodes" ? std::to_string(cfg.rod.elements + 1) : e.get(cfg);
    out += e.key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

}  // namespace cisim::cli
