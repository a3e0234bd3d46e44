#pragma once

// Run configuration for the command-line tool. Files use a flat TOML subset:
// [section] headers and `key = value` lines with numbers, booleans or quoted
// strings. Every key is also reachable as `--set section.key=value`.

#include <cstdint>
#include <string>
#include <vector>

#include "cisim/dynamics.hpp"
#include "cisim/lumen.hpp"
#include "cisim/planner.hpp"
#include "cisim/rod.hpp"

namespace cisim::cli {

struct LumenSource {
  std::string kind = "synthetic";  // synthetic | lumen | stations | mesh
  std::string path;                // lumen JSON, stations JSON or STL
  std::string centerline;          // polyline for kind = mesh
  int samples = 40;
  double exponent = 2.0;
  SpiralParams spiral;
};

struct RunConfig {
  LumenSource lumen;
  RodParams rod;
  std::string viscosity_mode = "auto";  // auto (0.1 dt G) or fixed
  double viscosity = 0.0;               // MPa s, used when fixed
  SimSettings sim;
  InsertionProtocol protocol;
  double step_mm = 0.05;
  PlannerSettings planner;
  double cone_half_angle_deg = 10.0;
  int cone_count = 8;
  int cone_rings = 1;
  bool cone_jitter = false;  // random azimuth phase drawn from the seed
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  int jobs = 1;

  /// Settings with dt = step_mm / v_par and the viscosity mode applied.
  SimSettings settings() const;
  /// Throws ConfigError naming the first offending key.
  void validate() const;
};

/// Applies one `section.key = value` assignment. Throws ConfigError for an
/// unknown key or a value of the wrong type.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

/// Parses `section.key=value`.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Parses config text; `origin` prefixes error messages.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::string& path);

/// Every accepted `section.key`, in declaration order.
std::vector<std::string> known_keys();

/// The configuration as config text that parses back to the same values.
std::string to_config_text(const RunConfig& cfg);

}  // namespace cisim::cli
