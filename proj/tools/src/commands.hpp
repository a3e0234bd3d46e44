#pragma once

#include <iosfwd>
#include <string>
#include <utility>

#include "cisim/lumen.hpp"
#include "config.hpp"

namespace cisim::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2 };

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Builds the lumen named by the config source.
LumenModel build_lumen(const LumenSource& source);

/// "yaw[,pitch]" in degrees; a trailing "deg" on either value is accepted.
std::pair<double, double> parse_angles(const std::string& text);

/// Yaw and pitch (degrees) of `direction` relative to the lumen entrance,
/// the inverse of entrance_direction().
std::pair<double, double> entrance_angles(const LumenModel& lumen, const Vec3& direction);

}  // namespace cisim::cli
