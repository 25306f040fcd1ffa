#pragma once

// Subcommands of the geopot tool. Each run writes its artifacts plus
// manifest.json into the output directory, or nothing at all on failure.

#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "geopot/cli/config.hpp"
#include "geopot/error.hpp"

namespace geopot::cli {

enum class Command { Fit, Simulate, Predict, Bootstrap, Total, CovarDist };

std::optional<Command> parse_command(std::string_view name);
const char* to_string(Command command) noexcept;

/// Process exit status per failure class:
/// 2 configuration, 3 input data, 4 numerical, 5 anything else.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitInput = 3,
  kExitNumerical = 4,
  kExitInternal = 5,
};

int exit_code_for(ErrorCode code) noexcept;

struct RunReport {
  std::vector<std::string> outputs;  // file names inside config.out, manifest last
  std::vector<std::string> warnings;
};

/// Validates the config and runs the command. Throws geopot::Error; any
/// file already written by this run is removed before the exception leaves.
RunReport run(Command command, const RunConfig& config);

/// run() with failures mapped to an exit status and a message on `err`.
int run_and_report(Command command, const RunConfig& config, std::ostream& err);

}  // namespace geopot::cli
