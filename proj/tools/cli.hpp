// Command-line front end. Exposed as a library so tests can drive it
// in-process.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace tlsim::cli {

enum ExitCode { kOk = 0, kRuntimeError = 1, kConfigError = 2, kGuardError = 3, kValidationFailed = 4 };

/// Full default configuration; every accepted key appears here.
nlohmann::json default_config();

/// Configuration patch of a named preset. Throws ConfigError for unknown names.
nlohmann::json preset(const std::string& name);

/// Subcommand a preset belongs to.
std::string preset_command(const std::string& name);

/// Merges `patch` into `base` in place. Every key of the patch must exist
/// in the base with a compatible type; violations throw ConfigError naming
/// the JSON path.
void merge_config(nlohmann::json& base, const nlohmann::json& patch, const std::string& path = "");

/// Parses a config document; syntax errors report line and column.
nlohmann::json parse_config(const std::string& text, const std::string& origin);

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace tlsim::cli
