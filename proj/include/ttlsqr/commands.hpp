#pragma once

#include <functional>
#include <string>
#include <vector>

namespace ttlsqr {

/// Library version string.
const char* version();

struct CommandOutput {
  std::vector<std::string> files;
  std::vector<std::string> warnings;
  /// Resolved configuration as written to manifest.json.
  std::string manifest;
};

using LogSink = std::function<void(const std::string&)>;

/// Default configuration document of a command ("solve", "bench-pde", "classify").
std::string default_config(const std::string& command);

/// Runs a command on a JSON configuration. Missing keys take the defaults;
/// unknown keys are rejected. Writes result files and manifest.json into the
/// configured output directory.
CommandOutput run_command(const std::string& command, const std::string& config_json,
                          const LogSink& log = {});

} // namespace ttlsqr
