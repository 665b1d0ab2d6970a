#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rasgd/experiments.hpp"

namespace rasgd {

/// Invalid or unreadable configuration. `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line = 0);
  int line() const { return line_; }

 private:
  int line_;
};

/// Dotted key path and YAML value, e.g. {"timing.model", "exponential"}.
using Override = std::pair<std::string, std::string>;

/// Parses and validates a YAML experiment config. Overrides are applied to
/// the document before interpretation and recorded in `overrides`. Setting
/// "stepsize.gamma" or "stepsize.alpha" replaces the whole stepsize entry.
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>",
                              const std::vector<Override>& overrides = {});

/// Reads a file; a missing file raises ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<Override>& overrides = {});

std::vector<std::string> preset_names();
std::optional<std::string> preset_yaml(std::string_view name);

/// A preset name or a config file path.
ExperimentConfig resolve_config(std::string_view name_or_path, const std::vector<Override>& overrides = {});

}  // namespace rasgd
