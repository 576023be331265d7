#pragma once

// Flat key=value run configuration files and overrides.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "msnode/trainer.hpp"

namespace msnode::cli {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Reads `key = value` lines; '#' starts a comment.
KeyValues read_config_file(const std::filesystem::path& path);
// Splits "key=value".
std::pair<std::string, std::string> split_assignment(const std::string& s);

// Builds a config: a `system` key (the last one given) selects the per-system
// defaults, then every other key is applied in order. Unknown keys and
// malformed values throw UsageError.
RunConfig build_config(const KeyValues& kv, const std::string& default_system = "lotka_volterra");

// Canonical key=value text for a config; build_config(parse(echo)) reproduces it.
std::string config_echo(const RunConfig& cfg);

const std::vector<std::string>& config_keys();

}  // namespace msnode::cli
