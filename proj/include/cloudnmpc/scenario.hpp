#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cloudnmpc/sim.hpp"

namespace cloudnmpc {

/// Configuration error tied to a dotted key path (e.g. "nmpc.lambda").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Complete scenario document with every key at its default for the given
/// model ("quadrotor" or "double_integrator").
nlohmann::json default_scenario_json(const std::string& model_type, int integrator_dim = 3);

/// Defaults merged under the user document, then `key=value` overrides applied.
/// Unknown override keys raise ConfigError listing the closest valid keys.
nlohmann::json resolve_scenario(const nlohmann::json& user, const std::vector<std::string>& overrides = {});

ScenarioConfig scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);

nlohmann::json load_json(const std::filesystem::path& path);
/// load_json + resolve_scenario + scenario_from_json. Relative obstacle files
/// resolve against the scenario's directory.
ScenarioConfig load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                             nlohmann::json* resolved = nullptr);

/// Dotted paths of every leaf (arrays count as leaves).
std::vector<std::string> flatten_keys(const nlohmann::json& doc);
std::vector<std::string> nearest_keys(const std::string& key, const std::vector<std::string>& keys,
                                      std::size_t count = 3);

}  // namespace cloudnmpc
