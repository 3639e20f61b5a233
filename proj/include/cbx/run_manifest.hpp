#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace cbx {

inline constexpr const char* kToolVersion = "0.3.0";

// Record of one CLI invocation. Holds no wall-clock data, so re-running the
// same command on the same inputs writes the same file.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;  // path -> sha256
  std::vector<std::string> outputs;
  std::string tool_version = kToolVersion;

  // Hashes a file (or, for a directory, nothing) and records it.
  void add_input(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  // Writes run-<command>.json into dir and returns its path.
  std::filesystem::path write(const std::filesystem::path& dir) const;
};

}  // namespace cbx
