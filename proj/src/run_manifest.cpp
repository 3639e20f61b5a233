#include "cbx/run_manifest.hpp"

#include "cbx/error.hpp"
#include "cbx/hash.hpp"
#include "cbx/util.hpp"

#include <algorithm>

namespace cbx {

using nlohmann::json;
using nlohmann::ordered_json;

void RunManifest::add_input(const std::filesystem::path& path) {
  if (std::filesystem::is_regular_file(path)) inputs[path.string()] = sha256_file(path);
}

ordered_json RunManifest::to_json() const {
  ordered_json j;
  j["command"] = command;
  j["tool_version"] = tool_version;
  j["config"] = config;
  ordered_json s = ordered_json::object();
  for (const auto& [k, v] : seeds) s[k] = v;
  j["seeds"] = s;
  ordered_json in = ordered_json::object();
  for (const auto& [k, v] : inputs) in[k] = v;
  j["inputs"] = in;
  j["outputs"] = outputs;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.command = j.at("command").get<std::string>();
    m.tool_version = j.value("tool_version", "");
    m.config = ordered_json::parse(j.value("config", json::object()).dump());
    const json seeds = j.value("seeds", json::object());
    for (const auto& [k, v] : seeds.items()) m.seeds[k] = v.get<std::uint64_t>();
    const json inputs = j.value("inputs", json::object());
    for (const auto& [k, v] : inputs.items()) m.inputs[k] = v.get<std::string>();
    m.outputs = j.value("outputs", std::vector<std::string>{});
  } catch (const json::exception& e) {
    throw SchemaError(std::string("run manifest: ") + e.what());
  }
  return m;
}

std::filesystem::path RunManifest::write(const std::filesystem::path& dir) const {
  std::string name = command;
  std::replace(name.begin(), name.end(), ' ', '-');
  const auto path = dir / ("run-" + name + ".json");
  write_text_file(path, to_json().dump(2) + "\n");
  return path;
}

}  // namespace cbx
