#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "canvoi/core/binary_io.hpp"
#include "canvoi/core/error.hpp"
#include "canvoi/core/json_fields.hpp"

namespace canvoi::cli {

enum class Precision { f32, f64 };

inline const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

// Flags shared by every subcommand.
struct CommonOptions {
  std::string command;
  std::filesystem::path config_path;  // empty: all defaults
  std::optional<std::uint64_t> seed;  // overrides the config's seed
  std::filesystem::path out = "out";
  Precision precision = Precision::f32;
};

inline nlohmann::json load_config_json(const std::filesystem::path& path) {
  if (path.empty()) return nlohmann::json::object();
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
  try {
    auto j = nlohmann::json::parse(io::read_text(path));
    if (!j.is_object()) throw ConfigError("config " + path.string() + " must hold a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

// Resolves a path from a config relative to the config file's directory.
inline std::filesystem::path resolve_input(const std::filesystem::path& config_path, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path q(p);
  if (q.is_absolute() || config_path.empty()) return q;
  return config_path.parent_path() / q;
}

inline void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string(what) + " path is not set");
  if (!std::filesystem::exists(p)) throw DataError(std::string(what) + " " + p.string() + " does not exist");
}

// Snapshot written next to every run's outputs.
inline void write_resolved_config(const CommonOptions& opt, const nlohmann::json& config) {
  nlohmann::json j = {{"command", opt.command}, {"precision", precision_name(opt.precision)}, {"config", config}};
  std::filesystem::create_directories(opt.out);
  io::write_text_atomic(opt.out / "resolved_config.json", j.dump(2) + "\n");
}

}  // namespace canvoi::cli
