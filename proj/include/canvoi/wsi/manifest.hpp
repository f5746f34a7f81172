#pragma once

#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canvoi/core/binary_io.hpp"
#include "canvoi/core/error.hpp"

namespace canvoi::wsi {

// One line of a dataset manifest (JSON Lines):
//   {"slide_id": "...", "path": "...", "mpp": 0.5, "group_id": "...", "label": 1}
// `label` may be absent or null. Relative paths resolve against the manifest's
// directory.
struct ManifestRecord {
  std::string slide_id;
  std::string path;
  double mpp = 0.5;
  std::string group_id;
  std::optional<int> label;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

inline nlohmann::json to_json(const ManifestRecord& r) {
  nlohmann::json j = {{"slide_id", r.slide_id}, {"path", r.path}, {"mpp", r.mpp}, {"group_id", r.group_id}};
  j["label"] = r.label ? nlohmann::json(*r.label) : nlohmann::json(nullptr);
  return j;
}

inline ManifestRecord manifest_record_from_json(const nlohmann::json& j) {
  static const char* known[] = {"slide_id", "path", "mpp", "group_id", "label"};
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw DataError("unknown manifest key '" + k + "'");
  }
  ManifestRecord r;
  r.slide_id = j.at("slide_id").get<std::string>();
  r.path = j.at("path").get<std::string>();
  r.mpp = j.at("mpp").get<double>();
  r.group_id = j.at("group_id").is_string() ? j.at("group_id").get<std::string>() : j.at("group_id").dump();
  if (j.contains("label") && !j.at("label").is_null()) r.label = j.at("label").get<int>();
  if (r.slide_id.empty()) throw DataError("manifest record with empty slide_id");
  if (!(r.mpp > 0.0)) throw DataError("slide " + r.slide_id + ": mpp must be positive");
  return r;
}

inline std::vector<ManifestRecord> parse_manifest(const std::string& text) {
  std::vector<ManifestRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(manifest_record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = i + 1; j < out.size(); ++j)
      if (out[i].slide_id == out[j].slide_id) throw DataError("duplicate slide_id " + out[i].slide_id);
  return out;
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_text(path));
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  io::write_text_atomic(path, text);
}

inline std::filesystem::path resolve_slide_path(const std::filesystem::path& manifest_path,
                                                const ManifestRecord& r) {
  const std::filesystem::path p(r.path);
  return p.is_absolute() ? p : manifest_path.parent_path() / p;
}

}  // namespace canvoi::wsi
