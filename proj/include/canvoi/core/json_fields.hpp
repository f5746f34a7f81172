#pragma once

#include <initializer_list>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "canvoi/core/error.hpp"

namespace canvoi::jsonf {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(std::string("unknown key '") + k + "' in " + what);
}

// Leaves `out` alone when the key is absent.
template <class V>
void read_opt(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

template <class V>
V read_req(const nlohmann::json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw ConfigError(std::string("missing key '") + key + "' in " + what);
  V out{};
  read_opt(j, key, out);
  return out;
}

}  // namespace canvoi::jsonf
