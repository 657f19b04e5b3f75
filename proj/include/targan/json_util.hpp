#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "targan/errors.hpp"

namespace targan {

/// Rejects keys of `j` outside `allowed`, naming the first offender.
inline void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                       const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw ConfigError("unknown config key '" + (context.empty() ? "" : context + ".") + key + "'");
  }
}

/// Reads j[key] into out when present; type errors name the key.
template <class T>
void read_key(const nlohmann::json& j, const std::string& key, T& out, const std::string& context) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("invalid value for config key '" + (context.empty() ? "" : context + ".") + key + "'");
  }
}

}  // namespace targan
