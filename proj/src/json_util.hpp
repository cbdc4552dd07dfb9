#pragma once

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace gesturebench::detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                                std::string_view section) {
  if (!j.is_object()) {
    throw std::invalid_argument("section '" + std::string(section) + "' must be a JSON object");
  }
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) {
      throw std::invalid_argument("unknown key '" + key + "' in section '" +
                                  std::string(section) + "'");
    }
  }
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument(std::string("invalid value for key '") + key + "'");
  }
}

}  // namespace gesturebench::detail
