#pragma once

// Path-aware accessors for reading JSON documents. Every failure becomes a
// ParseError naming the offending location ("/objects/2/room").

#include <string>

#include "cape/error.hpp"
#include "json.hpp"

namespace cape::detail {

using nlohmann::json;

inline std::string child(const std::string& path, const std::string& key) {
  return path + "/" + key;
}

inline std::string child(const std::string& path, std::size_t index) {
  return path + "/" + std::to_string(index);
}

inline const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(child(path, key), "missing required field");
  return *it;
}

inline const json& require_array(const json& obj, const std::string& key,
                                 const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_array()) throw ParseError(child(path, key), "expected an array");
  return v;
}

template <typename T>
T as(const json& v, const std::string& path);

template <>
inline std::string as<std::string>(const json& v, const std::string& path) {
  if (!v.is_string()) throw ParseError(path, "expected a string");
  return v.get<std::string>();
}

template <>
inline bool as<bool>(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ParseError(path, "expected a boolean");
  return v.get<bool>();
}

template <>
inline int as<int>(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ParseError(path, "expected an integer");
  return v.get<int>();
}

template <>
inline long as<long>(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ParseError(path, "expected an integer");
  return v.get<long>();
}

template <>
inline double as<double>(const json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError(path, "expected a number");
  return v.get<double>();
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& path) {
  return as<T>(require(obj, key, path), child(path, key));
}

template <typename T>
T get_or(const json& obj, const std::string& key, const std::string& path, T fallback) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  return as<T>(*it, child(path, key));
}

inline json parse_document(std::string_view text, const std::string& what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("", what + " is not valid JSON: " + e.what());
  }
}

}  // namespace cape::detail
