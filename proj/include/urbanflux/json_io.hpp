#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "urbanflux/errors.hpp"
#include "urbanflux/features.hpp"
#include "urbanflux/geo_grid.hpp"

namespace urbanflux {

using Json = nlohmann::json;

void to_json(Json& j, const GeoPoint& p);
void from_json(const Json& j, GeoPoint& p);
void to_json(Json& j, const GridSpec& g);
void from_json(const Json& j, GridSpec& g);
void to_json(Json& j, const NormalizationInfo& n);
void from_json(const Json& j, NormalizationInfo& n);
void to_json(Json& j, const Provenance& p);
void from_json(const Json& j, Provenance& p);

/// Reads and parses a JSON file; IoError / ParseError on failure.
Json read_json_file(const std::filesystem::path& path);
/// Writes `j` pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);

/// Rounds to `digits` significant decimal digits (for stable API output).
double round_significant(double v, int digits);

/// Field access with a ConfigError naming the missing or mistyped key.
template <typename T>
T require(const Json& j, const char* key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(context + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(context + ": field '" + key + "' has the wrong type (" + e.what() + ")");
  }
}

template <typename T>
T optional_field(const Json& j, const char* key, T fallback, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return require<T>(j, key, context);
}

}  // namespace urbanflux
