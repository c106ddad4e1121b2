#include "urbanflux/json_io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace urbanflux {

void to_json(Json& j, const GeoPoint& p) { j = Json{{"lon", p.lon}, {"lat", p.lat}}; }

void from_json(const Json& j, GeoPoint& p) {
  p.lon = require<double>(j, "lon", "point");
  p.lat = require<double>(j, "lat", "point");
}

void to_json(Json& j, const GridSpec& g) {
  j = Json{{"min", g.min}, {"max", g.max}, {"step_m", g.step_m}, {"buffer_radius_m", g.buffer_radius_m}};
}

void from_json(const Json& j, GridSpec& g) {
  g.min = require<GeoPoint>(j, "min", "grid");
  g.max = require<GeoPoint>(j, "max", "grid");
  g.step_m = optional_field<double>(j, "step_m", 200.0, "grid");
  g.buffer_radius_m = optional_field<double>(j, "buffer_radius_m", 1000.0, "grid");
}

void to_json(Json& j, const NormalizationInfo& n) {
  j = Json{{"density_max", n.density_max}, {"vht_max", n.vht_max}, {"days", n.days}};
}

void from_json(const Json& j, NormalizationInfo& n) {
  n.density_max = require<double>(j, "density_max", "norm_info");
  n.vht_max = require<double>(j, "vht_max", "norm_info");
  n.days = require<int>(j, "days", "norm_info");
}

void to_json(Json& j, const Provenance& p) {
  j = Json{{"config_hash", p.config_hash}, {"seed", p.seed}};
}

void from_json(const Json& j, Provenance& p) {
  p.config_hash = optional_field<std::string>(j, "config_hash", "", "provenance");
  p.seed = optional_field<std::uint64_t>(j, "seed", 0, "provenance");
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

double round_significant(double v, int digits) {
  if (!std::isfinite(v) || v == 0.0) return v;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return std::strtod(buf, nullptr);
}

}  // namespace urbanflux
