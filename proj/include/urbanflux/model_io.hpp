#pragma once

#include <filesystem>
#include <memory>

#include "urbanflux/baselines.hpp"
#include "urbanflux/json_io.hpp"
#include "urbanflux/nets.hpp"
#include "urbanflux/regressor.hpp"

namespace urbanflux {

/// Model files share one envelope: format_version, kind ("T", "D", "rf" or
/// "svr"), target, norm_info, provenance, plus algorithm-specific fields.
Json forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const Json& j, const std::string& context);
Json svr_to_json(const SvrModel& model);
SvrModel svr_from_json(const Json& j, const std::string& context);

/// Writes any supported model; ConfigError for unknown implementations.
void save_regressor(const std::filesystem::path& path, const Regressor& model);

/// Loads a model file of any supported kind.
std::unique_ptr<Regressor> load_regressor(const std::filesystem::path& path);

/// Provenance of a loaded model, whatever its kind.
Provenance provenance_of(const Regressor& model);

}  // namespace urbanflux
