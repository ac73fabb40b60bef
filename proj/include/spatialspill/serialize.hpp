#pragma once

#include <json.hpp>
#include <string>

#include "spatialspill/esda.hpp"
#include "spatialspill/estimators.hpp"

namespace spatialspill {

/// fit.json payload: every fit field plus the spec echo and the weights
/// fingerprint, with stable key order.
nlohmann::ordered_json fit_to_json(const FitResult& fit);
FitResult fit_from_json(const nlohmann::json& j);

void write_fit_json(const FitResult& fit, const std::string& path);
FitResult read_fit_json(const std::string& path);

/// LISA layer: a feature collection attaching {local_i, pseudo_p, quadrant,
/// significant} per region; geometry polygons are embedded when provided.
nlohmann::ordered_json lisa_to_feature_collection(const LisaResult& lisa,
                                                  const std::vector<std::string>& region_ids,
                                                  const GeometrySet* geometry);

std::string fingerprint_hex(uint64_t fingerprint);

}  // namespace spatialspill
