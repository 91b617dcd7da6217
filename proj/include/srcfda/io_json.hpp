#pragma once

#include "srcfda/baselines.hpp"
#include "srcfda/emfit.hpp"
#include "srcfda/model.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace srcfda {

using Json = nlohmann::ordered_json;

Json to_json(const FitResult& fit);
Json to_json(const HardClustering& h, const std::string& method,
             const std::vector<std::string>& curve_ids, int K);
Json to_json(const Selection& selection);
Json to_json(const EmConfig& config);

/// Overrides the fields present in `j`; unknown keys raise ConfigError.
void apply_json(const Json& j, EmConfig& config);
void apply_json(const Json& j, KmeansFConfig& config);
void apply_json(const Json& j, KmeansSConfig& config);

/// Minimal JSON-schema check (type, required, properties, items, enum, minimum,
/// additionalProperties=false). Returns one message per violation.
std::vector<std::string> schema_errors(const Json& value, const Json& schema,
                                       const std::string& path = "$");

}  // namespace srcfda
