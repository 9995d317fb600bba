#pragma once

#include "peel/planner.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace peel {

using Json = nlohmann::json;

/// PlanConfig from JSON. Unknown keys are rejected (ParseError) so typos surface.
PlanConfig plan_config_from_json(const Json& j);
Json to_json(const PlanConfig& cfg);
PlanConfig load_plan_config(const std::filesystem::path& path);

AnchorSpec anchor_spec_from_json(const Json& j);
Json to_json(const AnchorSpec& a);
ResolutionDirective directive_from_json(const Json& j);
Json to_json(const ResolutionDirective& d);

Json to_json(const CurlRemovalReport& r);
Json to_json(const SingularityReport& r, const TetMesh& mesh);
Json to_json(const PlanMetrics& m);
Json to_json(const SpacingStats& s);
Json to_json(const DepthVariationReport& d);
Json to_json(const ComparisonReport& c);
Json to_json(const IsoSurface& layer); ///< positions flat array, indices flat array, iso-value

/// Plan directory: config.json, metrics.json, curl.json, singularity.json,
/// scalar.txt, layers/ (files + manifest). Output is byte-stable for equal plans.
void save_plan(const PeelingPlan& plan, const TetMesh& mesh, const std::filesystem::path& dir);

/// One value per line, shortest round-trip formatting.
void save_scalar(const ScalarField& g, const std::filesystem::path& path);
ScalarField load_scalar(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace peel
