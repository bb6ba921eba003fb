#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbf/common.hpp"
#include "cbf/gradient_design.hpp"
#include "cbf/pinn.hpp"
#include "cbf/relative_degree.hpp"
#include "cbf/safe_sets.hpp"
#include "cbf/target_field.hpp"

namespace cbf {

using Json = nlohmann::json;

inline constexpr const char* kSchemaTag = "pinn-cbf/v1";
inline constexpr const char* kToolVersion = "cbf-forge 0.1.0";

// Canonical serialization: nlohmann keeps object keys sorted and emits
// shortest round-trip doubles, so equal payloads produce equal bytes.
std::string canonical_dump(const Json& j);
std::string content_hash(const Json& payload);

// Envelope: { schema_tag, kind, payload, hash, tool_version, seeds }.
// Returns the payload hash.
std::string save_artifact(const std::string& kind, const Json& payload,
                          const std::vector<std::uint64_t>& seeds,
                          const std::filesystem::path& path);

// Validates the schema tag and the payload hash; throws SchemaMismatchError,
// HashMismatchError or MalformedArtifactError.
Json load_artifact(const std::filesystem::path& path, const std::string& expect_kind);
std::string artifact_hash(const std::filesystem::path& path);

// matrix/vector payload helpers (rows are points)
Json matrix_to_json(const Mat& m);
Mat matrix_from_json(const Json& j);
Json vector_to_json(const Vec& v);
Vec vector_from_json(const Json& j);

Json to_json(const Box& box);
Box box_from_json(const Json& j);

Json to_json(const SafeSetSpec& spec);
SafeSetSpec safe_set_spec_from_json(const Json& j);

Json to_json(const BoundarySample& sample);
BoundarySample boundary_sample_from_json(const Json& j);

Json to_json(const BoundaryPartition& partition);
BoundaryPartition boundary_partition_from_json(const Json& j);

Json to_json(const TargetGradientField& field);
TargetGradientField target_field_from_json(const Json& j);

Json to_json(const DesignedGradient& design);
DesignedGradient designed_gradient_from_json(const Json& j);

Json to_json(const PinnModel& model);
PinnModel pinn_model_from_json(const Json& j);

Json to_json(const InactivityReport& report);

}  // namespace cbf
