#pragma once

#include "orbitguard/constraints.hpp"
#include "orbitguard/policies.hpp"
#include "orbitguard/rta.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace orbitguard {

/// Insertion-ordered JSON so every serialized record has a stable field order.
using Json = nlohmann::ordered_json;

/// Throws ScenarioError(path) when j is not an object or has keys outside allowed.
void require_keys(const Json& j, const std::string& path, std::initializer_list<std::string_view> allowed);

double number_field(const Json& j, std::string_view key, const std::string& path, double fallback);
double required_number(const Json& j, std::string_view key, const std::string& path);
std::string string_field(const Json& j, std::string_view key, const std::string& path, const std::string& fallback);
bool bool_field(const Json& j, std::string_view key, const std::string& path, bool fallback);

/// Object form used in scenario files.
Json state_to_json(const FullState& s);
FullState state_from_json(const Json& j, const std::string& path);

/// Flat 17-slot array used in telemetry; null entries decode as NaN.
Json state_to_array(const FullState& s);
FullState state_from_array(const Json& j, const std::string& path);

/// [Fx, Fy, Fz, tx, ty, tz].
Json command_to_json(const ControlCommand& c);
ControlCommand command_from_json(const Json& j, const std::string& path);

Json vehicle_to_json(const VehicleParams& v);
/// Fields absent from j keep their defaults.
VehicleParams vehicle_from_json(const Json& j, const std::string& path);

Json constraint_to_json(const ConstraintSpec& spec);
Json catalog_to_json(const Catalog& c);

/// Partial edit {enabled?, priority?, params?: {name: value}, kappa?: [k0, k1]}.
/// Range and name errors name the field; the spec is unchanged on error.
void apply_constraint_edit(ConstraintSpec& spec, const Json& edit, const std::string& path);
/// {ConstraintName: edit, ...}; duplicate enabled priorities are reported against the later
/// constraint's priority field. The catalog is unchanged on error.
void apply_catalog_edits(Catalog& catalog, const Json& edits, const std::string& path);
/// Field-path form of Catalog::validate for duplicate enabled ranks.
void check_unique_priorities(const Catalog& catalog, const std::string& path);

/// Constraint parameter schema: per constraint id, display name, mode, relative degree, help,
/// and parameters (name, unit, min, max, default, description).
Json catalog_schema_json();

/// Scenario form of a policy. weights paths are resolved against base_dir; the scripted
/// speed envelope defaults to the catalog's DynamicSpeed parameters.
Json policy_to_json(const PolicySpec& p);
PolicySpec policy_from_json(const Json& j, const std::string& path, const std::filesystem::path& base_dir,
                            const Catalog& catalog);

/// {ConstraintName: value | null} in catalog order.
Json margins_to_json(const MarginMap& m);
MarginMap margins_from_json(const Json& j, const std::string& path);

Json backups_to_json(const PipelineConfig& cfg);
PipelineConfig backups_from_json(const Json& j, const std::string& path);

}  // namespace orbitguard
