#pragma once

#include "orbitguard/codec.hpp"
#include "orbitguard/mission.hpp"

#include <filesystem>
#include <string>

namespace orbitguard {

inline constexpr std::string_view kScenarioSchema = "orbitguard.scenario/1";

/// Parses and validates a scenario document. Relative weights paths resolve against base_dir.
/// Errors are ScenarioError with the offending field path.
Scenario parse_scenario(const Json& j, const std::filesystem::path& base_dir = ".");
Scenario parse_scenario_text(const std::string& text, const std::filesystem::path& base_dir = ".");
Scenario load_scenario(const std::string& path);

Json scenario_to_json(const Scenario& s);

}  // namespace orbitguard
