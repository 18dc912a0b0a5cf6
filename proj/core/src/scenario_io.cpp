#include "orbitguard/scenario_io.hpp"

#include <fstream>
#include <sstream>

namespace orbitguard {

namespace {

TaskSpec task_from(const Json& j, const std::string& path) {
    require_keys(j, path, {"kind", "points", "chief_radius", "dock_radius", "dock_speed"});
    TaskSpec t;
    const std::string kind = string_field(j, "kind", path, "Dock");
    const auto k = task_kind_from_name(kind);
    if (!k) throw ScenarioError(path + ".kind", "must be Dock or Inspect");
    t.kind = *k;
    if (t.kind == TaskKind::Inspect) t.point_count = 20;
    if (const auto it = j.find("points"); it != j.end()) {
        if (!it->is_number_integer() || it->get<long long>() < 0 || it->get<long long>() > 100000)
            throw ScenarioError(path + ".points", "expected a non-negative integer");
        t.point_count = it->get<int>();
    }
    t.chief_radius = number_field(j, "chief_radius", path, t.chief_radius);
    t.dock_radius = number_field(j, "dock_radius", path, t.dock_radius);
    t.dock_speed = number_field(j, "dock_speed", path, t.dock_speed);
    return t;
}

}  // namespace

Scenario parse_scenario(const Json& j, const std::filesystem::path& base_dir) {
    require_keys(j, "",
                 {"schema", "name", "seed", "duration", "duration_periods", "dt", "filter_rate", "task", "vehicle",
                  "catalog", "rta", "pairwise_separation", "deputies"});
    const std::string schema = string_field(j, "schema", "", "");
    if (schema != kScenarioSchema) throw ScenarioError("schema", "expected " + std::string(kScenarioSchema));

    Scenario s;
    s.name = string_field(j, "name", "", s.name);
    if (const auto it = j.find("seed"); it != j.end()) {
        if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0))
            throw ScenarioError("seed", "expected a non-negative integer");
        s.seed = it->get<std::uint64_t>();
    }
    if (const auto it = j.find("vehicle"); it != j.end()) s.vehicle = vehicle_from_json(*it, "vehicle");
    s.catalog = default_catalog(s.vehicle);
    if (const auto it = j.find("catalog"); it != j.end()) {
        if (!it->is_object()) throw ScenarioError("catalog", "expected an object keyed by constraint name");
        for (const auto& [name, edit] : it->items()) {
            const auto id = constraint_from_name(name);
            if (!id) throw ScenarioError("catalog." + name, "unknown constraint");
            apply_constraint_edit(s.catalog[*id], edit, "catalog." + name);
        }
    }
    if (const auto it = j.find("rta"); it != j.end()) s.rta = backups_from_json(*it, "rta");

    const bool has_duration = j.contains("duration"), has_periods = j.contains("duration_periods");
    if (has_duration == has_periods) throw ScenarioError("duration", "give exactly one of duration or duration_periods");
    s.duration = has_duration ? required_number(j, "duration", "")
                              : required_number(j, "duration_periods", "") * s.vehicle.orbital_period();
    s.dt = number_field(j, "dt", "", s.dt);
    s.filter_rate = number_field(j, "filter_rate", "", s.filter_rate);
    if (const auto it = j.find("task"); it != j.end()) s.task = task_from(*it, "task");
    s.pairwise_separation = bool_field(j, "pairwise_separation", "", s.pairwise_separation);

    const auto deps = j.find("deputies");
    if (deps == j.end() || !deps->is_array()) throw ScenarioError("deputies", "expected an array of deputies");
    for (std::size_t i = 0; i < deps->size(); ++i) {
        const Json& d = (*deps)[i];
        const std::string path = "deputies[" + std::to_string(i) + "]";
        require_keys(d, path, {"name", "state", "policy"});
        DeputySpec spec;
        spec.name = string_field(d, "name", path, "deputy-" + std::to_string(i));
        if (const auto st = d.find("state"); st != d.end()) spec.initial = state_from_json(*st, path + ".state");
        const auto pol = d.find("policy");
        if (pol == d.end()) throw ScenarioError(path + ".policy", "required field is missing");
        spec.policy = policy_from_json(*pol, path + ".policy", base_dir, s.catalog);
        s.deputies.push_back(std::move(spec));
    }
    s.validate();
    return s;
}

Scenario parse_scenario_text(const std::string& text, const std::filesystem::path& base_dir) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ScenarioError("", std::string("not valid JSON: ") + e.what());
    }
    return parse_scenario(j, base_dir);
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("", "cannot open scenario file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario_text(ss.str(), std::filesystem::path(path).parent_path());
}

Json scenario_to_json(const Scenario& s) {
    Json j;
    j["schema"] = std::string(kScenarioSchema);
    j["name"] = s.name;
    j["seed"] = s.seed;
    j["duration"] = s.duration;
    j["dt"] = s.dt;
    j["filter_rate"] = s.filter_rate;
    j["task"] = {{"kind", std::string(task_kind_name(s.task.kind))},
                 {"points", s.task.point_count},
                 {"chief_radius", s.task.chief_radius},
                 {"dock_radius", s.task.dock_radius},
                 {"dock_speed", s.task.dock_speed}};
    j["vehicle"] = vehicle_to_json(s.vehicle);
    j["catalog"] = catalog_to_json(s.catalog);
    j["rta"] = backups_to_json(s.rta);
    j["pairwise_separation"] = s.pairwise_separation;
    Json deps = Json::array();
    for (const DeputySpec& d : s.deputies)
        deps.push_back({{"name", d.name}, {"state", state_to_json(d.initial)}, {"policy", policy_to_json(d.policy)}});
    j["deputies"] = deps;
    return j;
}

}  // namespace orbitguard
