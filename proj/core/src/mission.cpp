#include "orbitguard/mission.hpp"

#include "orbitguard/codec.hpp"

#include <array>
#include <set>

namespace orbitguard {

namespace {

constexpr std::array<std::string_view, 2> kTaskNames{"Dock", "Inspect"};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

std::string_view task_kind_name(TaskKind k) { return kTaskNames.at(static_cast<std::size_t>(k)); }

std::optional<TaskKind> task_kind_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kTaskNames.size(); ++i)
        if (kTaskNames[i] == name) return static_cast<TaskKind>(i);
    return std::nullopt;
}

std::vector<InspectionPoint> generate_points(int count) {
    if (count < 1) throw ConfigError("inspection point count must be >= 1");
    const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
    std::vector<InspectionPoint> points(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / count;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden_angle * i;
        points[static_cast<std::size_t>(i)].normal = Vec3(r * std::cos(phi), r * std::sin(phi), z).normalized();
    }
    return points;
}

int update_inspection(std::vector<InspectionPoint>& points, const Vec3& deputy_position, const Vec3& sun,
                      double chief_radius, double t) {
    if (!(deputy_position.norm() > chief_radius)) return 0;
    int flipped = 0;
    for (InspectionPoint& p : points) {
        if (p.inspected) continue;
        const Vec3 to_deputy = deputy_position - chief_radius * p.normal;
        if (p.normal.dot(to_deputy) > 0.0 && p.normal.dot(sun) > 0.0) {
            p.inspected = true;
            p.inspected_at = t;
            ++flipped;
        }
    }
    return flipped;
}

std::vector<Vec3> remaining_normals(const std::vector<InspectionPoint>& points) {
    std::vector<Vec3> out;
    for (const InspectionPoint& p : points)
        if (!p.inspected) out.push_back(p.normal);
    return out;
}

int Scenario::substeps() const {
    const double ratio = control_period() / dt;
    return static_cast<int>(std::llround(ratio));
}

long Scenario::frame_count() const {
    return static_cast<long>(std::floor(duration * filter_rate + 1e-9));
}

void Scenario::validate() const {
    if (!(duration > 0.0) || !std::isfinite(duration)) throw ScenarioError("duration", "must be positive");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ScenarioError("dt", "must be positive");
    if (!(filter_rate > 0.0) || !std::isfinite(filter_rate)) throw ScenarioError("filter_rate", "must be positive");
    if (filter_rate > 1.0 / dt * (1.0 + 1e-9)) throw ScenarioError("filter_rate", "must not exceed 1 / dt");
    const double ratio = control_period() / dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
        throw ScenarioError("dt", "control period must be a whole number of integration steps");
    if (frame_count() < 1) throw ScenarioError("duration", "shorter than one control period");
    try {
        vehicle.validate();
    } catch (const Error& e) {
        throw ScenarioError("vehicle", e.what());
    }
    check_unique_priorities(catalog, "catalog");
    try {
        catalog.validate();
    } catch (const CatalogError& e) {
        throw ScenarioError("catalog", e.what());
    }
    if (task.kind == TaskKind::Inspect && task.point_count < 1)
        throw ScenarioError("task.points", "inspection needs at least one point");
    if (task.kind == TaskKind::Dock && task.point_count != 0)
        throw ScenarioError("task.points", "docking scenarios carry no inspection points");
    if (!(task.chief_radius > 0.0)) throw ScenarioError("task.chief_radius", "must be positive");
    if (!(task.dock_radius > 0.0)) throw ScenarioError("task.dock_radius", "must be positive");
    if (!(task.dock_speed > 0.0)) throw ScenarioError("task.dock_speed", "must be positive");
    if (deputies.empty()) throw ScenarioError("deputies", "at least one deputy is required");

    std::set<std::string> names;
    for (std::size_t i = 0; i < deputies.size(); ++i) {
        const DeputySpec& d = deputies[i];
        const std::string path = "deputies[" + std::to_string(i) + "]";
        if (d.name.empty()) throw ScenarioError(path + ".name", "must not be empty");
        if (!names.insert(d.name).second) throw ScenarioError(path + ".name", "duplicate deputy name " + d.name);
        const FullState& s = d.initial;
        if (!s.to_vector().allFinite()) throw ScenarioError(path + ".state", "must be finite");
        if (std::abs(s.attitude.quaternion.norm() - 1.0) > 1e-9)
            throw ScenarioError(path + ".state.quaternion", "must be a unit quaternion");
        if (s.time != deputies.front().initial.time)
            throw ScenarioError(path + ".state.time", "all deputies must start at the same time");
        try {
            Policy probe(d.policy, vehicle);
        } catch (const Error& e) {
            throw ScenarioError(path + ".policy", e.what());
        }
    }
}

std::uint64_t effective_seed(std::uint64_t scenario_seed, std::uint64_t policy_seed) {
    return splitmix64(scenario_seed ^ splitmix64(policy_seed));
}

}  // namespace orbitguard
