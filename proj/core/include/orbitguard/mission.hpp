#pragma once

#include "orbitguard/constraints.hpp"
#include "orbitguard/policies.hpp"
#include "orbitguard/rta.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace orbitguard {

enum class TaskKind { Dock, Inspect };
std::string_view task_kind_name(TaskKind k);
std::optional<TaskKind> task_kind_from_name(std::string_view name);

struct TaskSpec {
    TaskKind kind = TaskKind::Dock;
    int point_count = 0;        // inspection points; 0 for docking
    double chief_radius = 10.0; // m, sphere carrying the points
    double dock_radius = 1.0;   // m
    double dock_speed = 0.2;    // m/s
};

struct InspectionPoint {
    Vec3 normal = Vec3::UnitX();
    bool inspected = false;
    std::optional<double> inspected_at;
};

/// Fibonacci-sphere normals; deterministic for a given count. Throws ConfigError for count < 1.
std::vector<InspectionPoint> generate_points(int count);

/// A point flips to inspected (permanently) when the deputy is above its local horizon on the
/// chief sphere and the sun lights it. Positions inside the chief see nothing.
/// Returns how many points flipped.
int update_inspection(std::vector<InspectionPoint>& points, const Vec3& deputy_position, const Vec3& sun,
                      double chief_radius, double t);

std::vector<Vec3> remaining_normals(const std::vector<InspectionPoint>& points);

struct DeputySpec {
    std::string name;
    FullState initial;
    PolicySpec policy;
};

struct Scenario {
    std::string name = "scenario";
    VehicleParams vehicle;
    Catalog catalog;
    PipelineConfig rta;
    std::vector<DeputySpec> deputies;
    double duration = 0.0;      // s
    double dt = 0.1;            // s, integration step
    double filter_rate = 10.0;  // Hz
    std::uint64_t seed = 1;
    TaskSpec task;
    bool pairwise_separation = true;  // deputies see each other in SafeSeparation

    double control_period() const { return 1.0 / filter_rate; }
    int substeps() const;
    long frame_count() const;
    /// Throws ScenarioError naming the offending field.
    void validate() const;
};

/// Seed actually handed to a deputy's random policy: depends on the scenario seed and the
/// policy's own seed, never on the deputy's position in the list.
std::uint64_t effective_seed(std::uint64_t scenario_seed, std::uint64_t policy_seed);

}  // namespace orbitguard
