#pragma once

#include "orbitguard/dynamics.hpp"

#include <boost/container/static_vector.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace orbitguard {

/// The safety constraint set, in catalog order.
enum class ConstraintId : std::uint8_t {
    SafeSeparation,
    DynamicSpeed,
    KeepIn,
    PassiveSafety,
    AxialVelocity,
    AttitudeExclusion,
    Communication,
    Temperature,
    Battery,
    AngularVelocity,
    FuelLimit,
};

inline constexpr std::size_t kConstraintCount = 11;

inline constexpr std::array<ConstraintId, kConstraintCount> kAllConstraints = {
    ConstraintId::SafeSeparation,  ConstraintId::DynamicSpeed,      ConstraintId::KeepIn,
    ConstraintId::PassiveSafety,   ConstraintId::AxialVelocity,     ConstraintId::AttitudeExclusion,
    ConstraintId::Communication,   ConstraintId::Temperature,       ConstraintId::Battery,
    ConstraintId::AngularVelocity, ConstraintId::FuelLimit,
};

inline constexpr std::size_t index_of(ConstraintId id) { return static_cast<std::size_t>(id); }

std::string_view constraint_name(ConstraintId id);
std::optional<ConstraintId> constraint_from_name(std::string_view name);

enum class EnforcementMode { Barrier, Switching };
std::string_view mode_name(EnforcementMode mode);

/// Operator-facing description of one named scalar parameter.
struct ParamSchema {
    std::string_view name;
    std::string_view unit;
    double min;
    double max;
    double default_value;
    std::string_view description;
};

struct ConstraintInfo {
    ConstraintId id;
    std::string_view display_name;
    EnforcementMode mode;
    int relative_degree;  // 0 for switching monitors
    std::span<const ParamSchema> params;
    std::string_view help;
};

const ConstraintInfo& constraint_info(ConstraintId id);

// Parameter slots, in schema order.
namespace param {
namespace safe_separation { inline constexpr int kChiefRadius = 0, kDeputyRadius = 1; }
namespace dynamic_speed { inline constexpr int kSpeedOffset = 0, kSpeedSlope = 1; }
namespace keep_in { inline constexpr int kMaxRange = 0; }
namespace passive_safety { inline constexpr int kChiefRadius = 0, kHorizonPeriods = 1, kSampleInterval = 2; }
namespace axial_velocity { inline constexpr int kMaxSpeed = 0; }
namespace attitude_exclusion { inline constexpr int kHalfAngleDeg = 0; }
namespace communication { inline constexpr int kHalfAngleDeg = 0; }
namespace temperature { inline constexpr int kMin = 0, kMax = 1; }
namespace battery { inline constexpr int kMinCharge = 0; }
namespace angular_velocity { inline constexpr int kMaxRate = 0; }
namespace fuel_limit { inline constexpr int kBudget = 0, kHysteresis = 1; }
}  // namespace param

inline constexpr std::size_t kMaxParams = 4;

struct ConstraintSpec {
    ConstraintId id = ConstraintId::SafeSeparation;
    bool enabled = true;
    int priority = 1;  // 1 = highest
    EnforcementMode mode = EnforcementMode::Barrier;
    std::array<double, kMaxParams> params{};
    // [0] strengthens h (or psi's inner term for degree-2 rows), [1] the outer row for degree 2.
    std::array<double, 2> kappa_strength{0.1, 0.1};

    double param(std::string_view name) const;
    /// Throws CatalogError for unknown names or values outside the schema range.
    void set_param(std::string_view name, double value);
    /// Characteristic size used to normalize margins.
    double scale() const;
};

/// One constraint row: margin h >= 0 when satisfied, and its gradient over the flat state.
struct ConstraintEval {
    double h = 0.0;
    StateVec gradient = StateVec::Zero();
    int relative_degree = 1;
};

inline constexpr int kMaxRowsPerConstraint = 8;

/// Small fixed-capacity row list; multi-row constraints (axial limits, temperature band,
/// pairwise separation) return several entries.
struct ConstraintRows {
    boost::container::static_vector<ConstraintEval, kMaxRowsPerConstraint> rows;

    void push(const ConstraintEval& e);
    int count() const { return static_cast<int>(rows.size()); }
    std::span<const ConstraintEval> view() const { return {rows.data(), rows.size()}; }
    double min_h() const;
};

/// Everything evaluation needs beyond the deputy state. The sun is derived from state.time.
struct EvalContext {
    const VehicleParams& params;
    std::span<const TranslationalState> neighbors = {};  // other deputies (pairwise separation)
};

class Catalog {
  public:
    Catalog();

    const ConstraintSpec& operator[](ConstraintId id) const { return specs_[index_of(id)]; }
    ConstraintSpec& operator[](ConstraintId id) { return specs_[index_of(id)]; }

    auto begin() const { return specs_.begin(); }
    auto end() const { return specs_.end(); }

    bool enabled(ConstraintId id) const { return specs_[index_of(id)].enabled; }
    int max_enabled_rank() const;
    /// Throws CatalogError on duplicate enabled priorities, non-positive kappa, wrong modes or
    /// out-of-range parameters.
    void validate() const;

    bool operator==(const Catalog& other) const;

  private:
    std::array<ConstraintSpec, kConstraintCount> specs_;
};

/// 11 specs with repo defaults; all enabled except Communication.
Catalog default_catalog(const VehicleParams& params);

int relative_degree(ConstraintId id);

/// Class-kappa strengthening, linear: strength * h.
double kappa(double h, double strength);

/// Margin rows with analytic gradients. Switching-mode constraints throw ModeError.
ConstraintRows evaluate(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                        const EvalContext& ctx);

/// Smooth barrier functions used to build filter rows. Identical to evaluate() except for the
/// pointing constraints, whose rows use the cosine of the angle so they stay differentiable
/// at the anti-aligned pole. Same sign and zero set as the margins.
ConstraintRows barrier_functions(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                                 const EvalContext& ctx);

/// Pointing rows brake at this fraction of the smallest angular acceleration the torque box
/// guarantees, scaled by sin(half_angle) into cosine units, with a fixed lead time.
inline constexpr double kPointingBrakingFraction = 0.25;
inline constexpr double kPointingBrakingLead = 1.0;  // s

/// psi and its gradient for relative-degree-2 constraints. Radial rows use
/// psi = h_dot + kappa(h, strength[0]); pointing rows use the braking form
/// psi = h - max(0, a T - h_dot)^2 / (2 a) so the torque limit is respected.
ConstraintRows extend_second_order(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                                   const EvalContext& ctx);

/// Instantaneous scalar margin (min over rows) for any constraint, including switching monitors.
double margin(ConstraintId id, const FullState& state, const ConstraintSpec& spec, const EvalContext& ctx);
inline double normalized_margin(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                                const EvalContext& ctx) {
    return margin(id, state, spec, ctx) / spec.scale();
}

/// Closest approach margin of free drift over the horizon; sampled through the STM with a
/// curvature bound between samples so the result never overestimates the true minimum.
double passive_safety_margin(const TranslationalState& ts, double mean_motion, double keep_out_radius,
                             double horizon, double sample_interval);

struct GradientCheckResult {
    double max_relative_error = 0.0;
    bool skipped = false;
    std::string diagnostic;
};

/// Central finite differences of evaluate (and of extend_second_order for degree-2
/// constraints) against the analytic gradients.
GradientCheckResult gradient_check(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                                   const EvalContext& ctx, double eps);

}  // namespace orbitguard
