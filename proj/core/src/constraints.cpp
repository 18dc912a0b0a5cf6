#include "orbitguard/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace orbitguard {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// clang-format off
constexpr ParamSchema kSafeSeparationParams[] = {
    {"chief_radius", "m", 0.1, 1000.0, 15.0, "keep-out radius around the chief"},
    {"deputy_radius", "m", 0.1, 1000.0, 10.0, "pairwise keep-out radius between deputies"},
};
constexpr ParamSchema kDynamicSpeedParams[] = {
    {"speed_offset", "m/s", 1e-3, 10.0, 0.2, "speed allowed at the chief"},
    {"speed_slope", "1/s", 0.0, 1.0, 0.002054, "additional speed allowed per meter of range"},
};
constexpr ParamSchema kKeepInParams[] = {
    {"max_range", "m", 1.0, 1.0e6, 1000.0, "maximum range from the chief"},
};
constexpr ParamSchema kPassiveSafetyParams[] = {
    {"chief_radius", "m", 0.1, 1000.0, 15.0, "keep-out radius the free drift must respect"},
    {"horizon_periods", "orbits", 0.0, 10.0, 1.0, "free-drift look-ahead"},
    {"sample_interval", "s", 0.1, 600.0, 10.0, "spacing of drift samples"},
};
constexpr ParamSchema kAxialVelocityParams[] = {
    {"max_speed", "m/s", 1e-3, 100.0, 1.0, "limit on each Hill-frame velocity component"},
};
constexpr ParamSchema kAttitudeExclusionParams[] = {
    {"half_angle", "deg", 0.1, 179.0, 30.0, "minimum angle between sensor boresight and the sun"},
};
constexpr ParamSchema kCommunicationParams[] = {
    {"half_angle", "deg", 0.1, 180.0, 45.0, "maximum angle between antenna and the ground direction"},
};
constexpr ParamSchema kTemperatureParams[] = {
    {"min", "K", 0.0, 1000.0, 230.0, "lower temperature limit"},
    {"max", "K", 0.0, 1000.0, 330.0, "upper temperature limit"},
};
constexpr ParamSchema kBatteryParams[] = {
    {"min_charge", "fraction", 0.0, 0.99, 0.2, "minimum state of charge"},
};
constexpr ParamSchema kAngularVelocityParams[] = {
    {"max_rate", "rad/s", 1e-4, 10.0, 0.1, "limit on each body rate component"},
};
constexpr ParamSchema kFuelLimitParams[] = {
    {"budget", "m/s", 1e-3, 1.0e4, 20.0, "cumulative delta-v budget"},
    {"hysteresis", "fraction", 0.0, 0.99, 0.05, "fraction of the budget that must be recovered before release"},
};

const ConstraintInfo kInfo[kConstraintCount] = {
    {ConstraintId::SafeSeparation, "Safe separation", EnforcementMode::Barrier, 2, kSafeSeparationParams,
     "Keeps the deputy outside a sphere around the chief and other deputies."},
    {ConstraintId::DynamicSpeed, "Dynamic speed", EnforcementMode::Barrier, 1, kDynamicSpeedParams,
     "Speed limit that shrinks linearly as the deputy approaches the chief."},
    {ConstraintId::KeepIn, "Keep-in zone", EnforcementMode::Barrier, 2, kKeepInParams,
     "Keeps the deputy within a maximum range of the chief."},
    {ConstraintId::PassiveSafety, "Passive safety", EnforcementMode::Switching, 0, kPassiveSafetyParams,
     "Unpowered drift from the current state must not reach the chief."},
    {ConstraintId::AxialVelocity, "Axial velocity", EnforcementMode::Barrier, 1, kAxialVelocityParams,
     "Bounds each velocity component in Hill's frame."},
    {ConstraintId::AttitudeExclusion, "Sun exclusion", EnforcementMode::Barrier, 2, kAttitudeExclusionParams,
     "Keeps the sensor boresight away from the sun."},
    {ConstraintId::Communication, "Communication", EnforcementMode::Barrier, 2, kCommunicationParams,
     "Keeps the antenna pointed toward the ground direction (-x)."},
    {ConstraintId::Temperature, "Temperature", EnforcementMode::Barrier, 1, kTemperatureParams,
     "Keeps the bus temperature inside its band."},
    {ConstraintId::Battery, "Battery", EnforcementMode::Barrier, 1, kBatteryParams,
     "Keeps the battery above its minimum charge."},
    {ConstraintId::AngularVelocity, "Angular velocity", EnforcementMode::Barrier, 1, kAngularVelocityParams,
     "Bounds each body rate component."},
    {ConstraintId::FuelLimit, "Fuel limit", EnforcementMode::Switching, 0, kFuelLimitParams,
     "Stops thrusting once the delta-v budget is spent."},
};
// clang-format on

constexpr std::string_view kNames[kConstraintCount] = {
    "SafeSeparation", "DynamicSpeed", "KeepIn",      "PassiveSafety",   "AxialVelocity", "AttitudeExclusion",
    "Communication",  "Temperature",  "Battery",     "AngularVelocity", "FuelLimit",
};

Vec3 unit_or_zero(const Vec3& v) {
    const double n = v.norm();
    return n > 0.0 ? Vec3(v / n) : Vec3::Zero();
}

double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Vec3 position(const FullState& s) { return s.translational.position; }
Vec3 velocity(const FullState& s) { return s.translational.velocity; }

// Free-drift CW acceleration of a neighbor; the filter has no knowledge of its control.
Vec3 drift_acceleration(const TranslationalState& ts, double n) {
    const Vec3& r = ts.position;
    const Vec3& v = ts.velocity;
    return {3.0 * n * n * r.x() + 2.0 * n * v.y(), -2.0 * n * v.x(), -n * n * r.z()};
}

void require_id(ConstraintId id) {
    if (index_of(id) >= kConstraintCount) throw CatalogError("unknown constraint id");
}

void require_barrier(ConstraintId id) {
    require_id(id);
    if (kInfo[index_of(id)].mode == EnforcementMode::Switching)
        throw ModeError(std::string(constraint_name(id)) + " is a switching monitor and has no barrier gradient");
}

// Geometry shared by the two pointing constraints. The body axis maps to Hill's frame through
// R(q); the target is the sun (exclusion) or the fixed ground direction -x (communication).
// sign = -1 keeps the axis away from the target, +1 keeps it near.
struct Pointing {
    Vec3 body_axis;
    Vec3 target;
    Vec3 target_rate;
    Vec3 target_accel;
    double sign;
    double half_angle;
    double braking_decel;
};

Pointing pointing_geometry(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                           const VehicleParams& params) {
    Pointing p{};
    const double n = params.mean_motion;
    if (id == ConstraintId::AttitudeExclusion) {
        p.body_axis = params.boresight_axis.normalized();
        p.target = sun_direction(state.time, n);
        p.target_rate = sun_direction_rate(state.time, n);
        p.target_accel = -n * n * p.target;
        p.sign = -1.0;
        p.half_angle = deg_to_rad(spec.params[param::attitude_exclusion::kHalfAngleDeg]);
    } else {
        p.body_axis = params.antenna_axis.normalized();
        p.target = Vec3(-1.0, 0.0, 0.0);
        p.target_rate = Vec3::Zero();
        p.target_accel = Vec3::Zero();
        p.sign = 1.0;
        p.half_angle = deg_to_rad(spec.params[param::communication::kHalfAngleDeg]);
    }
    const double max_inertia = Eigen::SelfAdjointEigenSolver<Mat3>(params.inertia).eigenvalues().maxCoeff();
    p.braking_decel = kPointingBrakingFraction * params.max_torque / max_inertia * std::sin(p.half_angle);
    return p;
}

// Angle margin h = sign * (half_angle - angle(axis, target)). The axis is normalized so the
// angle ignores the quaternion scale.
ConstraintEval pointing_margin(const Pointing& p, const FullState& state) {
    const Vec4& q = state.attitude.quaternion;
    const Vec3 axis = rotation_matrix(q) * p.body_axis;
    const double len = axis.norm();
    const double c = std::clamp(axis.dot(p.target) / len, -1.0, 1.0);
    ConstraintEval e;
    e.relative_degree = 2;
    e.h = p.sign * (p.half_angle - std::acos(c));
    const double s2 = 1.0 - c * c;
    if (s2 > 1e-14) {
        const double dh_dc = p.sign / std::sqrt(s2);
        const auto J = rotation_jacobian(q, p.body_axis);
        const Vec4 dc_dq = (J.transpose() * p.target) / len - (c / (len * len)) * (J.transpose() * axis);
        e.gradient.segment<4>(slot::kQuaternion) = dh_dc * dc_dq;
        e.gradient(slot::kTime) = dh_dc * axis.dot(p.target_rate) / len;
    }
    return e;
}

// Cosine surrogate h = sign * (cos(angle) - cos(half_angle)); same zero set, smooth everywhere.
ConstraintEval pointing_cosine(const Pointing& p, const FullState& state) {
    const Vec4& q = state.attitude.quaternion;
    const Vec3 axis = rotation_matrix(q) * p.body_axis;
    ConstraintEval e;
    e.relative_degree = 2;
    e.h = p.sign * (axis.dot(p.target) - std::cos(p.half_angle));
    e.gradient.segment<4>(slot::kQuaternion) = p.sign * (rotation_jacobian(q, p.body_axis).transpose() * p.target);
    e.gradient(slot::kTime) = p.sign * axis.dot(p.target_rate);
    return e;
}

// Braking form psi = h - max(0, a T - h_dot)^2 / (2 a), with a a fraction of the worst-case
// angular deceleration the torque box provides at the cone edge (in cosine units) and T a fixed
// lead time. psi >= 0 means the axis can still be stopped before the cone is reached; the lead
// keeps torque authority on the row while h_dot hovers around zero.
double pointing_rate(const Pointing& p, const FullState& state) {
    const Mat3 R = rotation_matrix(state.attitude.quaternion);
    const Vec3 axis_rate = R * state.attitude.body_rate.cross(p.body_axis);
    return p.sign * (axis_rate.dot(p.target) + (R * p.body_axis).dot(p.target_rate));
}

ConstraintEval pointing_psi(const Pointing& p, const FullState& state) {
    const Vec4& q = state.attitude.quaternion;
    const Vec3& w = state.attitude.body_rate;
    const Mat3 R = rotation_matrix(q);
    const Vec3 axis = R * p.body_axis;
    const Vec3 spun = w.cross(p.body_axis);
    const Vec3 axis_rate = R * spun;
    const double h = p.sign * (axis.dot(p.target) - std::cos(p.half_angle));
    const double h_dot = p.sign * (axis_rate.dot(p.target) + axis.dot(p.target_rate));

    const auto J_axis = rotation_jacobian(q, p.body_axis);
    const auto J_spun = rotation_jacobian(q, spun);

    StateVec grad_h = StateVec::Zero();
    grad_h.segment<4>(slot::kQuaternion) = p.sign * (J_axis.transpose() * p.target);
    grad_h(slot::kTime) = p.sign * axis.dot(p.target_rate);

    ConstraintEval e;
    e.relative_degree = 2;
    const double approach = std::max(0.0, p.braking_decel * kPointingBrakingLead - h_dot);
    e.h = h - approach * approach / (2.0 * p.braking_decel);
    e.gradient = grad_h;
    if (approach > 0.0) {
        StateVec grad_h_dot = StateVec::Zero();
        grad_h_dot.segment<4>(slot::kQuaternion) =
            p.sign * (J_spun.transpose() * p.target + J_axis.transpose() * p.target_rate);
        grad_h_dot.segment<3>(slot::kBodyRate) = p.sign * p.body_axis.cross(R.transpose() * p.target);
        grad_h_dot(slot::kTime) = p.sign * (axis_rate.dot(p.target_rate) + axis.dot(p.target_accel));
        e.gradient += (approach / p.braking_decel) * grad_h_dot;
    }
    return e;
}

// Radial rows h = sign * (|d| - radius) with d = r - center; sign +1 keeps out, -1 keeps in.
ConstraintEval radial_margin(const Vec3& d, double radius, double sign, const Vec3& center_velocity) {
    ConstraintEval e;
    e.relative_degree = 2;
    e.h = sign * (d.norm() - radius);
    const Vec3 dir = unit_or_zero(d);
    e.gradient.segment<3>(slot::kPosition) = sign * dir;
    e.gradient(slot::kTime) = -sign * dir.dot(center_velocity);
    return e;
}

ConstraintEval radial_psi(const Vec3& d, const Vec3& w, double radius, double sign, double k1,
                          const Vec3& center_velocity, const Vec3& center_accel) {
    ConstraintEval e;
    e.relative_degree = 2;
    const double dist = d.norm();
    const Vec3 dir = unit_or_zero(d);
    const double closing = dir.dot(w);
    e.h = sign * closing + kappa(sign * (dist - radius), k1);
    Vec3 grad_r = Vec3::Zero();
    if (dist > 0.0) grad_r = sign * (w - closing * dir) / dist + k1 * sign * dir;
    const Vec3 grad_v = sign * dir;
    e.gradient.segment<3>(slot::kPosition) = grad_r;
    e.gradient.segment<3>(slot::kVelocity) = grad_v;
    e.gradient(slot::kTime) = -grad_r.dot(center_velocity) - grad_v.dot(center_accel);
    return e;
}

ConstraintRows evaluate_rows(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                             const EvalContext& ctx, bool smooth_pointing) {
    require_barrier(id);
    ConstraintRows out;
    const auto& P = spec.params;
    switch (id) {
        case ConstraintId::SafeSeparation: {
            out.push(radial_margin(position(state), P[param::safe_separation::kChiefRadius], 1.0, Vec3::Zero()));
            for (const auto& other : ctx.neighbors) {
                if (out.count() == kMaxRowsPerConstraint) break;
                out.push(radial_margin(position(state) - other.position, P[param::safe_separation::kDeputyRadius],
                                       1.0, other.velocity));
            }
            break;
        }
        case ConstraintId::DynamicSpeed: {
            const double nu0 = P[param::dynamic_speed::kSpeedOffset];
            const double nu1 = P[param::dynamic_speed::kSpeedSlope];
            ConstraintEval e;
            e.h = nu0 + nu1 * position(state).norm() - velocity(state).norm();
            e.gradient.segment<3>(slot::kPosition) = nu1 * unit_or_zero(position(state));
            e.gradient.segment<3>(slot::kVelocity) = -unit_or_zero(velocity(state));
            out.push(e);
            break;
        }
        case ConstraintId::KeepIn:
            out.push(radial_margin(position(state), P[param::keep_in::kMaxRange], -1.0, Vec3::Zero()));
            break;
        case ConstraintId::AxialVelocity: {
            const double vmax = P[param::axial_velocity::kMaxSpeed];
            for (int i = 0; i < 3; ++i) {
                ConstraintEval e;
                const double vi = velocity(state)(i);
                e.h = vmax - std::abs(vi);
                e.gradient(slot::kVelocity + i) = -sign_or_zero(vi);
                out.push(e);
            }
            break;
        }
        case ConstraintId::AttitudeExclusion:
        case ConstraintId::Communication: {
            const Pointing p = pointing_geometry(id, state, spec, ctx.params);
            out.push(smooth_pointing ? pointing_cosine(p, state) : pointing_margin(p, state));
            break;
        }
        case ConstraintId::Temperature: {
            ConstraintEval hot;
            hot.h = P[param::temperature::kMax] - state.resources.temperature;
            hot.gradient(slot::kTemperature) = -1.0;
            ConstraintEval cold;
            cold.h = state.resources.temperature - P[param::temperature::kMin];
            cold.gradient(slot::kTemperature) = 1.0;
            out.push(hot);
            out.push(cold);
            break;
        }
        case ConstraintId::Battery: {
            ConstraintEval e;
            e.h = state.resources.battery - P[param::battery::kMinCharge];
            e.gradient(slot::kBattery) = 1.0;
            out.push(e);
            break;
        }
        case ConstraintId::AngularVelocity: {
            const double wmax = P[param::angular_velocity::kMaxRate];
            for (int i = 0; i < 3; ++i) {
                ConstraintEval e;
                const double wi = state.attitude.body_rate(i);
                e.h = wmax - std::abs(wi);
                e.gradient(slot::kBodyRate + i) = -sign_or_zero(wi);
                out.push(e);
            }
            break;
        }
        default:
            throw CatalogError("unknown constraint id");
    }
    return out;
}

}  // namespace

std::string_view constraint_name(ConstraintId id) {
    require_id(id);
    return kNames[index_of(id)];
}

std::optional<ConstraintId> constraint_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kConstraintCount; ++i)
        if (kNames[i] == name) return kAllConstraints[i];
    return std::nullopt;
}

std::string_view mode_name(EnforcementMode mode) {
    return mode == EnforcementMode::Barrier ? "Barrier" : "Switching";
}

const ConstraintInfo& constraint_info(ConstraintId id) {
    require_id(id);
    return kInfo[index_of(id)];
}

int relative_degree(ConstraintId id) { return constraint_info(id).relative_degree; }

double kappa(double h, double strength) { return strength * h; }

void ConstraintRows::push(const ConstraintEval& e) {
    if (count() >= kMaxRowsPerConstraint) throw CatalogError("too many rows for one constraint");
    rows.push_back(e);
}

double ConstraintRows::min_h() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& r : view()) m = std::min(m, r.h);
    return m;
}

double ConstraintSpec::param(std::string_view name) const {
    const auto& schema = constraint_info(id).params;
    for (std::size_t i = 0; i < schema.size(); ++i)
        if (schema[i].name == name) return params[i];
    throw CatalogError("unknown parameter '" + std::string(name) + "' for " + std::string(constraint_name(id)));
}

void ConstraintSpec::set_param(std::string_view name, double value) {
    const auto& schema = constraint_info(id).params;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (schema[i].name != name) continue;
        if (!std::isfinite(value) || value < schema[i].min || value > schema[i].max)
            throw CatalogError("parameter '" + std::string(name) + "' of " + std::string(constraint_name(id)) +
                               " out of range [" + std::to_string(schema[i].min) + ", " +
                               std::to_string(schema[i].max) + "]");
        params[i] = value;
        return;
    }
    throw CatalogError("unknown parameter '" + std::string(name) + "' for " + std::string(constraint_name(id)));
}

double ConstraintSpec::scale() const {
    switch (id) {
        case ConstraintId::SafeSeparation: return params[param::safe_separation::kChiefRadius];
        case ConstraintId::DynamicSpeed: return params[param::dynamic_speed::kSpeedOffset];
        case ConstraintId::KeepIn: return params[param::keep_in::kMaxRange];
        case ConstraintId::PassiveSafety: return params[param::passive_safety::kChiefRadius];
        case ConstraintId::AxialVelocity: return params[param::axial_velocity::kMaxSpeed];
        case ConstraintId::AttitudeExclusion: return deg_to_rad(params[param::attitude_exclusion::kHalfAngleDeg]);
        case ConstraintId::Communication: return deg_to_rad(params[param::communication::kHalfAngleDeg]);
        case ConstraintId::Temperature:
            return std::max(params[param::temperature::kMax] - params[param::temperature::kMin], 1e-9);
        case ConstraintId::Battery: return 1.0;
        case ConstraintId::AngularVelocity: return params[param::angular_velocity::kMaxRate];
        case ConstraintId::FuelLimit: return params[param::fuel_limit::kBudget];
    }
    return 1.0;
}

Catalog::Catalog() {
    for (std::size_t i = 0; i < kConstraintCount; ++i) {
        ConstraintSpec& s = specs_[i];
        const ConstraintInfo& info = kInfo[i];
        s.id = info.id;
        s.enabled = true;
        s.priority = static_cast<int>(i) + 1;
        s.mode = info.mode;
        s.params.fill(kNan);
        for (std::size_t p = 0; p < info.params.size(); ++p) s.params[p] = info.params[p].default_value;
        s.kappa_strength = info.relative_degree == 2 ? std::array<double, 2>{0.05, 0.1}
                                                     : std::array<double, 2>{0.1, 0.1};
    }
    specs_[index_of(ConstraintId::Communication)].enabled = false;
}

int Catalog::max_enabled_rank() const {
    int m = 0;
    for (const auto& s : specs_)
        if (s.enabled) m = std::max(m, s.priority);
    return m;
}

void Catalog::validate() const {
    std::set<int> ranks;
    for (const auto& s : specs_) {
        const ConstraintInfo& info = constraint_info(s.id);
        const std::string name(info.display_name);
        if (s.mode != info.mode) throw CatalogError(name + ": mode must be " + std::string(mode_name(info.mode)));
        if (s.priority < 1) throw CatalogError(name + ": priority must be >= 1");
        if (!(s.kappa_strength[0] > 0.0) || !(s.kappa_strength[1] > 0.0) || !std::isfinite(s.kappa_strength[0]) ||
            !std::isfinite(s.kappa_strength[1]))
            throw CatalogError(name + ": kappa strength must be positive");
        for (std::size_t p = 0; p < info.params.size(); ++p) {
            const double v = s.params[p];
            if (!std::isfinite(v) || v < info.params[p].min || v > info.params[p].max)
                throw CatalogError(name + ": parameter '" + std::string(info.params[p].name) + "' out of range");
        }
        if (s.id == ConstraintId::Temperature &&
            !(s.params[param::temperature::kMin] < s.params[param::temperature::kMax]))
            throw CatalogError(name + ": min must be below max");
        if (s.enabled && !ranks.insert(s.priority).second)
            throw CatalogError("duplicate priority " + std::to_string(s.priority) + " among enabled constraints");
    }
}

bool Catalog::operator==(const Catalog& other) const {
    for (std::size_t i = 0; i < kConstraintCount; ++i) {
        const auto& a = specs_[i];
        const auto& b = other.specs_[i];
        if (a.enabled != b.enabled || a.priority != b.priority || a.mode != b.mode ||
            a.kappa_strength != b.kappa_strength)
            return false;
        for (std::size_t p = 0; p < kMaxParams; ++p) {
            const bool both_nan = std::isnan(a.params[p]) && std::isnan(b.params[p]);
            if (!both_nan && a.params[p] != b.params[p]) return false;
        }
    }
    return true;
}

Catalog default_catalog(const VehicleParams& params) {
    Catalog c;
    c[ConstraintId::DynamicSpeed].params[param::dynamic_speed::kSpeedSlope] = 2.0 * params.mean_motion;
    return c;
}

ConstraintRows evaluate(ConstraintId id, const FullState& state, const ConstraintSpec& spec, const EvalContext& ctx) {
    return evaluate_rows(id, state, spec, ctx, false);
}

ConstraintRows barrier_functions(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                                 const EvalContext& ctx) {
    return evaluate_rows(id, state, spec, ctx, true);
}

ConstraintRows extend_second_order(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                                   const EvalContext& ctx) {
    require_barrier(id);
    if (relative_degree(id) != 2)
        throw ModeError(std::string(constraint_name(id)) + " has relative degree 1");
    const double k1 = spec.kappa_strength[0];
    const double n = ctx.params.mean_motion;
    ConstraintRows out;
    switch (id) {
        case ConstraintId::SafeSeparation: {
            const double rc = spec.params[param::safe_separation::kChiefRadius];
            out.push(radial_psi(position(state), velocity(state), rc, 1.0, k1, Vec3::Zero(), Vec3::Zero()));
            const double rd = spec.params[param::safe_separation::kDeputyRadius];
            for (const auto& other : ctx.neighbors) {
                if (out.count() == kMaxRowsPerConstraint) break;
                out.push(radial_psi(position(state) - other.position, velocity(state) - other.velocity, rd, 1.0, k1,
                                    other.velocity, drift_acceleration(other, n)));
            }
            break;
        }
        case ConstraintId::KeepIn:
            out.push(radial_psi(position(state), velocity(state), spec.params[param::keep_in::kMaxRange], -1.0, k1,
                                Vec3::Zero(), Vec3::Zero()));
            break;
        case ConstraintId::AttitudeExclusion:
        case ConstraintId::Communication:
            out.push(pointing_psi(pointing_geometry(id, state, spec, ctx.params), state));
            break;
        default:
            throw ModeError(std::string(constraint_name(id)) + " has relative degree 1");
    }
    return out;
}

double passive_safety_margin(const TranslationalState& ts, double mean_motion, double keep_out_radius,
                             double horizon, double sample_interval) {
    if (!(sample_interval > 0.0)) throw ConfigError("sample interval must be positive");
    Vec6 x;
    x << ts.position, ts.velocity;
    if (!all_finite(x)) throw DomainError("non-finite translational state");
    if (horizon <= 0.0) return ts.position.norm() - keep_out_radius;

    const int steps = static_cast<int>(std::ceil(horizon / sample_interval - 1e-9));
    const double dt = horizon / steps;
    const Mat6 phi = cw_stm(mean_motion, dt);
    const double n = mean_motion;
    const double curvature = dt * dt / 8.0;

    double best = ts.position.norm() - keep_out_radius;
    Vec3 acc0 = drift_acceleration(ts, n);
    for (int k = 0; k < steps; ++k) {
        const Vec6 x1 = phi * x;
        const Vec3 r0 = x.head<3>();
        const Vec3 r1 = x1.head<3>();
        const TranslationalState next{r1, x1.tail<3>()};
        const Vec3 acc1 = drift_acceleration(next, n);

        const Vec3 chord = r1 - r0;
        const double len2 = chord.squaredNorm();
        const double lam = len2 > 0.0 ? std::clamp(-r0.dot(chord) / len2, 0.0, 1.0) : 0.0;
        const double chord_dist = (r0 + lam * chord).norm();

        // Bound on |r''| over the segment: endpoint accelerations plus their worst-case change.
        const double amax = std::max(acc0.norm(), acc1.norm());
        const double vmax = std::max(x.tail<3>().norm(), x1.tail<3>().norm());
        const double accel_bound = amax + dt * (3.0 * n * n * vmax + 2.0 * n * amax);

        best = std::min(best, chord_dist - curvature * accel_bound - keep_out_radius);
        x = x1;
        acc0 = acc1;
    }
    return best;
}

double margin(ConstraintId id, const FullState& state, const ConstraintSpec& spec, const EvalContext& ctx) {
    require_id(id);
    if (id == ConstraintId::PassiveSafety) {
        const double horizon = spec.params[param::passive_safety::kHorizonPeriods] * ctx.params.orbital_period();
        return passive_safety_margin(state.translational, ctx.params.mean_motion,
                                     spec.params[param::passive_safety::kChiefRadius], horizon,
                                     spec.params[param::passive_safety::kSampleInterval]);
    }
    if (id == ConstraintId::FuelLimit) return spec.params[param::fuel_limit::kBudget] - state.resources.fuel_used;
    return evaluate(id, state, spec, ctx).min_h();
}

namespace {

using RowFn = ConstraintRows (*)(ConstraintId, const FullState&, const ConstraintSpec&, const EvalContext&);

// Kink arguments of |.| rows: a finite difference straddling the kink is meaningless.
bool near_kink(ConstraintId id, const FullState& s, double eps) {
    auto close = [eps](double v) { return v != 0.0 && std::abs(v) < 4.0 * eps; };
    if (id == ConstraintId::AxialVelocity)
        return close(s.translational.velocity.x()) || close(s.translational.velocity.y()) ||
               close(s.translational.velocity.z());
    if (id == ConstraintId::AngularVelocity)
        return close(s.attitude.body_rate.x()) || close(s.attitude.body_rate.y()) || close(s.attitude.body_rate.z());
    if (id == ConstraintId::DynamicSpeed) return close(s.translational.velocity.norm());
    return false;
}

// Central differences with one Richardson extrapolation step, so truncation error is fourth
// order in the step.
double compare_rows(RowFn fn, ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                    const EvalContext& ctx, double eps) {
    const ConstraintRows base = fn(id, state, spec, ctx);
    const StateVec x0 = state.to_vector();
    auto central = [&](int j, double step, std::array<double, kMaxRowsPerConstraint>& out) {
        StateVec xp = x0;
        StateVec xm = x0;
        xp(j) += step;
        xm(j) -= step;
        const ConstraintRows rp = fn(id, FullState::from_vector(xp), spec, ctx);
        const ConstraintRows rm = fn(id, FullState::from_vector(xm), spec, ctx);
        for (int r = 0; r < base.count(); ++r) out[r] = (rp.rows[r].h - rm.rows[r].h) / (xp(j) - xm(j));
    };
    std::array<StateVec, kMaxRowsPerConstraint> fd{};
    for (int j = 0; j < kStateDim; ++j) {
        std::array<double, kMaxRowsPerConstraint> coarse{};
        std::array<double, kMaxRowsPerConstraint> fine{};
        central(j, eps, coarse);
        central(j, 0.5 * eps, fine);
        for (int r = 0; r < base.count(); ++r) fd[r](j) = (4.0 * fine[r] - coarse[r]) / 3.0;
    }
    double worst = 0.0;
    for (int r = 0; r < base.count(); ++r) {
        const StateVec& analytic = base.rows[r].gradient;
        const double denom = std::max({analytic.lpNorm<Eigen::Infinity>(), fd[r].lpNorm<Eigen::Infinity>(), 1e-12});
        worst = std::max(worst, (analytic - fd[r]).lpNorm<Eigen::Infinity>() / denom);
    }
    return worst;
}

}  // namespace

GradientCheckResult gradient_check(ConstraintId id, const FullState& state, const ConstraintSpec& spec,
                                   const EvalContext& ctx, double eps) {
    require_barrier(id);
    GradientCheckResult res;
    if (!(eps > 0.0)) throw ConfigError("finite-difference step must be positive");
    const EvalContext solo{ctx.params, {}};

    const double range = state.translational.position.norm();
    if ((id == ConstraintId::SafeSeparation || id == ConstraintId::KeepIn || id == ConstraintId::DynamicSpeed) &&
        range < 10.0 * eps) {
        res.skipped = true;
        res.diagnostic = "range singularity at the chief";
        return res;
    }
    if (near_kink(id, state, eps)) {
        res.skipped = true;
        res.diagnostic = "state within the step of an absolute-value kink";
        return res;
    }
    if (id == ConstraintId::AttitudeExclusion || id == ConstraintId::Communication) {
        const Pointing p = pointing_geometry(id, state, spec, ctx.params);
        const Vec3 axis = axis_in_hill(state, p.body_axis);
        const double c = axis.dot(p.target) / axis.norm();
        if (1.0 - c * c < 1e4 * eps * eps) {
            res.skipped = true;
            res.diagnostic = "pointing axis aligned with the target; angle not differentiable";
            return res;
        }
        // The braking term is C1 only; its gradient jumps where the lead crosses h_dot.
        const double switch_gap = p.braking_decel * kPointingBrakingLead - pointing_rate(p, state);
        if (std::abs(switch_gap) < 8.0 * eps) {
            res.skipped = true;
            res.diagnostic = "state within the step of the braking-term switch";
            return res;
        }
    }

    res.max_relative_error = compare_rows(&evaluate, id, state, spec, solo, eps);
    if (relative_degree(id) == 2) {
        res.max_relative_error =
            std::max(res.max_relative_error, compare_rows(&barrier_functions, id, state, spec, solo, eps));
        res.max_relative_error =
            std::max(res.max_relative_error, compare_rows(&extend_second_order, id, state, spec, solo, eps));
    }
    return res;
}

}  // namespace orbitguard
