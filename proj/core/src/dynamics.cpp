#include "orbitguard/dynamics.hpp"

#include <algorithm>

namespace orbitguard {

StateVec FullState::to_vector() const {
    StateVec x;
    x.segment<3>(slot::kPosition) = translational.position;
    x.segment<3>(slot::kVelocity) = translational.velocity;
    x.segment<4>(slot::kQuaternion) = attitude.quaternion;
    x.segment<3>(slot::kBodyRate) = attitude.body_rate;
    x[slot::kBattery] = resources.battery;
    x[slot::kTemperature] = resources.temperature;
    x[slot::kFuel] = resources.fuel_used;
    x[slot::kTime] = time;
    return x;
}

FullState FullState::from_vector(const StateVec& x) {
    FullState s;
    s.translational.position = x.segment<3>(slot::kPosition);
    s.translational.velocity = x.segment<3>(slot::kVelocity);
    s.attitude.quaternion = x.segment<4>(slot::kQuaternion);
    s.attitude.body_rate = x.segment<3>(slot::kBodyRate);
    s.resources.battery = x[slot::kBattery];
    s.resources.temperature = x[slot::kTemperature];
    s.resources.fuel_used = x[slot::kFuel];
    s.time = x[slot::kTime];
    return s;
}

ControlVec ControlCommand::to_vector() const {
    ControlVec u;
    u << thrust, torque;
    return u;
}

ControlCommand ControlCommand::from_vector(const ControlVec& u) {
    return ControlCommand{u.head<3>(), u.tail<3>()};
}

void VehicleParams::validate() const {
    if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("vehicle mass must be positive");
    if (!(mean_motion > 0.0) || !std::isfinite(mean_motion))
        throw ConfigError("mean motion must be positive");
    if (!inertia.allFinite() || (inertia - inertia.transpose()).norm() > 1e-12 * inertia.norm())
        throw ConfigError("inertia must be finite and symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
    if (eig.eigenvalues().minCoeff() <= 0.0) throw ConfigError("inertia must be positive definite");
    if (!(max_thrust >= 0.0) || !(max_torque >= 0.0))
        throw ConfigError("actuator limits must be non-negative");
    for (const Vec3* axis : {&panel_axis, &boresight_axis, &antenna_axis}) {
        if (!axis->allFinite() || std::abs(axis->norm() - 1.0) > 1e-9)
            throw ConfigError("body axes must be unit vectors");
    }
    if (!(resources.thermal_time_constant > 0.0))
        throw ConfigError("thermal time constant must be positive");
}

Mat3 rotation_matrix(const Vec4& q) {
    const Vec3 u = q.head<3>();
    const double w = q[3];
    Mat3 cross;
    cross << 0.0, -u.z(), u.y(), u.z(), 0.0, -u.x(), -u.y(), u.x(), 0.0;
    return (w * w - u.squaredNorm()) * Mat3::Identity() + 2.0 * u * u.transpose() + 2.0 * w * cross;
}

Eigen::Matrix<double, 3, 4> rotation_jacobian(const Vec4& q, const Vec3& v) {
    const Vec3 u = q.head<3>();
    const double w = q[3];
    Mat3 vcross;
    vcross << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    Eigen::Matrix<double, 3, 4> jac;
    jac.leftCols<3>() = -2.0 * v * u.transpose() + 2.0 * (u * v.transpose() + u.dot(v) * Mat3::Identity()) -
                        2.0 * w * vcross;
    jac.col(3) = 2.0 * w * v + 2.0 * u.cross(v);
    return jac;
}

Vec4 quaternion_multiply(const Vec4& a, const Vec4& b) {
    const Vec3 av = a.head<3>();
    const Vec3 bv = b.head<3>();
    Vec4 out;
    out.head<3>() = a[3] * bv + b[3] * av + av.cross(bv);
    out[3] = a[3] * b[3] - av.dot(bv);
    return out;
}

Vec3 thrust_in_hill(const FullState& state, const ControlCommand& cmd, const VehicleParams& params) {
    if (params.thrust_frame == ThrustFrame::Hill) return cmd.thrust;
    return rotation_matrix(state.attitude.quaternion) * cmd.thrust;
}

namespace {

Vec3 cw_acceleration(const Vec3& r, const Vec3& v, double n) {
    return Vec3(3.0 * n * n * r.x() + 2.0 * n * v.y(), -2.0 * n * v.x(), -n * n * r.z());
}

double sun_exposure(const Vec4& q, const Vec3& panel_axis, const Vec3& sun) {
    return std::max(0.0, (rotation_matrix(q) * panel_axis).dot(sun));
}

// Flat-state derivative with the command held fixed. No input validation.
StateVec flat_derivative(const StateVec& x, const Vec3& thrust_hill_or_body, const Vec3& torque,
                         double fuel_rate, const VehicleParams& p, const Mat3& inertia_inv) {
    StateVec dx;
    const Vec3 r = x.segment<3>(slot::kPosition);
    const Vec3 v = x.segment<3>(slot::kVelocity);
    const Vec4 q = x.segment<4>(slot::kQuaternion);
    const Vec3 w = x.segment<3>(slot::kBodyRate);
    const double n = p.mean_motion;

    Vec3 thrust = thrust_hill_or_body;
    if (p.thrust_frame == ThrustFrame::Body) thrust = rotation_matrix(q) * thrust;

    dx.segment<3>(slot::kPosition) = v;
    dx.segment<3>(slot::kVelocity) = cw_acceleration(r, v, n) + thrust / p.mass;
    dx.segment<4>(slot::kQuaternion) = 0.5 * quaternion_multiply(q, Vec4(w.x(), w.y(), w.z(), 0.0));
    dx.segment<3>(slot::kBodyRate) = inertia_inv * (torque - w.cross(p.inertia * w));

    const Vec3 sun = sun_direction(x[slot::kTime], n);
    const double exposure = sun_exposure(q, p.panel_axis, sun);
    const auto& rc = p.resources;
    dx[slot::kBattery] = rc.generation_rate * exposure - rc.load_rate;
    const double t_eq = rc.cold_equilibrium + (rc.hot_equilibrium - rc.cold_equilibrium) * exposure;
    dx[slot::kTemperature] = (t_eq - x[slot::kTemperature]) / rc.thermal_time_constant;
    dx[slot::kFuel] = fuel_rate;
    dx[slot::kTime] = 1.0;
    return dx;
}

double fuel_rate_of(const ControlCommand& cmd, const VehicleParams& p) {
    return p.resources.delta_v_per_impulse * cmd.thrust.cwiseAbs().sum() / p.mass;
}

void require_finite_state(const FullState& s) {
    if (!s.to_vector().allFinite()) throw DomainError("state contains non-finite values");
}

}  // namespace

Vec6 cw_derivative(const TranslationalState& ts, const Vec3& thrust_hill, const VehicleParams& params) {
    if (!ts.position.allFinite() || !ts.velocity.allFinite() || !thrust_hill.allFinite())
        throw DomainError("cw_derivative: non-finite input");
    Vec6 d;
    d.head<3>() = ts.velocity;
    d.tail<3>() = cw_acceleration(ts.position, ts.velocity, params.mean_motion) + thrust_hill / params.mass;
    return d;
}

Eigen::Matrix<double, 7, 1> attitude_derivative(const AttitudeState& as, const Vec3& torque,
                                                 const VehicleParams& params) {
    if (!as.quaternion.allFinite() || !as.body_rate.allFinite() || !torque.allFinite())
        throw DomainError("attitude_derivative: non-finite input");
    if (std::abs(as.quaternion.norm() - 1.0) > 1e-6)
        throw DomainError("attitude_derivative: quaternion is not unit norm");
    const Vec3& w = as.body_rate;
    Eigen::Matrix<double, 7, 1> d;
    d.head<4>() = 0.5 * quaternion_multiply(as.quaternion, Vec4(w.x(), w.y(), w.z(), 0.0));
    d.tail<3>() = params.inertia.inverse() * (torque - w.cross(params.inertia * w));
    return d;
}

Vec3 resource_derivative(const FullState& state, const ControlCommand& cmd, const Vec3& sun,
                         const VehicleParams& params) {
    if (std::abs(sun.norm() - 1.0) > 1e-9) throw DomainError("resource_derivative: sun must be unit norm");
    require_finite_state(state);
    const auto& rc = params.resources;
    const double exposure = sun_exposure(state.attitude.quaternion, params.panel_axis, sun);
    const double t_eq = rc.cold_equilibrium + (rc.hot_equilibrium - rc.cold_equilibrium) * exposure;
    return Vec3(rc.generation_rate * exposure - rc.load_rate,
                (t_eq - state.resources.temperature) / rc.thermal_time_constant, fuel_rate_of(cmd, params));
}

FullState propagate_rk4(const FullState& state, const ControlCommand& cmd, double dt,
                        const VehicleParams& params) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("propagate_rk4: dt must be positive");
    require_finite_state(state);
    if (!cmd.thrust.allFinite() || !cmd.torque.allFinite())
        throw DomainError("propagate_rk4: non-finite command");

    const Mat3 inertia_inv = params.inertia.inverse();
    const double fuel_rate = fuel_rate_of(cmd, params);
    const StateVec x0 = state.to_vector();
    const StateVec k1 = flat_derivative(x0, cmd.thrust, cmd.torque, fuel_rate, params, inertia_inv);
    const StateVec k2 =
        flat_derivative(x0 + 0.5 * dt * k1, cmd.thrust, cmd.torque, fuel_rate, params, inertia_inv);
    const StateVec k3 =
        flat_derivative(x0 + 0.5 * dt * k2, cmd.thrust, cmd.torque, fuel_rate, params, inertia_inv);
    const StateVec k4 = flat_derivative(x0 + dt * k3, cmd.thrust, cmd.torque, fuel_rate, params, inertia_inv);
    StateVec x1 = x0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

    FullState out = FullState::from_vector(x1);
    out.attitude.quaternion.normalize();
    out.resources.battery = std::clamp(out.resources.battery, 0.0, 1.0);
    out.resources.fuel_used = state.resources.fuel_used + fuel_rate * dt;
    out.time = state.time + dt;
    return out;
}

Mat6 cw_stm(double n, double t) {
    const double nt = n * t;
    const double c = std::cos(nt);
    const double s = std::sin(nt);
    Mat6 phi = Mat6::Zero();
    phi(0, 0) = 4.0 - 3.0 * c;
    phi(1, 0) = 6.0 * (s - nt);
    phi(1, 1) = 1.0;
    phi(2, 2) = c;
    phi(0, 3) = s / n;
    phi(0, 4) = 2.0 * (1.0 - c) / n;
    phi(1, 3) = -2.0 * (1.0 - c) / n;
    phi(1, 4) = (4.0 * s - 3.0 * nt) / n;
    phi(2, 5) = s / n;
    phi(3, 0) = 3.0 * n * s;
    phi(4, 0) = -6.0 * n * (1.0 - c);
    phi(5, 2) = -n * s;
    phi(3, 3) = c;
    phi(3, 4) = 2.0 * s;
    phi(4, 3) = -2.0 * s;
    phi(4, 4) = 4.0 * c - 3.0;
    phi(5, 5) = c;
    return phi;
}

Vec3 sun_direction(double t, double n) { return Vec3(std::cos(n * t), -std::sin(n * t), 0.0); }

Vec3 sun_direction_rate(double t, double n) {
    return Vec3(-n * std::sin(n * t), -n * std::cos(n * t), 0.0);
}

StateVec drift_vector(const FullState& state, const VehicleParams& params) {
    return flat_derivative(state.to_vector(), Vec3::Zero(), Vec3::Zero(), 0.0, params, params.inertia.inverse());
}

InputMatrix input_matrix(const FullState& state, const VehicleParams& params) {
    InputMatrix g = InputMatrix::Zero();
    if (params.thrust_frame == ThrustFrame::Hill) {
        g.block<3, 3>(slot::kVelocity, 0) = Mat3::Identity() / params.mass;
    } else {
        g.block<3, 3>(slot::kVelocity, 0) = rotation_matrix(state.attitude.quaternion) / params.mass;
    }
    g.block<3, 3>(slot::kBodyRate, 3) = params.inertia.inverse();
    return g;
}

}  // namespace orbitguard
