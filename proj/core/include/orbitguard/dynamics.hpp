#pragma once

#include "orbitguard/common.hpp"

namespace orbitguard {

/// Deputy translational state in Hill's frame (x radial, y along-track, z orbit normal).
struct TranslationalState {
    Vec3 position = Vec3::Zero();  // m
    Vec3 velocity = Vec3::Zero();  // m/s
};

/// Body-to-Hill attitude. Quaternion is scalar-last: (x, y, z, w).
struct AttitudeState {
    Vec4 quaternion = Vec4(0.0, 0.0, 0.0, 1.0);
    Vec3 body_rate = Vec3::Zero();  // rad/s, body frame
};

struct ResourceState {
    double battery = 1.0;        // fraction of capacity
    double temperature = 290.0;  // K
    double fuel_used = 0.0;      // cumulative delta-v, m/s
};

struct FullState {
    TranslationalState translational;
    AttitudeState attitude;
    ResourceState resources;
    double time = 0.0;  // s since epoch

    StateVec to_vector() const;
    static FullState from_vector(const StateVec& x);
};

struct ControlCommand {
    Vec3 thrust = Vec3::Zero();  // N
    Vec3 torque = Vec3::Zero();  // N m, body frame

    ControlVec to_vector() const;
    static ControlCommand from_vector(const ControlVec& u);
    bool operator==(const ControlCommand& other) const {
        return thrust == other.thrust && torque == other.torque;
    }
};

enum class ThrustFrame { Hill, Body };

/// First-order surrogates for power, thermal and propellant bookkeeping.
struct ResourceCoefficients {
    double generation_rate = 1.0e-4;  // battery fraction per second at full sun on the panel
    double load_rate = 2.0e-5;        // constant battery drain, fraction per second
    double thermal_time_constant = 2000.0;  // s
    double hot_equilibrium = 310.0;   // K, panel facing the sun
    double cold_equilibrium = 250.0;  // K, panel dark
    double delta_v_per_impulse = 1.0;  // scale on sum|F_i|/m (1 = plain delta-v)
};

struct VehicleParams {
    double mass = 12.0;                              // kg
    Mat3 inertia = Mat3::Identity() * 0.022;         // kg m^2
    double mean_motion = 0.001027;                   // rad/s
    double max_thrust = 1.0;                         // N per axis
    double max_torque = 1.0e-3;                      // N m per axis
    Vec3 panel_axis = Vec3(0.0, 0.0, 1.0);           // body frame
    Vec3 boresight_axis = Vec3(1.0, 0.0, 0.0);
    Vec3 antenna_axis = Vec3(0.0, 0.0, -1.0);
    ResourceCoefficients resources;
    ThrustFrame thrust_frame = ThrustFrame::Hill;

    /// Throws ConfigError if mass, inertia or mean motion are not physical.
    void validate() const;
    double orbital_period() const { return 2.0 * kPi / mean_motion; }
};

/// Body-to-Hill rotation of a (not necessarily unit) quaternion, written as the
/// homogeneous quadratic form so that it scales with |q|^2.
Mat3 rotation_matrix(const Vec4& q);

/// d(R(q) v)/dq, a 3x4 Jacobian, for the homogeneous form above.
Eigen::Matrix<double, 3, 4> rotation_jacobian(const Vec4& q, const Vec3& v);

/// Hamilton product, scalar-last.
Vec4 quaternion_multiply(const Vec4& a, const Vec4& b);

/// Thrust expressed in Hill's frame for the configured thrust frame.
Vec3 thrust_in_hill(const FullState& state, const ControlCommand& cmd, const VehicleParams& params);

/// [v; a] under linearized Clohessy-Wiltshire dynamics with thrust given in Hill's frame.
Vec6 cw_derivative(const TranslationalState& ts, const Vec3& thrust_hill, const VehicleParams& params);

/// [q_dot; w_dot]: quaternion kinematics and Euler's rigid-body equation.
Eigen::Matrix<double, 7, 1> attitude_derivative(const AttitudeState& as, const Vec3& torque,
                                                 const VehicleParams& params);

/// (battery rate, temperature rate, fuel rate).
Vec3 resource_derivative(const FullState& state, const ControlCommand& cmd, const Vec3& sun,
                         const VehicleParams& params);

/// One classical RK4 step with the command held constant over dt.
FullState propagate_rk4(const FullState& state, const ControlCommand& cmd, double dt,
                        const VehicleParams& params);

/// Closed-form CW state transition matrix for [r; v].
Mat6 cw_stm(double n, double t);

/// Sun unit vector in Hill's frame. Fixed inertially, aligned with +x at t = 0.
Vec3 sun_direction(double t, double n);
/// Time derivative of sun_direction.
Vec3 sun_direction_rate(double t, double n);

/// Drift f(x) of the control-affine model x_dot = f(x) + g(x) u over the flat state.
/// Fuel has no drift entry; its rate is not affine in u and no barrier depends on it.
StateVec drift_vector(const FullState& state, const VehicleParams& params);

/// Input matrix g(x) mapping [thrust; torque] to the flat state derivative.
InputMatrix input_matrix(const FullState& state, const VehicleParams& params);

/// Body-frame axis rotated into Hill's frame.
inline Vec3 axis_in_hill(const FullState& state, const Vec3& body_axis) {
    return rotation_matrix(state.attitude.quaternion) * body_axis;
}

}  // namespace orbitguard
