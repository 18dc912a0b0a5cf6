#pragma once

#include "orbitguard/dynamics.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace orbitguard {

enum class PolicyKind { ScriptedDock, ScriptedInspect, NeuralPolicy, RandomPolicy };
enum class ActionMode { Continuous, Discrete };
enum class ObservationFrame { Hill, ChiefRelativeSpherical };

std::string_view policy_kind_name(PolicyKind k);
std::optional<PolicyKind> policy_kind_from_name(std::string_view name);
std::string_view action_mode_name(ActionMode m);
std::optional<ActionMode> action_mode_from_name(std::string_view name);
std::string_view observation_frame_name(ObservationFrame f);
std::optional<ObservationFrame> observation_frame_from_name(std::string_view name);

/// Speed-limit parameters the scripted controllers stay under (fraction of nu0 + nu1 |r|).
struct SpeedEnvelope {
    double speed_offset = 0.2;     // m/s
    double speed_slope = 0.002054; // 1/s
    double fraction = 0.8;
};

struct DockGains {
    double position_gain = 0.01;  // 1/s, reference velocity per metre of range
    double velocity_gain = 0.2;   // 1/s
    SpeedEnvelope envelope;

    void validate() const;
};

ControlCommand scripted_dock(const FullState& state, const DockGains& gains, const VehicleParams& params);

struct InspectGains {
    double standoff = 50.0;         // m above the chief centre
    double max_step_angle = 0.5;    // rad, waypoint lead along the standoff sphere
    double position_gain = 0.01;    // 1/s
    double velocity_gain = 0.2;     // 1/s
    double max_speed = 0.5;         // m/s
    bool park_when_done = false;    // fly eNMT insertion instead of coasting once all points are seen
    SpeedEnvelope envelope;

    void validate() const;
};

/// Steers toward the standoff above the nearest uninspected point that the sun lights, or the
/// nearest uninspected point if none is lit. Zero command when nothing remains, unless the gains
/// ask to park on a closed natural-motion orbit.
ControlCommand scripted_inspect(const FullState& state, std::span<const Vec3> remaining, const InspectGains& gains,
                                const VehicleParams& params);

struct MlpLayer {
    Eigen::MatrixXd weights;  // rows = outputs
    Eigen::VectorXd bias;
};

struct MlpWeights {
    std::vector<int> dims;
    std::vector<MlpLayer> layers;
    Eigen::VectorXd output_scale;

    int input_dim() const { return dims.empty() ? 0 : dims.front(); }
    int output_dim() const { return dims.empty() ? 0 : dims.back(); }
    /// Throws PolicyError on inconsistent dims or non-finite entries.
    void validate() const;
};

/// Parses the weights text format; errors name the offending line.
MlpWeights parse_mlp_weights(std::string_view text);
MlpWeights load_mlp_weights(const std::string& path);
std::string format_mlp_weights(const MlpWeights& w);

/// Forward pass: tanh hidden layers, linear output times output_scale. No clipping.
Eigen::VectorXd mlp_forward(const MlpWeights& w, const Eigen::VectorXd& obs);

/// Continuous inference: outputs map to thrust (3) or thrust and torque (6), clipped to the box.
ControlCommand mlp_infer(const MlpWeights& w, const Eigen::VectorXd& obs, const VehicleParams& params);

using ThrustTable = std::vector<Vec3>;

/// {-F, 0, +F}^3, index = 9 i_x + 3 i_y + i_z with i = 0, 1, 2 for -, 0, +.
ThrustTable default_thrust_table(double max_thrust);
ControlCommand map_discrete_action(int index, const ThrustTable& table);

struct ObservationConfig {
    ObservationFrame frame = ObservationFrame::Hill;
};

inline constexpr int kObservationDim = 10;

/// Hill: [r (km) x3, v (m/s) x3, sun azimuth (rad), nearest remaining point unit vector x3].
/// Spherical: [range (km), azimuth, elevation (rad), range rate, cross-range rates (m/s) x2,
/// sun azimuth, nearest remaining point x3]. Azimuth is atan2(y, x), elevation asin(z / range).
Eigen::VectorXd build_observation(const FullState& state, const ObservationConfig& config,
                                  std::span<const Vec3> remaining, double mean_motion);

/// Inverse of the spherical translational block; defined for range > 0 and |elevation| < pi/2.
TranslationalState hill_from_spherical(const Eigen::VectorXd& obs);

/// Seeded uniform box commands; the stream is portable (bit-exact across platforms).
class RandomPolicy {
  public:
    explicit RandomPolicy(std::uint64_t seed, int hold_steps = 1, bool include_torque = true);

    ControlCommand next(const VehicleParams& params);

  private:
    double uniform_symmetric();

    std::mt19937_64 engine_;
    int hold_steps_;
    bool include_torque_;
    int counter_ = 0;
    ControlCommand held_;
};

struct PolicySpec {
    PolicyKind kind = PolicyKind::ScriptedDock;
    ActionMode action_mode = ActionMode::Continuous;
    ObservationFrame observation_frame = ObservationFrame::Hill;
    DockGains dock;
    InspectGains inspect;
    std::string weights_path;
    std::optional<MlpWeights> weights;  // resolved from weights_path or given inline
    std::uint64_t seed = 1;
    int hold_steps = 1;
    bool random_torque = true;
};

struct PolicyInput {
    const FullState& state;
    std::span<const Vec3> remaining;
    const VehicleParams& params;
};

/// One deputy's primary controller.
class Policy {
  public:
    /// Throws PolicyError when a neural policy has no usable weights.
    explicit Policy(PolicySpec spec, const VehicleParams& params);

    ControlCommand act(const PolicyInput& in);
    const PolicySpec& spec() const { return spec_; }

  private:
    PolicySpec spec_;
    ThrustTable table_;
    std::optional<RandomPolicy> random_;
};

}  // namespace orbitguard
