#include "orbitguard/policies.hpp"

#include "orbitguard/rta.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace orbitguard {

namespace {

constexpr std::array<std::string_view, 4> kKindNames{"ScriptedDock", "ScriptedInspect", "NeuralPolicy",
                                                     "RandomPolicy"};
constexpr std::array<std::string_view, 2> kActionNames{"Continuous", "Discrete"};
constexpr std::array<std::string_view, 2> kFrameNames{"Hill", "ChiefRelativeSpherical"};

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::string_view, N>& names, std::string_view name) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == name) return static_cast<E>(i);
    return std::nullopt;
}

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
}

void validate_envelope(const SpeedEnvelope& e) {
    require_positive(e.speed_offset, "speed_offset");
    if (!(e.speed_slope >= 0.0) || !std::isfinite(e.speed_slope)) throw ConfigError("speed_slope must be >= 0");
    if (!(e.fraction > 0.0 && e.fraction <= 1.0)) throw ConfigError("speed envelope fraction must be in (0, 1]");
}

double speed_cap(const SpeedEnvelope& e, double range) {
    return e.fraction * (e.speed_offset + e.speed_slope * range);
}

Vec3 natural_acceleration(const TranslationalState& ts, const VehicleParams& params) {
    return cw_derivative(ts, Vec3::Zero(), params).tail<3>();
}

// Thrust realizing a Hill acceleration, expressed in the thrust frame and saturated.
ControlCommand thrust_command(const FullState& state, const Vec3& accel_hill, const VehicleParams& params) {
    ControlCommand cmd;
    Vec3 f = params.mass * accel_hill;
    if (params.thrust_frame == ThrustFrame::Body) {
        const Vec4 q = state.attitude.quaternion.normalized();
        f = rotation_matrix(q).transpose() * f;
    }
    cmd.thrust = f;
    return clip_to_box(cmd, params);
}

// Velocity-tracking law: reference velocity proportional to the position error, capped.
Vec3 tracking_accel(const TranslationalState& ts, const Vec3& target, double kp, double kv, double cap,
                    const VehicleParams& params) {
    Vec3 v_ref = kp * (target - ts.position);
    const double speed = v_ref.norm();
    if (speed > cap) v_ref *= cap / speed;
    return kv * (v_ref - ts.velocity) - natural_acceleration(ts, params);
}

// Rotates from toward by at most max_angle along the great circle.
Vec3 great_circle_step(const Vec3& from, const Vec3& toward, double max_angle) {
    const double c = std::clamp(from.dot(toward), -1.0, 1.0);
    const double theta = std::acos(c);
    if (theta <= max_angle) return toward;
    Vec3 axis = from.cross(toward);
    if (axis.norm() < 1e-9) {
        axis = from.cross(Vec3::UnitZ());
        if (axis.norm() < 1e-9) axis = from.cross(Vec3::UnitX());
    }
    axis.normalize();
    const Vec3 perp = axis.cross(from);
    return std::cos(max_angle) * from + std::sin(max_angle) * perp;
}

Vec3 unit_or(const Vec3& v, const Vec3& fallback) {
    const double n = v.norm();
    return n > 1e-12 ? Vec3(v / n) : fallback;
}

const Vec3* nearest_point(std::span<const Vec3> points, const Vec3& dir) {
    const Vec3* best = nullptr;
    double best_dot = -2.0;
    for (const Vec3& p : points) {
        const double d = p.dot(dir);
        if (d > best_dot) {
            best_dot = d;
            best = &p;
        }
    }
    return best;
}

}  // namespace

std::string_view policy_kind_name(PolicyKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }
std::optional<PolicyKind> policy_kind_from_name(std::string_view name) {
    return lookup<PolicyKind>(kKindNames, name);
}
std::string_view action_mode_name(ActionMode m) { return kActionNames.at(static_cast<std::size_t>(m)); }
std::optional<ActionMode> action_mode_from_name(std::string_view name) {
    return lookup<ActionMode>(kActionNames, name);
}
std::string_view observation_frame_name(ObservationFrame f) { return kFrameNames.at(static_cast<std::size_t>(f)); }
std::optional<ObservationFrame> observation_frame_from_name(std::string_view name) {
    return lookup<ObservationFrame>(kFrameNames, name);
}

void DockGains::validate() const {
    require_positive(position_gain, "dock position_gain");
    require_positive(velocity_gain, "dock velocity_gain");
    validate_envelope(envelope);
}

void InspectGains::validate() const {
    require_positive(standoff, "inspect standoff");
    require_positive(max_step_angle, "inspect max_step_angle");
    require_positive(position_gain, "inspect position_gain");
    require_positive(velocity_gain, "inspect velocity_gain");
    require_positive(max_speed, "inspect max_speed");
    validate_envelope(envelope);
}

ControlCommand scripted_dock(const FullState& state, const DockGains& gains, const VehicleParams& params) {
    const TranslationalState& ts = state.translational;
    const double cap = speed_cap(gains.envelope, ts.position.norm());
    const Vec3 a = tracking_accel(ts, Vec3::Zero(), gains.position_gain, gains.velocity_gain, cap, params);
    return thrust_command(state, a, params);
}

ControlCommand scripted_inspect(const FullState& state, std::span<const Vec3> remaining, const InspectGains& gains,
                                const VehicleParams& params) {
    if (remaining.empty()) return gains.park_when_done ? backup_enmt(state, params) : ControlCommand{};
    const TranslationalState& ts = state.translational;
    const Vec3 dir = unit_or(ts.position, Vec3::UnitX());
    const Vec3 sun = sun_direction(state.time, params.mean_motion);

    std::vector<Vec3> lit;
    for (const Vec3& p : remaining)
        if (p.dot(sun) > 0.0) lit.push_back(p);
    const Vec3* goal = lit.empty() ? nearest_point(remaining, dir) : nearest_point(lit, dir);
    const Vec3 normal = unit_or(*goal, Vec3::UnitX());

    const Vec3 target = gains.standoff * great_circle_step(dir, normal, gains.max_step_angle);
    const double range = ts.position.norm();
    const double cap = std::min(gains.max_speed, speed_cap(gains.envelope, range));
    const Vec3 a = tracking_accel(ts, target, gains.position_gain, gains.velocity_gain, cap, params);
    return thrust_command(state, a, params);
}

void MlpWeights::validate() const {
    if (dims.size() < 2) throw PolicyError("weights need at least an input and an output dimension");
    for (int d : dims)
        if (d <= 0) throw PolicyError("weights dims must be positive");
    if (layers.size() != dims.size() - 1) throw PolicyError("weights layer count does not match dims");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const MlpLayer& layer = layers[l];
        if (layer.weights.rows() != dims[l + 1] || layer.weights.cols() != dims[l])
            throw PolicyError("W_" + std::to_string(l + 1) + " shape does not match dims");
        if (layer.bias.size() != dims[l + 1])
            throw PolicyError("b_" + std::to_string(l + 1) + " length does not match dims");
        if (!layer.weights.allFinite() || !layer.bias.allFinite())
            throw PolicyError("layer " + std::to_string(l + 1) + " has non-finite entries");
    }
    if (output_scale.size() != output_dim()) throw PolicyError("output_scale length does not match output dim");
    if (!output_scale.allFinite()) throw PolicyError("output_scale has non-finite entries");
}

namespace {

struct Field {
    int line = 0;
    std::string raw;
};

[[noreturn]] void parse_fail(int line, const std::string& msg) {
    throw PolicyError("weights line " + std::to_string(line) + ": " + msg);
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<double> parse_array(const Field& f, const std::string& key) {
    std::string_view s = trim(f.raw);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') parse_fail(f.line, key + " must be a bracketed array");
    s = s.substr(1, s.size() - 2);
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t next = s.find(',', pos);
        if (next == std::string_view::npos) next = s.size();
        std::string_view tok = trim(s.substr(pos, next - pos));
        if (tok.empty()) {
            if (next == s.size() && out.empty()) break;
            parse_fail(f.line, key + " has an empty entry");
        }
        if (tok.front() == '+') tok.remove_prefix(1);
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size())
            parse_fail(f.line, key + " entry '" + std::string(tok) + "' is not a number");
        if (!std::isfinite(v)) parse_fail(f.line, key + " entry '" + std::string(tok) + "' is not finite");
        out.push_back(v);
        pos = next + 1;
    }
    return out;
}

}  // namespace

MlpWeights parse_mlp_weights(std::string_view text) {
    std::map<std::string, Field> fields;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    std::string open_key;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        body = trim(body);
        if (!open_key.empty()) {
            Field& f = fields[open_key];
            f.raw += ' ';
            f.raw += body;
            if (body.find(']') != std::string_view::npos) open_key.clear();
            continue;
        }
        if (body.empty()) continue;
        const auto colon = body.find(':');
        if (colon == std::string_view::npos) parse_fail(line_no, "expected 'key: value'");
        const std::string key(trim(body.substr(0, colon)));
        const std::string_view value = trim(body.substr(colon + 1));
        if (key.empty()) parse_fail(line_no, "empty key");
        if (fields.count(key)) parse_fail(line_no, "duplicate field " + key);
        fields[key] = Field{line_no, std::string(value)};
        if (!value.empty() && value.front() == '[' && value.find(']') == std::string_view::npos) open_key = key;
    }
    if (!open_key.empty()) parse_fail(fields[open_key].line, open_key + " array is not closed");

    const int end_line = std::max(line_no, 1);
    auto take = [&](const std::string& key) -> Field& {
        auto it = fields.find(key);
        if (it == fields.end()) parse_fail(end_line, "missing field " + key);
        return it->second;
    };

    MlpWeights w;
    const Field& dims_field = take("dims");
    for (double d : parse_array(dims_field, "dims")) {
        if (d != std::floor(d) || d < 1 || d > 1e6) parse_fail(dims_field.line, "dims entries must be positive integers");
        w.dims.push_back(static_cast<int>(d));
    }
    if (w.dims.size() < 2) parse_fail(dims_field.line, "dims needs at least two entries");

    const Field& act = take("activation");
    if (trim(act.raw) != "tanh") parse_fail(act.line, "unsupported activation '" + act.raw + "'");

    const std::size_t layer_count = w.dims.size() - 1;
    for (std::size_t l = 1; l <= layer_count; ++l) {
        const int rows = w.dims[l], cols = w.dims[l - 1];
        const std::string wk = "W_" + std::to_string(l), bk = "b_" + std::to_string(l);
        const Field& wf = take(wk);
        const std::vector<double> wv = parse_array(wf, wk);
        if (wv.size() != static_cast<std::size_t>(rows) * cols)
            parse_fail(wf.line, wk + " has " + std::to_string(wv.size()) + " entries, expected " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
        const Field& bf = take(bk);
        const std::vector<double> bv = parse_array(bf, bk);
        if (bv.size() != static_cast<std::size_t>(rows))
            parse_fail(bf.line, bk + " has " + std::to_string(bv.size()) + " entries, expected " +
                                    std::to_string(rows));
        MlpLayer layer;
        layer.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            wv.data(), rows, cols);
        layer.bias = Eigen::Map<const Eigen::VectorXd>(bv.data(), rows);
        w.layers.push_back(std::move(layer));
    }

    const Field& sf = take("output_scale");
    const std::vector<double> sv = parse_array(sf, "output_scale");
    if (sv.size() != static_cast<std::size_t>(w.output_dim()))
        parse_fail(sf.line, "output_scale has " + std::to_string(sv.size()) + " entries, expected " +
                                std::to_string(w.output_dim()));
    w.output_scale = Eigen::Map<const Eigen::VectorXd>(sv.data(), static_cast<Eigen::Index>(sv.size()));

    for (const auto& [key, f] : fields) {
        const bool known = key == "dims" || key == "activation" || key == "output_scale";
        bool layer_key = false;
        for (std::size_t l = 1; l <= layer_count && !known; ++l)
            layer_key = layer_key || key == "W_" + std::to_string(l) || key == "b_" + std::to_string(l);
        if (!known && !layer_key) parse_fail(f.line, "unknown field " + key);
    }
    return w;
}

MlpWeights load_mlp_weights(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PolicyError("cannot open weights file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_mlp_weights(ss.str());
}

std::string format_mlp_weights(const MlpWeights& w) {
    w.validate();
    std::ostringstream out;
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto array = [&](const double* data, Eigen::Index n) {
        std::string s = "[";
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i) s += ", ";
            s += num(data[i]);
        }
        return s + "]";
    };
    out << "dims: [";
    for (std::size_t i = 0; i < w.dims.size(); ++i) out << (i ? ", " : "") << w.dims[i];
    out << "]\nactivation: tanh\n";
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = w.layers[l].weights;
        out << "W_" << l + 1 << ": " << array(rm.data(), rm.size()) << "\n";
        out << "b_" << l + 1 << ": " << array(w.layers[l].bias.data(), w.layers[l].bias.size()) << "\n";
    }
    out << "output_scale: " << array(w.output_scale.data(), w.output_scale.size()) << "\n";
    return out.str();
}

Eigen::VectorXd mlp_forward(const MlpWeights& w, const Eigen::VectorXd& obs) {
    if (obs.size() != w.input_dim())
        throw PolicyError("observation length " + std::to_string(obs.size()) + " does not match input dim " +
                          std::to_string(w.input_dim()));
    Eigen::VectorXd x = obs;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
        Eigen::VectorXd z = w.layers[l].bias;
        const Eigen::MatrixXd& W = w.layers[l].weights;
        // Fixed summation order keeps the result independent of vectorization.
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) z[r] += W(r, c) * x[c];
        if (l + 1 < w.layers.size())
            for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std::tanh(z[i]);
        x = std::move(z);
    }
    return x.cwiseProduct(w.output_scale);
}

ControlCommand mlp_infer(const MlpWeights& w, const Eigen::VectorXd& obs, const VehicleParams& params) {
    const int out = w.output_dim();
    if (out != 3 && out != kControlDim)
        throw PolicyError("continuous network output dim must be 3 or 6, got " + std::to_string(out));
    const Eigen::VectorXd y = mlp_forward(w, obs);
    ControlCommand cmd;
    cmd.thrust = y.head<3>();
    if (out == kControlDim) cmd.torque = y.tail<3>();
    if (!cmd.to_vector().allFinite()) throw PolicyError("network output is not finite");
    return clip_to_box(cmd, params);
}

ThrustTable default_thrust_table(double max_thrust) {
    ThrustTable table;
    table.reserve(27);
    const std::array<double, 3> levels{-max_thrust, 0.0, max_thrust};
    for (double fx : levels)
        for (double fy : levels)
            for (double fz : levels) table.emplace_back(fx, fy, fz);
    return table;
}

ControlCommand map_discrete_action(int index, const ThrustTable& table) {
    if (index < 0 || static_cast<std::size_t>(index) >= table.size())
        throw PolicyError("discrete action " + std::to_string(index) + " outside table of " +
                          std::to_string(table.size()));
    ControlCommand cmd;
    cmd.thrust = table[static_cast<std::size_t>(index)];
    return cmd;
}

Eigen::VectorXd build_observation(const FullState& state, const ObservationConfig& config,
                                  std::span<const Vec3> remaining, double mean_motion) {
    Eigen::VectorXd obs = Eigen::VectorXd::Zero(kObservationDim);
    const Vec3& r = state.translational.position;
    const Vec3& v = state.translational.velocity;
    const Vec3 sun = sun_direction(state.time, mean_motion);

    if (config.frame == ObservationFrame::Hill) {
        obs.segment<3>(0) = r / 1000.0;
        obs.segment<3>(3) = v;
    } else {
        const double rho = r.norm();
        double az = 0.0, el = 0.0;
        if (rho > 0.0) {
            az = std::atan2(r.y(), r.x());
            el = std::asin(std::clamp(r.z() / rho, -1.0, 1.0));
        }
        const Vec3 e_r(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        const Vec3 e_az(-std::sin(az), std::cos(az), 0.0);
        const Vec3 e_el(-std::sin(el) * std::cos(az), -std::sin(el) * std::sin(az), std::cos(el));
        obs << rho / 1000.0, az, el, v.dot(e_r), v.dot(e_az), v.dot(e_el), 0, 0, 0, 0;
    }
    obs[6] = std::atan2(sun.y(), sun.x());
    if (const Vec3* p = nearest_point(remaining, unit_or(r, Vec3::UnitX()))) obs.segment<3>(7) = unit_or(*p, Vec3::Zero());
    if (!obs.allFinite()) throw DomainError("observation is not finite");
    return obs;
}

TranslationalState hill_from_spherical(const Eigen::VectorXd& obs) {
    if (obs.size() != kObservationDim) throw DomainError("spherical observation has the wrong length");
    const double rho = obs[0] * 1000.0, az = obs[1], el = obs[2];
    const Vec3 e_r(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    const Vec3 e_az(-std::sin(az), std::cos(az), 0.0);
    const Vec3 e_el(-std::sin(el) * std::cos(az), -std::sin(el) * std::sin(az), std::cos(el));
    TranslationalState ts;
    ts.position = rho * e_r;
    ts.velocity = obs[3] * e_r + obs[4] * e_az + obs[5] * e_el;
    return ts;
}

RandomPolicy::RandomPolicy(std::uint64_t seed, int hold_steps, bool include_torque)
    : engine_(seed), hold_steps_(hold_steps), include_torque_(include_torque) {
    if (hold_steps_ < 1) throw ConfigError("random policy hold_steps must be >= 1");
}

double RandomPolicy::uniform_symmetric() {
    // 53 high bits -> [0, 1), then [-1, 1). mt19937_64 output is fixed by the standard.
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return 2.0 * u - 1.0;
}

ControlCommand RandomPolicy::next(const VehicleParams& params) {
    if (counter_ % hold_steps_ == 0) {
        for (int i = 0; i < 3; ++i) held_.thrust[i] = params.max_thrust * uniform_symmetric();
        for (int i = 0; i < 3; ++i) held_.torque[i] = include_torque_ ? params.max_torque * uniform_symmetric() : 0.0;
    }
    ++counter_;
    return held_;
}

Policy::Policy(PolicySpec spec, const VehicleParams& params) : spec_(std::move(spec)) {
    switch (spec_.kind) {
    case PolicyKind::ScriptedDock:
        spec_.dock.validate();
        break;
    case PolicyKind::ScriptedInspect:
        spec_.inspect.validate();
        break;
    case PolicyKind::NeuralPolicy: {
        if (!spec_.weights) {
            if (spec_.weights_path.empty()) throw PolicyError("neural policy needs weights");
            spec_.weights = load_mlp_weights(spec_.weights_path);
        }
        spec_.weights->validate();
        if (spec_.weights->input_dim() != kObservationDim)
            throw PolicyError("network input dim " + std::to_string(spec_.weights->input_dim()) +
                              " does not match observation length " + std::to_string(kObservationDim));
        if (spec_.action_mode == ActionMode::Discrete) {
            table_ = default_thrust_table(params.max_thrust);
            if (static_cast<std::size_t>(spec_.weights->output_dim()) != table_.size())
                throw PolicyError("discrete network output dim must equal the action table size");
        } else if (spec_.weights->output_dim() != 3 && spec_.weights->output_dim() != kControlDim) {
            throw PolicyError("continuous network output dim must be 3 or 6");
        }
        break;
    }
    case PolicyKind::RandomPolicy:
        random_.emplace(spec_.seed, spec_.hold_steps, spec_.random_torque);
        break;
    }
}

ControlCommand Policy::act(const PolicyInput& in) {
    switch (spec_.kind) {
    case PolicyKind::ScriptedDock:
        return scripted_dock(in.state, spec_.dock, in.params);
    case PolicyKind::ScriptedInspect:
        return scripted_inspect(in.state, in.remaining, spec_.inspect, in.params);
    case PolicyKind::NeuralPolicy: {
        const Eigen::VectorXd obs =
            build_observation(in.state, {spec_.observation_frame}, in.remaining, in.params.mean_motion);
        if (spec_.action_mode == ActionMode::Continuous) return mlp_infer(*spec_.weights, obs, in.params);
        const Eigen::VectorXd logits = mlp_forward(*spec_.weights, obs);
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < logits.size(); ++i)
            if (logits[i] > logits[best]) best = i;
        return clip_to_box(map_discrete_action(static_cast<int>(best), table_), in.params);
    }
    case PolicyKind::RandomPolicy:
        return random_->next(in.params);
    }
    return {};
}

}  // namespace orbitguard
