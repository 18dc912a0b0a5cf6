#include "orbitguard/codec.hpp"

#include <algorithm>
#include <map>

namespace orbitguard {

namespace {

std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

const Json* find(const Json& j, std::string_view key) {
    const auto it = j.find(std::string(key));
    return it == j.end() ? nullptr : &*it;
}

double as_number(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ScenarioError(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ScenarioError(path, "must be finite");
    return v;
}

template <int N>
Eigen::Matrix<double, N, 1> fixed_vector(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(N))
        throw ScenarioError(path, "expected an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = as_number(j[static_cast<std::size_t>(i)], index_path(path, i));
    return v;
}

template <typename Derived>
Json array_of(const Eigen::MatrixBase<Derived>& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

double number_or_nan(const Json& j, const std::string& path) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!j.is_number()) throw ScenarioError(path, "expected a number or null");
    return j.get<double>();
}

}  // namespace

void require_keys(const Json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ScenarioError(path, "expected an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ScenarioError(join(path, key), "unknown field");
    }
}

double number_field(const Json& j, std::string_view key, const std::string& path, double fallback) {
    const Json* v = find(j, key);
    return v ? as_number(*v, join(path, key)) : fallback;
}

double required_number(const Json& j, std::string_view key, const std::string& path) {
    const Json* v = find(j, key);
    if (!v) throw ScenarioError(join(path, key), "required field is missing");
    return as_number(*v, join(path, key));
}

std::string string_field(const Json& j, std::string_view key, const std::string& path, const std::string& fallback) {
    const Json* v = find(j, key);
    if (!v) return fallback;
    if (!v->is_string()) throw ScenarioError(join(path, key), "expected a string");
    return v->get<std::string>();
}

bool bool_field(const Json& j, std::string_view key, const std::string& path, bool fallback) {
    const Json* v = find(j, key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ScenarioError(join(path, key), "expected true or false");
    return v->get<bool>();
}

Json state_to_json(const FullState& s) {
    Json j;
    j["position"] = array_of(s.translational.position);
    j["velocity"] = array_of(s.translational.velocity);
    j["quaternion"] = array_of(s.attitude.quaternion);
    j["body_rate"] = array_of(s.attitude.body_rate);
    j["battery"] = s.resources.battery;
    j["temperature"] = s.resources.temperature;
    j["fuel_used"] = s.resources.fuel_used;
    j["time"] = s.time;
    return j;
}

FullState state_from_json(const Json& j, const std::string& path) {
    require_keys(j, path,
                 {"position", "velocity", "quaternion", "body_rate", "battery", "temperature", "fuel_used", "time"});
    FullState s;
    if (const Json* v = find(j, "position")) s.translational.position = fixed_vector<3>(*v, join(path, "position"));
    if (const Json* v = find(j, "velocity")) s.translational.velocity = fixed_vector<3>(*v, join(path, "velocity"));
    if (const Json* v = find(j, "quaternion")) {
        s.attitude.quaternion = fixed_vector<4>(*v, join(path, "quaternion"));
        if (std::abs(s.attitude.quaternion.norm() - 1.0) > 1e-9)
            throw ScenarioError(join(path, "quaternion"), "must be a unit quaternion");
    }
    if (const Json* v = find(j, "body_rate")) s.attitude.body_rate = fixed_vector<3>(*v, join(path, "body_rate"));
    s.resources.battery = number_field(j, "battery", path, s.resources.battery);
    if (s.resources.battery < 0.0 || s.resources.battery > 1.0)
        throw ScenarioError(join(path, "battery"), "must be in [0, 1]");
    s.resources.temperature = number_field(j, "temperature", path, s.resources.temperature);
    if (!(s.resources.temperature > 0.0)) throw ScenarioError(join(path, "temperature"), "must be positive");
    s.resources.fuel_used = number_field(j, "fuel_used", path, s.resources.fuel_used);
    if (s.resources.fuel_used < 0.0) throw ScenarioError(join(path, "fuel_used"), "must be >= 0");
    s.time = number_field(j, "time", path, s.time);
    return s;
}

Json state_to_array(const FullState& s) { return array_of(s.to_vector()); }

FullState state_from_array(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(kStateDim))
        throw ScenarioError(path, "expected an array of " + std::to_string(kStateDim) + " entries");
    StateVec x;
    for (int i = 0; i < kStateDim; ++i) x[i] = number_or_nan(j[static_cast<std::size_t>(i)], index_path(path, i));
    return FullState::from_vector(x);
}

Json command_to_json(const ControlCommand& c) { return array_of(c.to_vector()); }

ControlCommand command_from_json(const Json& j, const std::string& path) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(kControlDim))
        throw ScenarioError(path, "expected an array of 6 entries");
    ControlVec u;
    for (int i = 0; i < kControlDim; ++i) u[i] = number_or_nan(j[static_cast<std::size_t>(i)], index_path(path, i));
    return ControlCommand::from_vector(u);
}

Json vehicle_to_json(const VehicleParams& v) {
    Json j;
    j["mass"] = v.mass;
    Json inertia = Json::array();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) inertia.push_back(v.inertia(r, c));
    j["inertia"] = inertia;
    j["mean_motion"] = v.mean_motion;
    j["max_thrust"] = v.max_thrust;
    j["max_torque"] = v.max_torque;
    j["panel_axis"] = array_of(v.panel_axis);
    j["boresight_axis"] = array_of(v.boresight_axis);
    j["antenna_axis"] = array_of(v.antenna_axis);
    j["thrust_frame"] = v.thrust_frame == ThrustFrame::Hill ? "Hill" : "Body";
    const ResourceCoefficients& r = v.resources;
    j["resources"] = {{"generation_rate", r.generation_rate},
                      {"load_rate", r.load_rate},
                      {"thermal_time_constant", r.thermal_time_constant},
                      {"hot_equilibrium", r.hot_equilibrium},
                      {"cold_equilibrium", r.cold_equilibrium},
                      {"delta_v_per_impulse", r.delta_v_per_impulse}};
    return j;
}

VehicleParams vehicle_from_json(const Json& j, const std::string& path) {
    require_keys(j, path,
                 {"mass", "inertia", "mean_motion", "max_thrust", "max_torque", "panel_axis", "boresight_axis",
                  "antenna_axis", "thrust_frame", "resources"});
    VehicleParams v;
    v.mass = number_field(j, "mass", path, v.mass);
    if (const Json* in = find(j, "inertia")) {
        const std::string p = join(path, "inertia");
        if (in->is_array() && in->size() == 3) {
            v.inertia = fixed_vector<3>(*in, p).asDiagonal();
        } else if (in->is_array() && in->size() == 9) {
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    v.inertia(r, c) = as_number((*in)[static_cast<std::size_t>(3 * r + c)], index_path(p, 3 * r + c));
        } else {
            throw ScenarioError(p, "expected 3 diagonal entries or 9 row-major entries");
        }
    }
    v.mean_motion = number_field(j, "mean_motion", path, v.mean_motion);
    v.max_thrust = number_field(j, "max_thrust", path, v.max_thrust);
    v.max_torque = number_field(j, "max_torque", path, v.max_torque);
    if (const Json* a = find(j, "panel_axis")) v.panel_axis = fixed_vector<3>(*a, join(path, "panel_axis"));
    if (const Json* a = find(j, "boresight_axis")) v.boresight_axis = fixed_vector<3>(*a, join(path, "boresight_axis"));
    if (const Json* a = find(j, "antenna_axis")) v.antenna_axis = fixed_vector<3>(*a, join(path, "antenna_axis"));
    const std::string frame = string_field(j, "thrust_frame", path, "Hill");
    if (frame == "Hill") v.thrust_frame = ThrustFrame::Hill;
    else if (frame == "Body") v.thrust_frame = ThrustFrame::Body;
    else throw ScenarioError(join(path, "thrust_frame"), "must be Hill or Body");
    if (const Json* r = find(j, "resources")) {
        const std::string p = join(path, "resources");
        require_keys(*r, p,
                     {"generation_rate", "load_rate", "thermal_time_constant", "hot_equilibrium", "cold_equilibrium",
                      "delta_v_per_impulse"});
        ResourceCoefficients& c = v.resources;
        c.generation_rate = number_field(*r, "generation_rate", p, c.generation_rate);
        c.load_rate = number_field(*r, "load_rate", p, c.load_rate);
        c.thermal_time_constant = number_field(*r, "thermal_time_constant", p, c.thermal_time_constant);
        c.hot_equilibrium = number_field(*r, "hot_equilibrium", p, c.hot_equilibrium);
        c.cold_equilibrium = number_field(*r, "cold_equilibrium", p, c.cold_equilibrium);
        c.delta_v_per_impulse = number_field(*r, "delta_v_per_impulse", p, c.delta_v_per_impulse);
    }
    if (!(v.max_thrust > 0.0)) throw ScenarioError(join(path, "max_thrust"), "must be positive");
    if (!(v.max_torque > 0.0)) throw ScenarioError(join(path, "max_torque"), "must be positive");
    try {
        v.validate();
    } catch (const Error& e) {
        throw ScenarioError(path, e.what());
    }
    return v;
}

Json constraint_to_json(const ConstraintSpec& spec) {
    const ConstraintInfo& info = constraint_info(spec.id);
    Json j;
    j["enabled"] = spec.enabled;
    j["priority"] = spec.priority;
    j["mode"] = std::string(mode_name(spec.mode));
    Json params = Json::object();
    for (std::size_t p = 0; p < info.params.size(); ++p) params[std::string(info.params[p].name)] = spec.params[p];
    j["params"] = params;
    j["kappa"] = {spec.kappa_strength[0], spec.kappa_strength[1]};
    return j;
}

Json catalog_to_json(const Catalog& c) {
    Json j = Json::object();
    for (const ConstraintSpec& s : c) j[std::string(constraint_name(s.id))] = constraint_to_json(s);
    return j;
}

void apply_constraint_edit(ConstraintSpec& spec, const Json& edit, const std::string& path) {
    require_keys(edit, path, {"enabled", "priority", "params", "kappa", "mode"});
    ConstraintSpec next = spec;
    next.enabled = bool_field(edit, "enabled", path, next.enabled);
    if (const Json* pr = find(edit, "priority")) {
        if (!pr->is_number_integer() || pr->get<long long>() < 1 || pr->get<long long>() > 1000)
            throw ScenarioError(join(path, "priority"), "expected an integer rank >= 1");
        next.priority = pr->get<int>();
    }
    if (const Json* m = find(edit, "mode")) {
        const std::string want(mode_name(constraint_info(spec.id).mode));
        if (!m->is_string() || m->get<std::string>() != want)
            throw ScenarioError(join(path, "mode"), "enforcement mode is fixed to " + want);
    }
    if (const Json* params = find(edit, "params")) {
        const std::string pp = join(path, "params");
        if (!params->is_object()) throw ScenarioError(pp, "expected an object");
        for (const auto& [name, value] : params->items()) {
            const std::string fp = join(pp, name);
            const double v = as_number(value, fp);
            try {
                next.set_param(name, v);
            } catch (const CatalogError& e) {
                throw ScenarioError(fp, e.what());
            }
        }
    }
    if (const Json* k = find(edit, "kappa")) {
        const Eigen::Vector2d kv = fixed_vector<2>(*k, join(path, "kappa"));
        if (!(kv[0] > 0.0) || !(kv[1] > 0.0)) throw ScenarioError(join(path, "kappa"), "entries must be positive");
        next.kappa_strength = {kv[0], kv[1]};
    }
    if (next.id == ConstraintId::Temperature &&
        !(next.params[param::temperature::kMin] < next.params[param::temperature::kMax]))
        throw ScenarioError(join(path, "params"), "min must be below max");
    spec = next;
}

void check_unique_priorities(const Catalog& catalog, const std::string& path) {
    std::map<int, ConstraintId> seen;
    for (const ConstraintSpec& s : catalog) {
        if (!s.enabled) continue;
        const auto [it, fresh] = seen.emplace(s.priority, s.id);
        if (!fresh)
            throw ScenarioError(join(join(path, constraint_name(s.id)), "priority"),
                                "duplicate priority " + std::to_string(s.priority) + " (also held by " +
                                    std::string(constraint_name(it->second)) + ")");
    }
}

void apply_catalog_edits(Catalog& catalog, const Json& edits, const std::string& path) {
    if (!edits.is_object()) throw ScenarioError(path, "expected an object keyed by constraint name");
    Catalog next = catalog;
    for (const auto& [name, edit] : edits.items()) {
        const auto id = constraint_from_name(name);
        if (!id) throw ScenarioError(join(path, name), "unknown constraint");
        apply_constraint_edit(next[*id], edit, join(path, name));
    }
    check_unique_priorities(next, path);
    try {
        next.validate();
    } catch (const CatalogError& e) {
        throw ScenarioError(path, e.what());
    }
    catalog = next;
}

Json catalog_schema_json() {
    Json out = Json::array();
    for (ConstraintId id : kAllConstraints) {
        const ConstraintInfo& info = constraint_info(id);
        Json c;
        c["id"] = std::string(constraint_name(id));
        c["display_name"] = std::string(info.display_name);
        c["mode"] = std::string(mode_name(info.mode));
        c["relative_degree"] = info.relative_degree;
        c["help"] = std::string(info.help);
        Json params = Json::array();
        for (const ParamSchema& p : info.params)
            params.push_back({{"name", std::string(p.name)},
                              {"unit", std::string(p.unit)},
                              {"min", p.min},
                              {"max", p.max},
                              {"default", p.default_value},
                              {"description", std::string(p.description)}});
        c["params"] = params;
        out.push_back(c);
    }
    return out;
}

namespace {

Json envelope_json(const SpeedEnvelope& e) {
    return {{"speed_offset", e.speed_offset}, {"speed_slope", e.speed_slope}, {"speed_fraction", e.fraction}};
}

SpeedEnvelope envelope_from(const Json& g, const std::string& path, const Catalog& catalog) {
    SpeedEnvelope e;
    const ConstraintSpec& ds = catalog[ConstraintId::DynamicSpeed];
    e.speed_offset = number_field(g, "speed_offset", path, ds.params[param::dynamic_speed::kSpeedOffset]);
    e.speed_slope = number_field(g, "speed_slope", path, ds.params[param::dynamic_speed::kSpeedSlope]);
    e.fraction = number_field(g, "speed_fraction", path, e.fraction);
    return e;
}

}  // namespace

Json policy_to_json(const PolicySpec& p) {
    Json j;
    j["kind"] = std::string(policy_kind_name(p.kind));
    switch (p.kind) {
    case PolicyKind::ScriptedDock: {
        Json g = {{"position_gain", p.dock.position_gain}, {"velocity_gain", p.dock.velocity_gain}};
        g.update(envelope_json(p.dock.envelope));
        j["gains"] = g;
        break;
    }
    case PolicyKind::ScriptedInspect: {
        const InspectGains& i = p.inspect;
        Json g = {{"standoff", i.standoff},           {"max_step_angle", i.max_step_angle},
                  {"position_gain", i.position_gain}, {"velocity_gain", i.velocity_gain},
                  {"max_speed", i.max_speed},         {"park_when_done", i.park_when_done}};
        g.update(envelope_json(i.envelope));
        j["gains"] = g;
        break;
    }
    case PolicyKind::NeuralPolicy:
        j["weights"] = p.weights_path;
        j["action_mode"] = std::string(action_mode_name(p.action_mode));
        j["observation_frame"] = std::string(observation_frame_name(p.observation_frame));
        break;
    case PolicyKind::RandomPolicy:
        j["seed"] = p.seed;
        j["hold_steps"] = p.hold_steps;
        j["torque"] = p.random_torque;
        break;
    }
    return j;
}

PolicySpec policy_from_json(const Json& j, const std::string& path, const std::filesystem::path& base_dir,
                            const Catalog& catalog) {
    require_keys(j, path, {"kind", "gains", "weights", "action_mode", "observation_frame", "seed", "hold_steps", "torque"});
    PolicySpec p;
    const std::string kind = string_field(j, "kind", path, "");
    const auto k = policy_kind_from_name(kind);
    if (!k) throw ScenarioError(join(path, "kind"), "unknown policy '" + kind + "'");
    p.kind = *k;
    const Json empty = Json::object();
    const Json* gains = find(j, "gains");
    const std::string gp = join(path, "gains");
    if (gains && p.kind != PolicyKind::ScriptedDock && p.kind != PolicyKind::ScriptedInspect)
        throw ScenarioError(gp, "only scripted policies take gains");
    try {
        if (p.kind == PolicyKind::ScriptedDock) {
            const Json& g = gains ? *gains : empty;
            require_keys(g, gp, {"position_gain", "velocity_gain", "speed_offset", "speed_slope", "speed_fraction"});
            p.dock.position_gain = number_field(g, "position_gain", gp, p.dock.position_gain);
            p.dock.velocity_gain = number_field(g, "velocity_gain", gp, p.dock.velocity_gain);
            p.dock.envelope = envelope_from(g, gp, catalog);
            p.dock.validate();
        } else if (p.kind == PolicyKind::ScriptedInspect) {
            const Json& g = gains ? *gains : empty;
            require_keys(g, gp,
                         {"standoff", "max_step_angle", "position_gain", "velocity_gain", "max_speed", "park_when_done",
                          "speed_offset", "speed_slope", "speed_fraction"});
            InspectGains& i = p.inspect;
            i.standoff = number_field(g, "standoff", gp, i.standoff);
            i.max_step_angle = number_field(g, "max_step_angle", gp, i.max_step_angle);
            i.position_gain = number_field(g, "position_gain", gp, i.position_gain);
            i.velocity_gain = number_field(g, "velocity_gain", gp, i.velocity_gain);
            i.max_speed = number_field(g, "max_speed", gp, i.max_speed);
            i.park_when_done = bool_field(g, "park_when_done", gp, i.park_when_done);
            i.envelope = envelope_from(g, gp, catalog);
            i.validate();
        }
    } catch (const ConfigError& e) {
        throw ScenarioError(gp, e.what());
    }
    if (p.kind == PolicyKind::NeuralPolicy) {
        const std::string w = string_field(j, "weights", path, "");
        if (w.empty()) throw ScenarioError(join(path, "weights"), "neural policy needs a weights file");
        const std::filesystem::path wp(w);
        p.weights_path = (wp.is_absolute() ? wp : base_dir / wp).lexically_normal().string();
        const std::string am = string_field(j, "action_mode", path, "Continuous");
        const auto mode = action_mode_from_name(am);
        if (!mode) throw ScenarioError(join(path, "action_mode"), "must be Continuous or Discrete");
        p.action_mode = *mode;
        const std::string of = string_field(j, "observation_frame", path, "Hill");
        const auto frame = observation_frame_from_name(of);
        if (!frame) throw ScenarioError(join(path, "observation_frame"), "must be Hill or ChiefRelativeSpherical");
        p.observation_frame = *frame;
        try {
            p.weights = load_mlp_weights(p.weights_path);
        } catch (const PolicyError& e) {
            throw ScenarioError(join(path, "weights"), e.what());
        }
    } else {
        for (const char* key : {"weights", "action_mode", "observation_frame"})
            if (find(j, key)) throw ScenarioError(join(path, key), "only neural policies take this field");
    }
    if (p.kind == PolicyKind::RandomPolicy) {
        if (const Json* s = find(j, "seed")) {
            if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<long long>() >= 0))
                throw ScenarioError(join(path, "seed"), "expected a non-negative integer");
            p.seed = s->get<std::uint64_t>();
        }
        if (const Json* h = find(j, "hold_steps")) {
            if (!h->is_number_integer() || h->get<long long>() < 1 || h->get<long long>() > 1000000)
                throw ScenarioError(join(path, "hold_steps"), "expected an integer >= 1");
            p.hold_steps = h->get<int>();
        }
        p.random_torque = bool_field(j, "torque", path, true);
    } else {
        for (const char* key : {"seed", "hold_steps", "torque"})
            if (find(j, key)) throw ScenarioError(join(path, key), "only random policies take this field");
    }
    return p;
}

Json margins_to_json(const MarginMap& m) {
    Json j = Json::object();
    for (ConstraintId id : kAllConstraints) {
        const double v = m[index_of(id)];
        j[std::string(constraint_name(id))] = std::isnan(v) ? Json(nullptr) : Json(v);
    }
    return j;
}

MarginMap margins_from_json(const Json& j, const std::string& path) {
    if (!j.is_object()) throw ScenarioError(path, "expected an object");
    MarginMap m;
    m.fill(std::numeric_limits<double>::quiet_NaN());
    for (const auto& [name, value] : j.items()) {
        const auto id = constraint_from_name(name);
        if (!id) throw ScenarioError(join(path, name), "unknown constraint");
        m[index_of(*id)] = number_or_nan(value, join(path, name));
    }
    return m;
}

Json backups_to_json(const PipelineConfig& cfg) {
    return {{"fuel_backup", std::string(backup_name(cfg.fuel_backup.kind))},
            {"passive_backup", std::string(backup_name(cfg.passive_backup.kind))},
            {"fallback", std::string(backup_name(cfg.fallback.kind))}};
}

PipelineConfig backups_from_json(const Json& j, const std::string& path) {
    require_keys(j, path, {"fuel_backup", "passive_backup", "fallback"});
    PipelineConfig cfg;
    auto pick = [&](const char* key, BackupController& slot) {
        const std::string name = string_field(j, key, path, std::string(backup_name(slot.kind)));
        const auto kind = backup_from_name(name);
        if (!kind) throw ScenarioError(join(path, key), "unknown backup '" + name + "'");
        slot.kind = *kind;
    };
    pick("fuel_backup", cfg.fuel_backup);
    pick("passive_backup", cfg.passive_backup);
    pick("fallback", cfg.fallback);
    return cfg;
}

}  // namespace orbitguard
