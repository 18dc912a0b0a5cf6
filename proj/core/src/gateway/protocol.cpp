#include "orbitguard/gateway/protocol.hpp"

namespace orbitguard::gateway {

namespace {

std::string member(const std::string& path, std::string_view key) { return path + "." + std::string(key); }

const Json* find(const Json& j, std::string_view key) {
    const auto it = j.find(std::string(key));
    return it == j.end() ? nullptr : &*it;
}

long integer_field(const Json& j, std::string_view key, const std::string& path, std::optional<long> fallback,
                   long lo, long hi) {
    const Json* v = find(j, key);
    if (!v) {
        if (fallback) return *fallback;
        throw ProtocolError(member(path, key), "required field is missing");
    }
    if (!v->is_number_integer()) throw ProtocolError(member(path, key), "expected an integer");
    const long long n = v->get<long long>();
    if (n < lo || n > hi)
        throw ProtocolError(member(path, key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return static_cast<long>(n);
}

ConstraintId constraint_id(const Json& j, const std::string& path) {
    if (!j.is_string()) throw ProtocolError(path, "expected a constraint name");
    const auto id = constraint_from_name(j.get<std::string>());
    if (!id) throw ProtocolError(path, "unknown constraint '" + j.get<std::string>() + "'");
    return *id;
}

void check_policy_ref(const Json& j, const std::string& path) {
    if (!j.is_string() && !j.is_object()) throw ProtocolError(path, "expected a policy id or policy object");
}

constexpr std::string_view kTypes[] = {"set_constraint", "select_policy", "override", "start",  "pause",
                                       "resume",         "step",          "request_snapshot", "preview"};

SetConstraint parse_set_constraint(const Json& p) {
    require_keys(p, "payload", {"id", "enabled", "priority", "params", "ranking"});
    SetConstraint c;
    if (const Json* v = find(p, "id")) c.id = constraint_id(*v, "payload.id");
    if (const Json* v = find(p, "enabled")) {
        if (!v->is_boolean()) throw ProtocolError("payload.enabled", "expected true or false");
        c.enabled = v->get<bool>();
    }
    if (find(p, "priority")) c.priority = static_cast<int>(integer_field(p, "priority", "payload", std::nullopt, 1, 1000));
    if (const Json* v = find(p, "params")) {
        if (!v->is_object()) throw ProtocolError("payload.params", "expected an object of name: value");
        for (const auto& [name, value] : v->items()) {
            const std::string path = "payload.params." + name;
            if (!value.is_number()) throw ProtocolError(path, "expected a number");
            const double x = value.get<double>();
            if (!std::isfinite(x)) throw ProtocolError(path, "must be finite");
            c.params.emplace_back(name, x);
        }
    }
    if (const Json* v = find(p, "ranking")) {
        if (!v->is_array() || v->empty()) throw ProtocolError("payload.ranking", "expected a non-empty array of names");
        for (std::size_t i = 0; i < v->size(); ++i) {
            const ConstraintId id = constraint_id((*v)[i], "payload.ranking[" + std::to_string(i) + "]");
            if (std::find(c.ranking.begin(), c.ranking.end(), id) != c.ranking.end())
                throw ProtocolError("payload.ranking[" + std::to_string(i) + "]", "constraint listed twice");
            c.ranking.push_back(id);
        }
    }
    const bool field_edit = c.enabled || c.priority || !c.params.empty();
    if (field_edit && !c.id) throw ProtocolError("payload.id", "required when editing a constraint's fields");
    if (!c.id && c.ranking.empty()) throw ProtocolError("payload", "give an id with edits, or a ranking");
    return c;
}

Override parse_override(const Json& p) {
    require_keys(p, "payload", {"deputy", "entries"});
    Override o;
    o.deputy = static_cast<int>(integer_field(p, "deputy", "payload", std::nullopt, 0, 1 << 20));
    const Json* e = find(p, "entries");
    if (!e || !e->is_array()) throw ProtocolError("payload.entries", "expected an array of {t, command}");
    for (std::size_t i = 0; i < e->size(); ++i) {
        const std::string path = "payload.entries[" + std::to_string(i) + "]";
        const Json& entry = (*e)[i];
        require_keys(entry, path, {"t", "command"});
        TimedCommand tc;
        tc.t = required_number(entry, "t", path);
        const Json* cmd = find(entry, "command");
        if (!cmd) throw ProtocolError(path + ".command", "required field is missing");
        tc.command = command_from_json(*cmd, path + ".command");
        if (!tc.command.to_vector().allFinite()) throw ProtocolError(path + ".command", "must be finite");
        o.entries.push_back(tc);
    }
    return o;
}

Preview parse_preview(const Json& p) {
    require_keys(p, "payload", {"deputy", "policies", "cycles", "stride"});
    Preview v;
    v.deputy = static_cast<int>(integer_field(p, "deputy", "payload", std::nullopt, 0, 1 << 20));
    const Json* list = find(p, "policies");
    if (!list || !list->is_array() || list->empty())
        throw ProtocolError("payload.policies", "expected a non-empty array of policies");
    if (list->size() > 16) throw ProtocolError("payload.policies", "at most 16 candidates");
    for (std::size_t i = 0; i < list->size(); ++i) {
        check_policy_ref((*list)[i], "payload.policies[" + std::to_string(i) + "]");
        v.policies.push_back((*list)[i]);
    }
    v.cycles = integer_field(p, "cycles", "payload", v.cycles, 1, 100000);
    v.stride = integer_field(p, "stride", "payload", v.stride, 1, 100000);
    return v;
}

}  // namespace

bool Override::operator==(const Override& o) const {
    if (deputy != o.deputy || entries.size() != o.entries.size()) return false;
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].t != o.entries[i].t || !(entries[i].command == o.entries[i].command)) return false;
    return true;
}

std::string encode(const Envelope& e) {
    Json j;
    j["type"] = e.type;
    j["session"] = e.session;
    j["seq"] = e.seq;
    j["payload"] = e.payload;
    return j.dump();
}

std::string encode_raw(std::string_view type, std::string_view session, std::uint64_t seq,
                       std::string_view payload_json) {
    std::string out = "{\"type\":";
    out += Json(std::string(type)).dump();
    out += ",\"session\":";
    out += Json(std::string(session)).dump();
    out += ",\"seq\":";
    out += std::to_string(seq);
    out += ",\"payload\":";
    out += payload_json;
    out += '}';
    return out;
}

Envelope decode(std::string_view line) {
    Json j;
    try {
        j = Json::parse(line.begin(), line.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError("", std::string("not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ProtocolError("", "message must be an object");
    for (const auto& [key, value] : j.items())
        if (key != "type" && key != "session" && key != "seq" && key != "payload")
            throw ProtocolError(key, "unknown envelope field");
    Envelope e;
    const Json* type = find(j, "type");
    if (!type || !type->is_string() || type->get<std::string>().empty())
        throw ProtocolError("type", "expected a non-empty string");
    e.type = type->get<std::string>();
    if (const Json* s = find(j, "session")) {
        if (!s->is_string()) throw ProtocolError("session", "expected a string");
        e.session = s->get<std::string>();
    }
    if (const Json* s = find(j, "seq")) {
        if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<long long>() >= 0))
            throw ProtocolError("seq", "expected a non-negative integer");
        e.seq = s->get<std::uint64_t>();
    }
    if (const Json* p = find(j, "payload")) {
        if (!p->is_object()) throw ProtocolError("payload", "expected an object");
        e.payload = *p;
    }
    return e;
}

std::string_view command_type(const OperatorCommand& c) { return kTypes[c.index()]; }

bool is_command_type(std::string_view type) {
    return std::find(std::begin(kTypes), std::end(kTypes), type) != std::end(kTypes);
}

Json command_payload(const OperatorCommand& c) {
    Json p = Json::object();
    std::visit(
        [&](const auto& cmd) {
            using T = std::decay_t<decltype(cmd)>;
            if constexpr (std::is_same_v<T, SetConstraint>) {
                if (cmd.id) p["id"] = std::string(constraint_name(*cmd.id));
                if (cmd.enabled) p["enabled"] = *cmd.enabled;
                if (cmd.priority) p["priority"] = *cmd.priority;
                if (!cmd.params.empty()) {
                    Json params = Json::object();
                    for (const auto& [name, value] : cmd.params) params[name] = value;
                    p["params"] = params;
                }
                if (!cmd.ranking.empty()) {
                    Json r = Json::array();
                    for (ConstraintId id : cmd.ranking) r.push_back(std::string(constraint_name(id)));
                    p["ranking"] = r;
                }
            } else if constexpr (std::is_same_v<T, SelectPolicy>) {
                p["deputy"] = cmd.deputy;
                p["policy"] = cmd.policy;
            } else if constexpr (std::is_same_v<T, Override>) {
                p["deputy"] = cmd.deputy;
                Json entries = Json::array();
                for (const TimedCommand& e : cmd.entries)
                    entries.push_back({{"t", e.t}, {"command", command_to_json(e.command)}});
                p["entries"] = entries;
            } else if constexpr (std::is_same_v<T, Step>) {
                p["n"] = cmd.n;
            } else if constexpr (std::is_same_v<T, Preview>) {
                p["deputy"] = cmd.deputy;
                Json list = Json::array();
                for (const Json& ref : cmd.policies) list.push_back(ref);
                p["policies"] = list;
                p["cycles"] = cmd.cycles;
                p["stride"] = cmd.stride;
            }
        },
        c);
    return p;
}

OperatorCommand parse_command(std::string_view type, const Json& payload) {
    if (type == "set_constraint") return parse_set_constraint(payload);
    if (type == "select_policy") {
        require_keys(payload, "payload", {"deputy", "policy"});
        SelectPolicy s;
        s.deputy = static_cast<int>(integer_field(payload, "deputy", "payload", std::nullopt, 0, 1 << 20));
        const Json* ref = find(payload, "policy");
        if (!ref) throw ProtocolError("payload.policy", "required field is missing");
        check_policy_ref(*ref, "payload.policy");
        s.policy = *ref;
        return s;
    }
    if (type == "override") return parse_override(payload);
    if (type == "step") {
        require_keys(payload, "payload", {"n"});
        return Step{integer_field(payload, "n", "payload", 1L, 1, 10'000'000)};
    }
    if (type == "preview") return parse_preview(payload);
    if (type == "start" || type == "pause" || type == "resume" || type == "request_snapshot") {
        require_keys(payload, "payload", {});
        if (type == "start") return Start{};
        if (type == "pause") return Pause{};
        if (type == "resume") return Resume{};
        return RequestSnapshot{};
    }
    throw ProtocolError("type", "unknown command '" + std::string(type) + "'");
}

PolicySpec resolve_policy(const Json& ref, const Catalog& catalog) {
    if (ref.is_string()) return policy_from_json(Json{{"kind", ref.get<std::string>()}}, "policy", ".", catalog);
    if (ref.is_object()) return policy_from_json(ref, "policy", ".", catalog);
    throw ScenarioError("policy", "expected a policy id or policy object");
}

}  // namespace orbitguard::gateway
