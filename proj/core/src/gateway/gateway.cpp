#include "orbitguard/gateway/gateway.hpp"

#include "orbitguard/scenario_io.hpp"

#include <filesystem>

namespace orbitguard::gateway {

Envelope error_reply(const Envelope& req, std::string_view code, const std::string& message,
                     const std::string& field) {
    return {"error", req.session, req.seq, Json{{"code", std::string(code)}, {"field", field}, {"message", message}}};
}

Gateway::Gateway(GatewayConfig config) : config_(std::move(config)) {}

std::shared_ptr<Session> Gateway::find(const std::string& id) const {
    std::lock_guard lk(mu_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<Session>> Gateway::sessions() const {
    std::lock_guard lk(mu_);
    std::vector<std::shared_ptr<Session>> out;
    for (const auto& [id, s] : sessions_) out.push_back(s);
    return out;
}

std::shared_ptr<Subscription> Gateway::subscribe(const std::string& id) {
    const auto s = find(id);
    return s ? s->subscribe() : nullptr;
}

Envelope Gateway::create(const Envelope& req) {
    const Json& p = req.payload;
    try {
        require_keys(p, "payload", {"scenario", "scenario_path", "seed", "pace", "start"});
    } catch (const ScenarioError& e) {
        return error_reply(req, "invalid_payload", e.what(), e.path());
    }
    const bool inline_doc = p.contains("scenario"), from_path = p.contains("scenario_path");
    if (inline_doc == from_path)
        return error_reply(req, "invalid_payload", "give exactly one of scenario or scenario_path", "payload.scenario");

    Scenario scenario;
    try {
        if (inline_doc) {
            scenario = parse_scenario(p.at("scenario"), ".");
        } else {
            const Json& path = p.at("scenario_path");
            if (!path.is_string()) throw ScenarioError("payload.scenario_path", "expected a string");
            scenario = load_scenario(path.get<std::string>());
        }
        if (const auto it = p.find("seed"); it != p.end()) {
            if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0))
                throw ScenarioError("payload.seed", "expected a non-negative integer");
            scenario.seed = it->get<std::uint64_t>();
        }
    } catch (const ScenarioError& e) {
        const std::string field = inline_doc && !e.path().starts_with("payload")
                                      ? (e.path().empty() ? "payload.scenario" : "payload.scenario." + e.path())
                                      : e.path();
        return error_reply(req, "invalid_scenario", e.what(), field);
    }

    SessionOptions opts;
    opts.subscriber_buffer = config_.subscriber_buffer;
    try {
        opts.pace = number_field(p, "pace", "payload", 0.0);
        if (opts.pace < 0.0) throw ScenarioError("payload.pace", "must be >= 0");
    } catch (const ScenarioError& e) {
        return error_reply(req, "invalid_payload", e.what(), e.path());
    }

    std::string id;
    {
        std::lock_guard lk(mu_);
        id = "s" + std::to_string(next_id_++);
    }
    if (!config_.log_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(config_.log_dir, ec);
        opts.log_path = (std::filesystem::path(config_.log_dir) / (id + ".ndjson")).string();
    }
    std::shared_ptr<Session> session;
    try {
        session = std::make_shared<Session>(id, std::move(scenario), opts);
    } catch (const Error& e) {
        return error_reply(req, "session_failed", e.what());
    }
    {
        std::lock_guard lk(mu_);
        sessions_[id] = session;
    }
    if (p.value("start", false)) session->submit(Start{});
    return {"session_created", id, req.seq,
            Json{{"session", id},
                 {"scenario", session->scenario_name()},
                 {"state", std::string(run_state_name(session->state()))},
                 {"total_cycles", session->total_cycles()},
                 {"log", session->log_path()}}};
}

Envelope Gateway::handle(const Envelope& req) {
    if (req.type == "create_session") return create(req);
    if (req.type == "get_schema")
        return {"schema", req.session, req.seq,
                Json{{"protocol", std::string(kProtocolVersion)},
                     {"telemetry", std::string(kTelemetrySchema)},
                     {"scenario", std::string(kScenarioSchema)},
                     {"constraints", catalog_schema_json()}}};
    if (req.type == "list_sessions") {
        Json list = Json::array();
        for (const auto& s : sessions())
            list.push_back({{"session", s->id()},
                            {"scenario", s->scenario_name()},
                            {"state", std::string(run_state_name(s->state()))},
                            {"cycle", s->cycle()},
                            {"total_cycles", s->total_cycles()}});
        return {"sessions", req.session, req.seq, Json{{"sessions", list}}};
    }
    if (req.type == "close_session") {
        std::shared_ptr<Session> gone;
        {
            std::lock_guard lk(mu_);
            const auto it = sessions_.find(req.session);
            if (it != sessions_.end()) {
                gone = it->second;
                sessions_.erase(it);
            }
        }
        if (!gone) return error_reply(req, "unknown_session", "no session '" + req.session + "'", "session");
        return {"closed", req.session, req.seq, Json{{"session", req.session}}};
    }
    if (!is_command_type(req.type)) return error_reply(req, "unknown_type", "unknown message type '" + req.type + "'", "type");

    OperatorCommand cmd;
    try {
        cmd = parse_command(req.type, req.payload);
    } catch (const ScenarioError& e) {
        return error_reply(req, "invalid_payload", e.what(), e.path());
    }
    const auto session = find(req.session);
    if (!session) return error_reply(req, "unknown_session", "no session '" + req.session + "'", "session");

    const CommandResult r = session->submit(cmd);
    const std::string state(run_state_name(session->state()));
    if (!r.accepted)
        return {"rejected", req.session, req.seq,
                Json{{"command", req.type}, {"reason", r.reason}, {"field", r.field}, {"state", state}}};
    if (std::holds_alternative<RequestSnapshot>(cmd)) return {"snapshot", req.session, req.seq, r.detail};
    Json payload{{"command", req.type}, {"effective_cycle", r.effective_cycle}, {"state", state}};
    for (const auto& [k, v] : r.detail.items()) payload[k] = v;
    return {std::holds_alternative<Preview>(cmd) ? "preview" : "ack", req.session, req.seq, payload};
}

std::string Gateway::handle_line(std::string_view line) {
    Envelope req;
    try {
        req = decode(line);
    } catch (const ProtocolError& e) {
        return encode(error_reply(req, "malformed", e.what(), e.path()));
    }
    return encode(handle(req));
}

}  // namespace orbitguard::gateway
