#pragma once

#include "orbitguard/episode.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace orbitguard::gateway {

inline constexpr std::string_view kProtocolVersion = "orbitguard.wire/1";

/// Malformed message or payload; path() names the offending member ("payload.entries[2].t").
class ProtocolError : public ScenarioError {
  public:
    using ScenarioError::ScenarioError;
};

/// {type, session, seq, payload}; serialized on one line in that member order.
struct Envelope {
    std::string type;
    std::string session;
    std::uint64_t seq = 0;
    Json payload = Json::object();

    bool operator==(const Envelope&) const = default;
};

std::string encode(const Envelope& e);
/// Throws ProtocolError for anything but a well-formed envelope.
Envelope decode(std::string_view line);
/// Same layout as encode, with an already-serialized payload spliced verbatim. Telemetry records
/// travel this way so the payload bytes equal the file line.
std::string encode_raw(std::string_view type, std::string_view session, std::uint64_t seq,
                       std::string_view payload_json);

// Operator commands. Optional members absent from the payload leave the setting unchanged.

struct SetConstraint {
    std::optional<ConstraintId> id;
    std::optional<bool> enabled;
    std::optional<int> priority;
    std::vector<std::pair<std::string, double>> params;  // by schema name, payload order
    std::vector<ConstraintId> ranking;                   // full re-rank: ranking[i] gets priority i + 1

    bool operator==(const SetConstraint&) const = default;
};

/// policy is a built-in id ("ScriptedDock", "ScriptedInspect", "RandomPolicy") or a full
/// policy object in the scenario-file form.
struct SelectPolicy {
    int deputy = 0;
    Json policy;

    bool operator==(const SelectPolicy&) const = default;
};

struct Override {
    int deputy = 0;
    std::vector<TimedCommand> entries;

    bool operator==(const Override& o) const;
};

struct Start {
    bool operator==(const Start&) const = default;
};
struct Pause {
    bool operator==(const Pause&) const = default;
};
struct Resume {
    bool operator==(const Resume&) const = default;
};
struct Step {
    long n = 1;
    bool operator==(const Step&) const = default;
};
struct RequestSnapshot {
    bool operator==(const RequestSnapshot&) const = default;
};
/// Read-only look-ahead: one sink-less rollout per candidate policy.
struct Preview {
    int deputy = 0;
    std::vector<Json> policies;
    long cycles = 600;
    long stride = 10;  // keep every stride-th state

    bool operator==(const Preview&) const = default;
};

using OperatorCommand =
    std::variant<SetConstraint, SelectPolicy, Override, Start, Pause, Resume, Step, RequestSnapshot, Preview>;

std::string_view command_type(const OperatorCommand& c);
Json command_payload(const OperatorCommand& c);
bool is_command_type(std::string_view type);
/// Throws ScenarioError (often ProtocolError) with a payload field path.
OperatorCommand parse_command(std::string_view type, const Json& payload);

/// Resolves a SelectPolicy/Preview policy reference. Throws ScenarioError.
PolicySpec resolve_policy(const Json& ref, const Catalog& catalog);

}  // namespace orbitguard::gateway
