#pragma once

#include "orbitguard/gateway/session.hpp"

#include <map>

namespace orbitguard::gateway {

struct GatewayConfig {
    std::string log_dir;  // empty: no telemetry files
    std::size_t subscriber_buffer = 4096;
};

/// Session registry and request router, independent of the transport.
///
/// Requests: create_session, list_sessions, close_session, get_schema, and every operator
/// command type (addressed by envelope.session). Replies echo the request seq and are one of
/// session_created, sessions, closed, schema, ack, snapshot, preview, rejected, error.
class Gateway {
  public:
    explicit Gateway(GatewayConfig config = {});

    Envelope handle(const Envelope& request);
    /// Decodes, handles and encodes; malformed input becomes an error reply.
    std::string handle_line(std::string_view line);

    std::shared_ptr<Session> find(const std::string& id) const;
    /// nullptr when the session does not exist.
    std::shared_ptr<Subscription> subscribe(const std::string& id);
    std::vector<std::shared_ptr<Session>> sessions() const;
    const GatewayConfig& config() const { return config_; }

  private:
    Envelope create(const Envelope& req);

    GatewayConfig config_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    long next_id_ = 1;
};

Envelope error_reply(const Envelope& req, std::string_view code, const std::string& message,
                     const std::string& field = "");

}  // namespace orbitguard::gateway
