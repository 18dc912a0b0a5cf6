#pragma once

#include "orbitguard/gateway/gateway.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace orbitguard::gateway {

class ServiceError : public Error {
  public:
    using Error::Error;
};

inline constexpr int kDefaultPort = 8470;

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = kDefaultPort;  // 0 picks a free port
    GatewayConfig gateway;
};

using EnvLookup = std::function<const char*(const char*)>;

/// CLI flags win over ORBITGUARD_PORT / ORBITGUARD_LOG_DIR, which win over defaults.
/// Throws ConfigError for a malformed port.
ServiceConfig resolve_service_config(std::optional<int> port_flag, std::optional<std::string> log_dir_flag,
                                     const EnvLookup& env);

/// Network transport for the gateway, one port:
///   POST /v1/messages   one request envelope in, one reply envelope out
///   GET  /v1/schema     the get_schema reply
///   GET  /v1/socket     WebSocket; one envelope per text message in both directions. Accepts every
///                       request type plus subscribe/unsubscribe (envelope.session); a subscription
///                       streams snapshot, then frame/gap/end envelopes, interleaved with replies.
class Service {
  public:
    explicit Service(ServiceConfig config);
    ~Service();

    /// Binds and serves on background threads. Throws ServiceError when the port is unavailable.
    void start();
    void stop();
    /// Blocks until stop() is called from elsewhere.
    void wait();
    int port() const;
    Gateway& gateway();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace orbitguard::gateway
