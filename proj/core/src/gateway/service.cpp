#include "orbitguard/gateway/service.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <charconv>
#include <deque>
#include <map>

namespace orbitguard::gateway {

ServiceConfig resolve_service_config(std::optional<int> port_flag, std::optional<std::string> log_dir_flag,
                                     const EnvLookup& env) {
    ServiceConfig cfg;
    if (port_flag) {
        cfg.port = *port_flag;
    } else if (const char* p = env("ORBITGUARD_PORT"); p && *p) {
        const std::string_view text(p);
        int port = -1;
        const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), port);
        if (ec != std::errc() || end != text.data() + text.size())
            throw ConfigError("ORBITGUARD_PORT is not a port number: '" + std::string(text) + "'");
        cfg.port = port;
    }
    if (cfg.port < 0 || cfg.port > 65535) throw ConfigError("port must be in [0, 65535]");
    if (log_dir_flag) {
        cfg.gateway.log_dir = *log_dir_flag;
    } else if (const char* d = env("ORBITGUARD_LOG_DIR"); d && *d) {
        cfg.gateway.log_dir = d;
    }
    return cfg;
}

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

constexpr std::string_view kSocketPath = "/v1/socket";
// Stream lines are pulled from a subscription only while the socket keeps up; beyond this the
// subscription's own bounded queue absorbs (and eventually drops) the backlog.
constexpr std::size_t kWriteHighWater = 64;

struct Context {
    Gateway& gateway;
    net::thread_pool& workers;
};

class SocketConnection : public std::enable_shared_from_this<SocketConnection> {
  public:
    SocketConnection(tcp::socket socket, Context& ctx) : ws_(std::move(socket)), ctx_(ctx) {}

    ~SocketConnection() {
        for (auto& [id, sub] : subs_) sub->close();
    }

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.text(true);
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
            if (!ec) self->read();
        });
    }

  private:
    void read() {
        ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec) {
            drop_subscriptions();
            return;
        }
        std::string msg = beast::buffers_to_string(in_.data());
        in_.consume(in_.size());
        // One request at a time per socket, so commands apply and reply in arrival order.
        net::post(ctx_.workers, [self = shared_from_this(), msg = std::move(msg)] {
            std::string reply = self->handle(msg);
            net::post(self->ws_.get_executor(), [self, reply = std::move(reply)]() mutable {
                self->send(std::move(reply));
                self->pump();
                self->read();
            });
        });
    }

    // Runs on a worker thread.
    std::string handle(const std::string& msg) {
        Envelope req;
        try {
            req = decode(msg);
        } catch (const ProtocolError& e) {
            return encode(error_reply(req, "malformed", e.what(), e.path()));
        }
        if (req.type == "subscribe") {
            auto sub = ctx_.gateway.subscribe(req.session);
            if (!sub) return encode(error_reply(req, "unknown_session", "no session '" + req.session + "'", "session"));
            sub->set_listener([weak = weak_from_this()] {
                if (auto self = weak.lock()) net::post(self->ws_.get_executor(), [self] { self->pump(); });
            });
            std::shared_ptr<Subscription> previous;
            {
                std::lock_guard lk(subs_mu_);
                previous = std::exchange(subs_[req.session], sub);
            }
            if (previous) previous->close();
            return encode({"subscribed", req.session, req.seq, Json{{"session", req.session}}});
        }
        if (req.type == "unsubscribe") {
            std::shared_ptr<Subscription> sub;
            {
                std::lock_guard lk(subs_mu_);
                if (auto it = subs_.find(req.session); it != subs_.end()) {
                    sub = it->second;
                    subs_.erase(it);
                }
            }
            if (!sub) return encode(error_reply(req, "not_subscribed", "not subscribed to '" + req.session + "'", "session"));
            sub->set_listener({});
            sub->close();
            return encode({"unsubscribed", req.session, req.seq, Json{{"session", req.session}}});
        }
        return encode(ctx_.gateway.handle(req));
    }

    void pump() {
        std::vector<std::shared_ptr<Subscription>> subs;
        {
            std::lock_guard lk(subs_mu_);
            for (auto it = subs_.begin(); it != subs_.end();) {
                if (it->second->finished()) {
                    it = subs_.erase(it);
                } else {
                    subs.push_back(it->second);
                    ++it;
                }
            }
        }
        for (const auto& sub : subs)
            while (out_.size() < kWriteHighWater) {
                auto line = sub->next(std::chrono::milliseconds(0));
                if (!line) break;
                send(std::move(*line));
            }
    }

    void send(std::string msg) {
        out_.push_back(std::move(msg));
        if (!writing_) write();
    }

    void write() {
        writing_ = true;
        ws_.async_write(net::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->drop_subscriptions();
                return;
            }
            self->out_.pop_front();
            self->pump();
            if (self->out_.empty()) self->writing_ = false;
            else self->write();
        });
    }

    void drop_subscriptions() {
        std::map<std::string, std::shared_ptr<Subscription>> subs;
        {
            std::lock_guard lk(subs_mu_);
            subs.swap(subs_);
        }
        for (auto& [id, sub] : subs) {
            sub->set_listener({});
            sub->close();
        }
    }

    websocket::stream<beast::tcp_stream> ws_;
    Context& ctx_;
    beast::flat_buffer in_;
    std::deque<std::string> out_;
    bool writing_ = false;
    std::mutex subs_mu_;
    std::map<std::string, std::shared_ptr<Subscription>> subs_;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
  public:
    HttpConnection(tcp::socket socket, Context& ctx) : stream_(std::move(socket)), ctx_(ctx) {}

    void run() {
        net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->read(); });
    }

  private:
    void read() {
        parser_.emplace();
        parser_->body_limit(16 * 1024 * 1024);
        stream_.expires_after(std::chrono::seconds(120));
        http::async_read(stream_, buffer_, *parser_,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        http::request<http::string_body> req = parser_->release();
        if (websocket::is_upgrade(req) && std::string_view(req.target().data(), req.target().size()) == kSocketPath) {
            stream_.expires_never();
            std::make_shared<SocketConnection>(stream_.release_socket(), ctx_)->run(std::move(req));
            return;
        }
        net::post(ctx_.workers, [self = shared_from_this(), req = std::move(req)] {
            auto res = std::make_shared<http::response<http::string_body>>(self->respond(req));
            net::post(self->stream_.get_executor(), [self, res] { self->write(res); });
        });
    }

    http::response<http::string_body> respond(const http::request<http::string_body>& req) {
        http::response<http::string_body> res{http::status::ok, req.version()};
        res.set(http::field::content_type, "application/json");
        res.keep_alive(req.keep_alive());
        const std::string_view target(req.target().data(), req.target().size());
        if (target == "/v1/messages" && req.method() == http::verb::post) {
            res.body() = ctx_.gateway.handle_line(req.body()) + "\n";
        } else if (target == "/v1/schema" && req.method() == http::verb::get) {
            res.body() = ctx_.gateway.handle_line(R"({"type":"get_schema"})") + "\n";
        } else {
            const bool known = target == "/v1/messages" || target == "/v1/schema" || target == kSocketPath;
            res.result(known ? http::status::method_not_allowed : http::status::not_found);
            res.body() = encode(error_reply({"http", "", 0, Json::object()}, known ? "method_not_allowed" : "not_found",
                                            std::string(req.method_string()) + " " + std::string(target), "target")) +
                         "\n";
        }
        res.prepare_payload();
        return res;
    }

    void write(std::shared_ptr<http::response<http::string_body>> res) {
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (!res->keep_alive()) {
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
                return;
            }
            self->read();
        });
    }

    beast::tcp_stream stream_;
    Context& ctx_;
    beast::flat_buffer buffer_;
    std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

struct Service::Impl {
    explicit Impl(ServiceConfig c) : config(std::move(c)), gateway(config.gateway), ctx{gateway, workers} {}

    // Destroyed in reverse: sessions (and their producer threads) go before the I/O context.
    ServiceConfig config;
    net::io_context ioc;
    net::thread_pool workers{4};
    Gateway gateway;
    Context ctx;
    tcp::acceptor acceptor{ioc};
    std::vector<std::thread> io_threads;
    int port = -1;
    bool running = false;
    std::mutex mu;
    std::condition_variable stopped_cv;
    bool stopped = false;

    void accept() {
        acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;  // acceptor closed
            std::make_shared<HttpConnection>(std::move(socket), ctx)->run();
            accept();
        });
    }
};

Service::Service(ServiceConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

Service::~Service() { stop(); }

void Service::start() {
    Impl& m = *impl_;
    if (m.running) return;
    beast::error_code ec;
    const auto address = net::ip::make_address(m.config.host, ec);
    if (ec) throw ServiceError("invalid host '" + m.config.host + "'");
    const tcp::endpoint endpoint{address, static_cast<unsigned short>(m.config.port)};
    m.acceptor.open(endpoint.protocol(), ec);
    if (!ec) m.acceptor.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) m.acceptor.bind(endpoint, ec);
    if (!ec) m.acceptor.listen(net::socket_base::max_listen_connections, ec);
    if (ec) {
        beast::error_code ignored;
        m.acceptor.close(ignored);
        throw ServiceError("cannot listen on " + m.config.host + ":" + std::to_string(m.config.port) + ": " +
                           ec.message());
    }
    m.port = m.acceptor.local_endpoint().port();
    m.accept();
    for (int i = 0; i < 2; ++i) m.io_threads.emplace_back([&m] { m.ioc.run(); });
    m.running = true;
}

void Service::stop() {
    Impl& m = *impl_;
    if (m.running) {
        net::post(m.ioc, [&m] {
            beast::error_code ignored;
            m.acceptor.close(ignored);
        });
        m.ioc.stop();
        for (auto& t : m.io_threads) t.join();
        m.io_threads.clear();
        m.workers.join();
        m.running = false;
    }
    {
        std::lock_guard lk(m.mu);
        m.stopped = true;
    }
    m.stopped_cv.notify_all();
}

void Service::wait() {
    std::unique_lock lk(impl_->mu);
    impl_->stopped_cv.wait(lk, [&] { return impl_->stopped; });
}

int Service::port() const { return impl_->port; }

Gateway& Service::gateway() { return impl_->gateway; }

}  // namespace orbitguard::gateway
