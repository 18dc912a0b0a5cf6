#pragma once

#include "orbitguard/gateway/protocol.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>

namespace orbitguard::gateway {

enum class RunState { Configured, Running, Paused, Finished, Aborted };
std::string_view run_state_name(RunState s);

struct CommandResult {
    bool accepted = false;
    long effective_cycle = -1;  // first cycle computed with the command in force
    std::string reason;
    std::string field;
    Json detail = Json::object();
};

/// One subscriber's bounded queue of encoded envelopes. The producer never blocks: when the
/// queue is full, records are dropped and a single gap marker is queued once room returns.
class Subscription {
  public:
    Subscription(std::string session, std::size_t capacity);

    /// Waits up to timeout. nullopt on timeout, or once closed and drained.
    std::optional<std::string> next(std::chrono::milliseconds timeout);
    bool finished() const;
    long dropped() const;

    bool closed() const;

    void push(std::string line, std::uint64_t seq);
    void close();
    /// Called from the producer thread after each push and on close, outside the queue lock.
    void set_listener(std::function<void()> listener);

  private:
    std::string gap_marker() const;
    void notify();

    std::string session_;
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::string> queue_;
    long pending_gap_ = 0;
    std::uint64_t gap_first_ = 0, gap_last_ = 0;
    long dropped_ = 0;
    bool closed_ = false;
    std::function<void()> listener_;
};

struct SessionOptions {
    double pace = 0.0;  // simulated seconds per wall second; 0 runs unpaced
    std::string log_path;
    std::size_t subscriber_buffer = 4096;
};

/// A live episode behind a driver thread that owns all simulation state. Commands are queued
/// and applied between cycles.
class Session {
  public:
    /// Throws ScenarioError for an invalid scenario, TelemetryError for an unwritable log.
    Session(std::string id, Scenario scenario, SessionOptions options = {});
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    const std::string& id() const { return id_; }
    const std::string& scenario_name() const { return scenario_name_; }
    const std::string& log_path() const { return options_.log_path; }
    RunState state() const { return state_.load(); }
    long cycle() const { return cycle_.load(); }
    long total_cycles() const { return total_cycles_; }

    /// Blocks until the driver has applied (or rejected) the command at a cycle boundary.
    CommandResult submit(const OperatorCommand& cmd);
    /// The first record delivered is a snapshot of the session at the boundary of joining.
    std::shared_ptr<Subscription> subscribe();
    bool wait_done(std::chrono::milliseconds timeout) const;
    /// Waits until requested steps have run and the episode is not free-running.
    bool wait_idle(std::chrono::milliseconds timeout) const;

  private:
    class Broadcaster : public TelemetrySink {
      public:
        explicit Broadcaster(std::string session) : session_(std::move(session)) {}
        void write(std::string_view line) override;
        void add(std::shared_ptr<Subscription> s) { subs_.push_back(std::move(s)); }
        std::uint64_t records() const { return records_; }
        void close_all();

      private:
        std::string session_;
        std::vector<std::shared_ptr<Subscription>> subs_;
        std::uint64_t records_ = 0;
    };

    template <typename F>
    auto at_boundary(F&& f) -> decltype(f());
    void drive();
    CommandResult apply(const OperatorCommand& cmd);
    Json snapshot_json() const;
    void set_state(RunState s);

    std::string id_;
    std::string scenario_name_;
    SessionOptions options_;
    Episode episode_;
    long total_cycles_ = 0;
    std::optional<FileSink> file_;
    Broadcaster broadcast_;

    std::atomic<RunState> state_{RunState::Configured};
    std::atomic<long> cycle_{0};
    long steps_left_ = 0;
    std::optional<std::chrono::steady_clock::time_point> deadline_;

    mutable std::mutex mu_;
    std::condition_variable cv_;
    mutable std::condition_variable done_cv_;
    std::deque<std::function<void()>> tasks_;
    bool stop_ = false;
    std::thread driver_;
};

}  // namespace orbitguard::gateway
