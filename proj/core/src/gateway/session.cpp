#include "orbitguard/gateway/session.hpp"

#include <future>

namespace orbitguard::gateway {

std::string_view run_state_name(RunState s) {
    switch (s) {
        case RunState::Configured: return "Configured";
        case RunState::Running: return "Running";
        case RunState::Paused: return "Paused";
        case RunState::Finished: return "Finished";
        case RunState::Aborted: return "Aborted";
    }
    return "Configured";
}

Subscription::Subscription(std::string session, std::size_t capacity)
    : session_(std::move(session)), capacity_(std::max<std::size_t>(capacity, 2)) {}

std::string Subscription::gap_marker() const {
    return encode({"gap", session_, gap_last_,
                   Json{{"missed", pending_gap_}, {"first_seq", gap_first_}, {"last_seq", gap_last_}}});
}

void Subscription::push(std::string line, std::uint64_t seq) {
    {
        std::lock_guard lk(mu_);
        if (closed_) return;
        if (pending_gap_ > 0 && queue_.size() + 2 <= capacity_) {
            queue_.push_back(gap_marker());
            pending_gap_ = 0;
        }
        if (pending_gap_ == 0 && queue_.size() < capacity_) {
            queue_.push_back(std::move(line));
        } else {
            if (pending_gap_ == 0) gap_first_ = seq;
            gap_last_ = seq;
            ++pending_gap_;
            ++dropped_;
        }
    }
    cv_.notify_one();
    notify();
}

void Subscription::set_listener(std::function<void()> listener) {
    std::lock_guard lk(mu_);
    listener_ = std::move(listener);
}

void Subscription::notify() {
    std::function<void()> f;
    {
        std::lock_guard lk(mu_);
        f = listener_;
    }
    if (f) f();
}

bool Subscription::closed() const {
    std::lock_guard lk(mu_);
    return closed_;
}

void Subscription::close() {
    {
        std::lock_guard lk(mu_);
        if (closed_) return;
        if (pending_gap_ > 0) queue_.push_back(gap_marker());
        pending_gap_ = 0;
        closed_ = true;
    }
    cv_.notify_all();
    notify();
}

std::optional<std::string> Subscription::next(std::chrono::milliseconds timeout) {
    std::unique_lock lk(mu_);
    cv_.wait_for(lk, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    std::string out = std::move(queue_.front());
    queue_.pop_front();
    return out;
}

bool Subscription::finished() const {
    std::lock_guard lk(mu_);
    return closed_ && queue_.empty();
}

long Subscription::dropped() const {
    std::lock_guard lk(mu_);
    return dropped_;
}

void Session::Broadcaster::write(std::string_view line) {
    // Records serialize with "kind" first; its value names the stream message type.
    std::string_view type = "frame";
    if (line.starts_with(R"({"kind":"header")")) type = "header";
    else if (line.starts_with(R"({"kind":"end")")) type = "end";
    const std::uint64_t seq = records_++;
    const std::string msg = encode_raw(type, session_, seq, line);
    std::erase_if(subs_, [](const auto& s) { return s->closed(); });
    for (const auto& s : subs_) s->push(msg, seq);
    if (type == "end") close_all();
}

void Session::Broadcaster::close_all() {
    for (const auto& s : subs_) s->close();
    subs_.clear();
}

Session::Session(std::string id, Scenario scenario, SessionOptions options)
    : id_(std::move(id)),
      scenario_name_(scenario.name),
      options_(std::move(options)),
      episode_(std::move(scenario)),
      total_cycles_(episode_.total_cycles()),
      broadcast_(id_) {
    if (!options_.log_path.empty()) {
        file_.emplace(options_.log_path);
        episode_.add_sink(*file_);
    }
    episode_.add_sink(broadcast_);
    episode_.start();
    driver_ = std::thread([this] { drive(); });
}

Session::~Session() {
    {
        std::lock_guard lk(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    driver_.join();
    broadcast_.close_all();
}

template <typename F>
auto Session::at_boundary(F&& f) -> decltype(f()) {
    using R = decltype(f());
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(f));
    std::future<R> result = task->get_future();
    {
        std::lock_guard lk(mu_);
        if (stop_) throw Error("session " + id_ + " is closed");
        tasks_.emplace_back([task] { (*task)(); });
    }
    cv_.notify_all();
    return result.get();
}

CommandResult Session::submit(const OperatorCommand& cmd) {
    try {
        return at_boundary([&] { return apply(cmd); });
    } catch (const std::future_error&) {
        return {false, -1, "session " + id_ + " closed before the command was applied", "", Json::object()};
    } catch (const Error& e) {
        return {false, -1, e.what(), "", Json::object()};
    }
}

std::shared_ptr<Subscription> Session::subscribe() {
    auto sub = std::make_shared<Subscription>(id_, options_.subscriber_buffer);
    at_boundary([&] {
        const std::uint64_t seq = broadcast_.records() == 0 ? 0 : broadcast_.records() - 1;
        sub->push(encode({"snapshot", id_, seq, snapshot_json()}), seq);
        if (episode_.done()) {
            sub->close();
        } else {
            broadcast_.add(sub);
        }
        return true;
    });
    return sub;
}

bool Session::wait_idle(std::chrono::milliseconds timeout) const {
    std::unique_lock lk(mu_);
    return done_cv_.wait_for(lk, timeout, [&] {
        const RunState s = state_.load();
        return s != RunState::Running && steps_left_ == 0 && tasks_.empty();
    });
}

bool Session::wait_done(std::chrono::milliseconds timeout) const {
    std::unique_lock lk(mu_);
    return done_cv_.wait_for(lk, timeout, [&] {
        const RunState s = state_.load();
        return s == RunState::Finished || s == RunState::Aborted;
    });
}

void Session::set_state(RunState s) {
    state_.store(s);
    if (s == RunState::Running) deadline_.reset();
}

Json Session::snapshot_json() const {
    Json j;
    j["state"] = std::string(run_state_name(state_.load()));
    j["cycle"] = episode_.cycle();
    j["total_cycles"] = total_cycles_;
    j["time"] = episode_.time();
    j["header"] = header_to_json(episode_.header());
    j["catalog"] = catalog_to_json(episode_.catalog());
    Json policies = Json::array();
    for (std::size_t i = 0; i < episode_.scenario().deputies.size(); ++i)
        policies.push_back(policy_to_json(episode_.policy(static_cast<int>(i))));
    j["policies"] = policies;
    j["last_frame"] = episode_.last_frame() ? frame_to_json(*episode_.last_frame()) : Json(nullptr);
    j["end"] = episode_.footer() ? footer_to_json(*episode_.footer()) : Json(nullptr);
    return j;
}

CommandResult Session::apply(const OperatorCommand& cmd) {
    CommandResult r;
    r.effective_cycle = episode_.cycle();
    const RunState s = state_.load();
    auto reject = [&](std::string reason, std::string field = "") {
        r.accepted = false;
        r.reason = std::move(reason);
        r.field = std::move(field);
        return r;
    };
    const bool ended = s == RunState::Finished || s == RunState::Aborted;
    if (ended && !std::holds_alternative<RequestSnapshot>(cmd))
        return reject("session is " + std::string(run_state_name(s)));

    try {
        if (const auto* c = std::get_if<SetConstraint>(&cmd)) {
            Catalog next = episode_.catalog();
            if (c->id) {
                Json edit = Json::object();
                if (c->enabled) edit["enabled"] = *c->enabled;
                if (c->priority) edit["priority"] = *c->priority;
                if (!c->params.empty()) {
                    Json params = Json::object();
                    for (const auto& [name, value] : c->params) params[name] = value;
                    edit["params"] = params;
                }
                apply_constraint_edit(next[*c->id], edit, "payload");
            }
            for (std::size_t i = 0; i < c->ranking.size(); ++i) next[c->ranking[i]].priority = static_cast<int>(i + 1);
            check_unique_priorities(next, "payload");
            episode_.set_catalog(next);
            r.detail["catalog"] = catalog_to_json(episode_.catalog());
        } else if (const auto* c = std::get_if<SelectPolicy>(&cmd)) {
            episode_.select_policy(c->deputy, resolve_policy(c->policy, episode_.catalog()));
            r.detail["policy"] = policy_to_json(episode_.policy(c->deputy));
        } else if (const auto* c = std::get_if<Override>(&cmd)) {
            episode_.schedule_override(c->deputy, c->entries);
        } else if (std::holds_alternative<Start>(cmd)) {
            if (s != RunState::Configured) return reject("session already started");
            set_state(RunState::Running);
        } else if (std::holds_alternative<Pause>(cmd)) {
            if (s != RunState::Running) return reject("session is not running");
            set_state(RunState::Paused);
        } else if (std::holds_alternative<Resume>(cmd)) {
            if (s != RunState::Paused) return reject("session is not paused");
            set_state(RunState::Running);
        } else if (const auto* c = std::get_if<Step>(&cmd)) {
            if (s == RunState::Running) return reject("pause the session before stepping");
            set_state(RunState::Paused);
            steps_left_ += c->n;
        } else if (std::holds_alternative<RequestSnapshot>(cmd)) {
            r.detail = snapshot_json();
        } else if (const auto* c = std::get_if<Preview>(&cmd)) {
            Json courses = Json::array();
            for (const Json& ref : c->policies) {
                const PolicySpec spec = resolve_policy(ref, episode_.catalog());
                const std::vector<FullState> path = episode_.preview(c->deputy, spec, c->cycles);
                Json t = Json::array(), pos = Json::array();
                for (std::size_t k = 0; k < path.size(); ++k) {
                    if ((k + 1) % static_cast<std::size_t>(c->stride) != 0 && k + 1 != path.size()) continue;
                    t.push_back(path[k].time);
                    const Vec3& p = path[k].translational.position;
                    pos.push_back({p.x(), p.y(), p.z()});
                }
                courses.push_back({{"policy", policy_to_json(spec)}, {"t", t}, {"position", pos}});
            }
            r.detail["deputy"] = c->deputy;
            r.detail["courses"] = courses;
        }
    } catch (const ScenarioError& e) {
        return reject(e.what(), e.path());
    } catch (const Error& e) {
        return reject(e.what());
    }
    r.accepted = true;
    return r;
}

void Session::drive() {
    using clock = std::chrono::steady_clock;
    std::unique_lock lk(mu_);
    while (!stop_) {
        while (!tasks_.empty()) {
            auto task = std::move(tasks_.front());
            tasks_.pop_front();
            lk.unlock();
            task();
            lk.lock();
        }
        if (stop_) break;
        const RunState s = state_.load();
        const bool advance = !episode_.done() && (s == RunState::Running || steps_left_ > 0);
        if (!advance) {
            cv_.wait(lk, [&] { return stop_ || !tasks_.empty(); });
            continue;
        }
        if (options_.pace > 0.0 && steps_left_ == 0) {
            const auto period = std::chrono::duration_cast<clock::duration>(
                std::chrono::duration<double>(episode_.scenario().control_period() / options_.pace));
            if (!deadline_ || *deadline_ + std::chrono::seconds(1) < clock::now()) deadline_ = clock::now();
            if (cv_.wait_until(lk, *deadline_, [&] { return stop_ || !tasks_.empty(); })) continue;
            *deadline_ += period;
        }
        lk.unlock();
        episode_.step();
        lk.lock();
        cycle_.store(episode_.cycle());
        if (steps_left_ > 0 && --steps_left_ == 0) done_cv_.notify_all();
        if (episode_.done()) {
            state_.store(episode_.aborted() ? RunState::Aborted : RunState::Finished);
            steps_left_ = 0;
            done_cv_.notify_all();
        }
    }
}

}  // namespace orbitguard::gateway
