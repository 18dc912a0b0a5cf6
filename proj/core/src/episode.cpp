#include "orbitguard/episode.hpp"

#include <algorithm>

namespace orbitguard {

namespace {

TelemetryHeader make_header(const Scenario& s, const std::vector<InspectionPoint>& points) {
    TelemetryHeader h;
    h.scenario = s.name;
    h.seed = s.seed;
    h.control_period = s.control_period();
    h.dt = s.dt;
    h.duration = s.duration;
    h.expected_frames = s.frame_count();
    h.vehicle = s.vehicle;
    h.catalog = s.catalog;
    h.task = s.task;
    h.pairwise_separation = s.pairwise_separation;
    for (const DeputySpec& d : s.deputies) h.deputies.push_back(d.name);
    for (const InspectionPoint& p : points) h.points.push_back(p.normal);
    return h;
}

std::vector<InspectionPoint> points_for(const TaskSpec& task) {
    return task.point_count > 0 ? generate_points(task.point_count) : std::vector<InspectionPoint>{};
}

const Scenario& validated(const Scenario& s) {
    s.validate();
    return s;
}

}  // namespace

Episode::Episode(Scenario scenario)
    : scenario_(validated(scenario)),
      catalog_(scenario_.catalog),
      points_(points_for(scenario_.task)),
      header_(make_header(scenario_, points_)),
      metrics_(header_),
      t0_(scenario_.deputies.front().initial.time),
      period_(scenario_.control_period()),
      total_cycles_(scenario_.frame_count()) {
    PipelineConfig cfg = scenario_.rta;
    cfg.control_period = period_;
    for (const DeputySpec& d : scenario_.deputies)
        deputies_.push_back(Deputy{d.name, d.initial, Policy(seeded(d.policy), scenario_.vehicle), RtaPipeline(cfg), {}});
}

PolicySpec Episode::seeded(const PolicySpec& spec) const {
    PolicySpec out = spec;
    if (out.kind == PolicyKind::RandomPolicy) out.seed = effective_seed(scenario_.seed, spec.seed);
    return out;
}

void Episode::check_deputy(int deputy) const {
    if (deputy < 0 || deputy >= static_cast<int>(deputies_.size()))
        throw ScenarioError("deputy", "no deputy with index " + std::to_string(deputy));
}

const PolicySpec& Episode::policy(int deputy) const {
    check_deputy(deputy);
    return deputies_[static_cast<std::size_t>(deputy)].policy.spec();
}

void Episode::emit(const Json& j) {
    const std::string line = encode_line(j);
    for (TelemetrySink* s : sinks_) s->write(line);
}

void Episode::start() {
    if (started_) return;
    started_ = true;
    emit(header_to_json(header_));
}

void Episode::set_catalog(const Catalog& catalog) {
    check_unique_priorities(catalog, "catalog");
    try {
        catalog.validate();
    } catch (const CatalogError& e) {
        throw ScenarioError("catalog", e.what());
    }
    catalog_ = catalog;
    pending_.push_back({"catalog", -1, Json{{"catalog", catalog_to_json(catalog_)}}});
}

void Episode::select_policy(int deputy, const PolicySpec& spec) {
    check_deputy(deputy);
    Deputy& d = deputies_[static_cast<std::size_t>(deputy)];
    try {
        d.policy = Policy(seeded(spec), scenario_.vehicle);
    } catch (const Error& e) {
        throw ScenarioError("policy", e.what());
    }
    pending_.push_back({"policy", deputy, Json{{"policy", policy_to_json(d.policy.spec())}}});
}

void Episode::schedule_override(int deputy, std::vector<TimedCommand> entries) {
    check_deputy(deputy);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string path = "entries[" + std::to_string(i) + "]";
        if (!std::isfinite(entries[i].t)) throw ScenarioError(path + ".t", "must be finite");
        if (i > 0 && !(entries[i].t > entries[i - 1].t))
            throw ScenarioError(path + ".t", "override times must increase strictly");
        if (!entries[i].command.to_vector().allFinite()) throw ScenarioError(path + ".command", "must be finite");
    }
    Deputy& d = deputies_[static_cast<std::size_t>(deputy)];
    d.override_script = std::move(entries);
    Json detail{{"entries", d.override_script.size()}};
    if (!d.override_script.empty()) {
        detail["start"] = d.override_script.front().t;
        detail["end"] = d.override_script.back().t + period_;
    }
    pending_.push_back({"override", deputy, detail});
}

std::optional<ControlCommand> Episode::active_override(Deputy& d, int index, double t) {
    if (d.override_script.empty()) return std::nullopt;
    constexpr double eps = 1e-9;
    const double end = d.override_script.back().t + period_;
    if (t >= end - eps) {
        d.override_script.clear();
        pending_.push_back({"override_end", index, Json::object()});
        return std::nullopt;
    }
    const TimedCommand* active = nullptr;
    for (const TimedCommand& e : d.override_script)
        if (e.t <= t + eps) active = &e;
    if (!active) return std::nullopt;
    return active->command;
}

void Episode::abort_with(const std::string& message, int deputy) {
    TelemetryFrame frame;
    frame.cycle = cycle_;
    frame.t = time();
    frame.events = std::move(pending_);
    pending_.clear();
    frame.events.push_back({"abort", deputy, Json{{"diagnostic", message}}});
    for (const Deputy& d : deputies_) {
        DeputyRecord r;
        r.state = d.state;
        r.margins.fill(std::numeric_limits<double>::quiet_NaN());
        r.policy = d.policy.spec().kind;
        r.fuel_latched = d.rta.fuel_latched();
        r.diagnostic = message;
        frame.deputies.push_back(std::move(r));
    }
    for (std::size_t i = 0; i < points_.size(); ++i)
        if (points_[i].inspected) frame.inspected.push_back(static_cast<int>(i));
    if (!sinks_.empty()) emit(frame_to_json(frame));
    metrics_.add(frame);
    last_frame_ = std::move(frame);
    ++cycle_;
    aborted_ = true;
    diagnostic_ = message;
    finish();
}

void Episode::finish() {
    finished_ = true;
    TelemetryFooter foot;
    foot.frames = metrics_.finish({}, aborted_).frames;
    foot.aborted = aborted_;
    foot.diagnostic = diagnostic_;
    foot.final_states = states();
    foot.metrics = metrics_.finish(foot.final_states, aborted_);
    emit(footer_to_json(foot));
    footer_ = std::move(foot);
}

void Episode::step() {
    if (finished_) return;
    start();
    for (std::size_t i = 0; i < deputies_.size(); ++i) {
        if (!deputies_[i].state.to_vector().allFinite()) {
            abort_with("non-finite state for deputy " + deputies_[i].name, static_cast<int>(i));
            return;
        }
    }
    if (cycle_ >= total_cycles_) {
        finish();
        return;
    }

    const double t = time();
    TelemetryFrame frame;
    frame.cycle = cycle_;
    frame.t = t;

    for (const Deputy& d : deputies_)
        update_inspection(points_, d.state.translational.position,
                          sun_direction(d.state.time, scenario_.vehicle.mean_motion), scenario_.task.chief_radius, t);
    const std::vector<Vec3> remaining = remaining_normals(points_);

    std::vector<TranslationalState> all;
    for (const Deputy& d : deputies_) all.push_back(d.state.translational);

    std::vector<ControlCommand> applied;
    for (std::size_t i = 0; i < deputies_.size(); ++i) {
        Deputy& d = deputies_[i];
        std::vector<TranslationalState> neighbors;
        if (scenario_.pairwise_separation)
            for (std::size_t k = 0; k < all.size(); ++k)
                if (k != i) neighbors.push_back(all[k]);
        const EvalContext ctx{scenario_.vehicle, neighbors};
        DeputyRecord r;
        r.state = d.state;
        r.policy = d.policy.spec().kind;
        try {
            r.u_des = d.policy.act({d.state, remaining, scenario_.vehicle});
            const std::optional<ControlCommand> ovr = active_override(d, static_cast<int>(i), t);
            const FilterDecision dec = d.rta.step(d.state, r.u_des, catalog_, ctx, ovr);
            if (!dec.u_act.to_vector().allFinite()) throw DomainError("filter produced a non-finite command");
            r.u_act = dec.u_act;
            r.mode = dec.mode;
            r.intervened = dec.intervened;
            r.cause = dec.cause;
            r.solver = dec.solver;
            r.diagnostic = dec.diagnostic;
            for (ConstraintId id : kAllConstraints) {
                const double m = dec.margins[index_of(id)];
                r.margins[index_of(id)] = std::isnan(m) ? m : m / catalog_[id].scale();
            }
        } catch (const Error& e) {
            abort_with(std::string("deputy ") + d.name + ": " + e.what(), static_cast<int>(i));
            return;
        }
        r.fuel_latched = d.rta.fuel_latched();
        applied.push_back(r.u_act);
        frame.deputies.push_back(std::move(r));
    }

    for (std::size_t i = 0; i < points_.size(); ++i)
        if (points_[i].inspected) frame.inspected.push_back(static_cast<int>(i));
    frame.events = std::move(pending_);
    pending_.clear();
    if (!completion_announced_) {
        MetricsAccumulator probe = metrics_;
        probe.add(frame);
        if (const auto done = probe.finish({}, false).completion_time) {
            completion_announced_ = true;
            frame.events.push_back({"task_complete", -1, Json{{"t", *done}}});
        }
    }

    if (!sinks_.empty()) emit(frame_to_json(frame));
    metrics_.add(frame);
    last_frame_ = std::move(frame);

    const int substeps = scenario_.substeps();
    for (std::size_t i = 0; i < deputies_.size(); ++i) {
        FullState s = deputies_[i].state;
        for (int k = 0; k < substeps && s.to_vector().allFinite(); ++k)
            s = propagate_rk4(s, applied[i], scenario_.dt, scenario_.vehicle);
        deputies_[i].state = s;
    }
    ++cycle_;

    if (cycle_ >= total_cycles_) {
        for (std::size_t i = 0; i < deputies_.size(); ++i)
            if (!deputies_[i].state.to_vector().allFinite()) {
                abort_with("non-finite state for deputy " + deputies_[i].name, static_cast<int>(i));
                return;
            }
        finish();
    }
}

void Episode::run() {
    while (!finished_) step();
}

std::vector<FullState> Episode::states() const {
    std::vector<FullState> out;
    for (const Deputy& d : deputies_) out.push_back(d.state);
    return out;
}

EpisodeMetrics Episode::metrics() const {
    if (footer_) return footer_->metrics;
    return metrics_.finish(states(), aborted_);
}

std::vector<FullState> Episode::preview(int deputy, const PolicySpec& spec, long cycles) const {
    check_deputy(deputy);
    Episode copy = *this;
    copy.clear_sinks();
    copy.started_ = true;
    copy.select_policy(deputy, spec);
    std::vector<FullState> out;
    for (long k = 0; k < cycles && !copy.done(); ++k) {
        copy.step();
        if (copy.aborted()) break;
        out.push_back(copy.deputies_[static_cast<std::size_t>(deputy)].state);
    }
    return out;
}

EpisodeResult run_episode(const Scenario& scenario, const std::string& telemetry_path) {
    Episode ep(scenario);
    std::optional<FileSink> file;
    if (!telemetry_path.empty()) {
        file.emplace(telemetry_path);
        ep.add_sink(*file);
    }
    ep.run();
    return {ep.metrics(), telemetry_path, ep.aborted(), ep.diagnostic()};
}

}  // namespace orbitguard
