#include "orbitguard/telemetry.hpp"

#include <algorithm>
#include <sstream>

namespace orbitguard {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

bool same_number(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

Json nullable(double v) { return std::isnan(v) ? Json(nullptr) : Json(v); }

double number(const Json& j, std::string_view key, const std::string& path) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) throw TelemetryError(path + "." + std::string(key) + ": missing");
    if (it->is_null()) return kNan;
    if (!it->is_number()) throw TelemetryError(path + "." + std::string(key) + ": expected a number");
    return it->get<double>();
}

template <typename T>
T value(const Json& j, std::string_view key, const std::string& path) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) throw TelemetryError(path + "." + std::string(key) + ": missing");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw TelemetryError(path + "." + std::string(key) + ": wrong type");
    }
}

const Json& member(const Json& j, std::string_view key, const std::string& path) {
    const auto it = j.find(std::string(key));
    if (it == j.end()) throw TelemetryError(path + "." + std::string(key) + ": missing");
    return *it;
}

QpStatus status_from_name(const std::string& name, const std::string& path) {
    for (QpStatus s : {QpStatus::Optimal, QpStatus::RelaxedOptimal, QpStatus::Infeasible})
        if (status_name(s) == name) return s;
    throw TelemetryError(path + ": unknown solver status " + name);
}

ConstraintId constraint_or_throw(const std::string& name, const std::string& path) {
    const auto id = constraint_from_name(name);
    if (!id) throw TelemetryError(path + ": unknown constraint " + name);
    return *id;
}

Json task_to_json(const TaskSpec& t) {
    return {{"kind", std::string(task_kind_name(t.kind))},
            {"points", t.point_count},
            {"chief_radius", t.chief_radius},
            {"dock_radius", t.dock_radius},
            {"dock_speed", t.dock_speed}};
}

TaskSpec task_from_json(const Json& j, const std::string& path) {
    TaskSpec t;
    const auto kind = task_kind_from_name(value<std::string>(j, "kind", path));
    if (!kind) throw TelemetryError(path + ".kind: unknown task");
    t.kind = *kind;
    t.point_count = value<int>(j, "points", path);
    t.chief_radius = number(j, "chief_radius", path);
    t.dock_radius = number(j, "dock_radius", path);
    t.dock_speed = number(j, "dock_speed", path);
    return t;
}

// Telemetry decoding reuses the scenario codecs; their field errors become telemetry errors.
template <typename F>
auto decode(F&& f) {
    try {
        return f();
    } catch (const ScenarioError& e) {
        throw TelemetryError(e.what());
    }
}

bool is_switching(ConstraintId id) { return constraint_info(id).mode == EnforcementMode::Switching; }

}  // namespace

double EpisodeMetrics::total_delta_v() const {
    double s = 0.0;
    for (double v : delta_v) s += v;
    return s;
}

double EpisodeMetrics::inspected_fraction() const {
    return point_count > 0 ? static_cast<double>(points_inspected) / point_count : 0.0;
}

bool EpisodeMetrics::operator==(const EpisodeMetrics& o) const {
    if (frames != o.frames || aborted != o.aborted || points_inspected != o.points_inspected ||
        point_count != o.point_count || intervention_count != o.intervention_count ||
        !same_number(intervention_duration, o.intervention_duration) || delta_v.size() != o.delta_v.size() ||
        completion_time.has_value() != o.completion_time.has_value())
        return false;
    if (completion_time && !same_number(*completion_time, *o.completion_time)) return false;
    for (std::size_t i = 0; i < delta_v.size(); ++i)
        if (!same_number(delta_v[i], o.delta_v[i])) return false;
    for (std::size_t i = 0; i < kConstraintCount; ++i)
        if (!same_number(min_margin[i], o.min_margin[i])) return false;
    return true;
}

Json header_to_json(const TelemetryHeader& h) {
    Json j;
    j["kind"] = "header";
    j["schema"] = std::string(kTelemetrySchema);
    j["scenario"] = h.scenario;
    j["seed"] = h.seed;
    j["control_period"] = h.control_period;
    j["dt"] = h.dt;
    j["duration"] = h.duration;
    j["expected_frames"] = h.expected_frames;
    j["margin_units"] = "normalized";
    j["task"] = task_to_json(h.task);
    j["pairwise_separation"] = h.pairwise_separation;
    j["vehicle"] = vehicle_to_json(h.vehicle);
    j["catalog"] = catalog_to_json(h.catalog);
    j["deputies"] = h.deputies;
    Json points = Json::array();
    for (const Vec3& p : h.points) points.push_back({p.x(), p.y(), p.z()});
    j["points"] = points;
    return j;
}

Json frame_to_json(const TelemetryFrame& f) {
    Json j;
    j["kind"] = "frame";
    j["cycle"] = f.cycle;
    j["t"] = f.t;
    Json deputies = Json::array();
    for (const DeputyRecord& r : f.deputies) {
        Json d;
        d["state"] = state_to_array(r.state);
        d["u_des"] = command_to_json(r.u_des);
        d["u_act"] = command_to_json(r.u_act);
        d["mode"] = std::string(filter_mode_name(r.mode));
        d["intervened"] = r.intervened;
        Json cause = Json::array();
        for (ConstraintId c : r.cause) cause.push_back(std::string(constraint_name(c)));
        d["cause"] = cause;
        d["margins"] = margins_to_json(r.margins);
        d["solver"] = {{"status", std::string(status_name(r.solver.status))},
                       {"iterations", r.solver.iterations},
                       {"rows", r.solver.rows},
                       {"active_set", r.solver.active_set},
                       {"max_slack", r.solver.max_slack}};
        d["policy"] = std::string(policy_kind_name(r.policy));
        d["fuel_latched"] = r.fuel_latched;
        d["diagnostic"] = r.diagnostic;
        deputies.push_back(d);
    }
    j["deputies"] = deputies;
    j["inspected"] = f.inspected;
    Json events = Json::array();
    for (const TelemetryEvent& e : f.events) events.push_back({{"type", e.type}, {"deputy", e.deputy}, {"detail", e.detail}});
    j["events"] = events;
    return j;
}

Json metrics_to_json(const EpisodeMetrics& m) {
    Json j;
    j["frames"] = m.frames;
    j["aborted"] = m.aborted;
    Json dv = Json::array();
    for (double v : m.delta_v) dv.push_back(nullable(v));
    j["delta_v"] = dv;
    j["total_delta_v"] = nullable(m.total_delta_v());
    j["points_inspected"] = m.points_inspected;
    j["point_count"] = m.point_count;
    j["inspected_fraction"] = m.inspected_fraction();
    j["intervention_count"] = m.intervention_count;
    j["intervention_duration"] = m.intervention_duration;
    j["min_margin"] = margins_to_json(m.min_margin);
    j["completion_time"] = m.completion_time ? Json(*m.completion_time) : Json(nullptr);
    return j;
}

EpisodeMetrics metrics_from_json(const Json& j, const std::string& path) {
    EpisodeMetrics m;
    m.frames = value<long>(j, "frames", path);
    m.aborted = value<bool>(j, "aborted", path);
    for (const Json& v : member(j, "delta_v", path)) m.delta_v.push_back(v.is_null() ? kNan : v.get<double>());
    m.points_inspected = value<int>(j, "points_inspected", path);
    m.point_count = value<int>(j, "point_count", path);
    m.intervention_count = value<int>(j, "intervention_count", path);
    m.intervention_duration = number(j, "intervention_duration", path);
    m.min_margin = decode([&] { return margins_from_json(member(j, "min_margin", path), path + ".min_margin"); });
    const Json& ct = member(j, "completion_time", path);
    if (!ct.is_null()) m.completion_time = ct.get<double>();
    return m;
}

Json footer_to_json(const TelemetryFooter& f) {
    Json j;
    j["kind"] = "end";
    j["frames"] = f.frames;
    j["aborted"] = f.aborted;
    j["diagnostic"] = f.diagnostic;
    Json states = Json::array();
    for (const FullState& s : f.final_states) states.push_back(state_to_array(s));
    j["final_states"] = states;
    j["metrics"] = metrics_to_json(f.metrics);
    return j;
}

TelemetryHeader header_from_json(const Json& j) {
    const std::string path = "header";
    if (value<std::string>(j, "schema", path) != kTelemetrySchema)
        throw TelemetryError("header.schema: expected " + std::string(kTelemetrySchema));
    TelemetryHeader h;
    h.scenario = value<std::string>(j, "scenario", path);
    h.seed = value<std::uint64_t>(j, "seed", path);
    h.control_period = number(j, "control_period", path);
    h.dt = number(j, "dt", path);
    h.duration = number(j, "duration", path);
    h.expected_frames = value<long>(j, "expected_frames", path);
    h.task = task_from_json(member(j, "task", path), path + ".task");
    h.pairwise_separation = value<bool>(j, "pairwise_separation", path);
    h.vehicle = decode([&] { return vehicle_from_json(member(j, "vehicle", path), "header.vehicle"); });
    decode([&] {
        apply_catalog_edits(h.catalog, member(j, "catalog", path), "header.catalog");
        return 0;
    });
    h.deputies = value<std::vector<std::string>>(j, "deputies", path);
    for (const Json& p : member(j, "points", path)) {
        if (!p.is_array() || p.size() != 3) throw TelemetryError("header.points: expected [x, y, z] entries");
        h.points.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
    }
    return h;
}

TelemetryFrame frame_from_json(const Json& j) {
    TelemetryFrame f;
    const std::string path = "frame";
    f.cycle = value<long>(j, "cycle", path);
    f.t = number(j, "t", path);
    const Json& deputies = member(j, "deputies", path);
    for (std::size_t i = 0; i < deputies.size(); ++i) {
        const Json& d = deputies[i];
        const std::string dp = "frame.deputies[" + std::to_string(i) + "]";
        DeputyRecord r;
        decode([&] {
            r.state = state_from_array(member(d, "state", dp), dp + ".state");
            r.u_des = command_from_json(member(d, "u_des", dp), dp + ".u_des");
            r.u_act = command_from_json(member(d, "u_act", dp), dp + ".u_act");
            r.margins = margins_from_json(member(d, "margins", dp), dp + ".margins");
            return 0;
        });
        const auto mode = filter_mode_from_name(value<std::string>(d, "mode", dp));
        if (!mode) throw TelemetryError(dp + ".mode: unknown filter mode");
        r.mode = *mode;
        r.intervened = value<bool>(d, "intervened", dp);
        for (const Json& c : member(d, "cause", dp)) r.cause.push_back(constraint_or_throw(c.get<std::string>(), dp));
        const Json& s = member(d, "solver", dp);
        r.solver.status = status_from_name(value<std::string>(s, "status", dp + ".solver"), dp + ".solver");
        r.solver.iterations = value<int>(s, "iterations", dp + ".solver");
        r.solver.rows = value<int>(s, "rows", dp + ".solver");
        r.solver.active_set = value<std::vector<int>>(s, "active_set", dp + ".solver");
        r.solver.max_slack = number(s, "max_slack", dp + ".solver");
        const auto kind = policy_kind_from_name(value<std::string>(d, "policy", dp));
        if (!kind) throw TelemetryError(dp + ".policy: unknown policy");
        r.policy = *kind;
        r.fuel_latched = value<bool>(d, "fuel_latched", dp);
        r.diagnostic = value<std::string>(d, "diagnostic", dp);
        f.deputies.push_back(std::move(r));
    }
    f.inspected = value<std::vector<int>>(j, "inspected", path);
    for (const Json& e : member(j, "events", path)) {
        TelemetryEvent ev;
        ev.type = value<std::string>(e, "type", "frame.events");
        ev.deputy = value<int>(e, "deputy", "frame.events");
        ev.detail = member(e, "detail", "frame.events");
        f.events.push_back(std::move(ev));
    }
    return f;
}

TelemetryFooter footer_from_json(const Json& j) {
    TelemetryFooter f;
    const std::string path = "end";
    f.frames = value<long>(j, "frames", path);
    f.aborted = value<bool>(j, "aborted", path);
    f.diagnostic = value<std::string>(j, "diagnostic", path);
    for (const Json& s : member(j, "final_states", path))
        f.final_states.push_back(decode([&] { return state_from_array(s, "end.final_states"); }));
    f.metrics = metrics_from_json(member(j, "metrics", path), "end.metrics");
    return f;
}

std::string encode_line(const Json& j) { return j.dump(); }

TelemetryLog read_telemetry(std::istream& in) {
    TelemetryLog log;
    std::string line;
    long line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "telemetry line " + std::to_string(line_no) + ": ";
        try {
            const Json j = Json::parse(line);
            const std::string kind = value<std::string>(j, "kind", "record");
            if (log.footer) throw TelemetryError("record after the end record");
            if (kind == "header") {
                if (have_header) throw TelemetryError("second header");
                log.header = header_from_json(j);
                have_header = true;
            } else if (!have_header) {
                throw TelemetryError("first record must be the header");
            } else if (kind == "frame") {
                log.frames.push_back(frame_from_json(j));
            } else if (kind == "end") {
                log.footer = footer_from_json(j);
            } else {
                throw TelemetryError("unknown record kind " + kind);
            }
        } catch (const nlohmann::json::exception& e) {
            throw TelemetryError(where + e.what());
        } catch (const TelemetryError& e) {
            throw TelemetryError(where + e.what());
        }
    }
    if (!have_header) throw TelemetryError("telemetry has no header");
    return log;
}

TelemetryLog read_telemetry_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TelemetryError("cannot open telemetry file " + path);
    return read_telemetry(in);
}

FileSink::FileSink(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw TelemetryError("cannot create telemetry file " + path);
}

void FileSink::write(std::string_view line) {
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.put('\n');
    out_.flush();
    if (!out_) throw TelemetryError("telemetry write failed");
}

std::string MemorySink::text() const {
    std::string out;
    for (const std::string& l : lines_) {
        out += l;
        out += '\n';
    }
    return out;
}

MetricsAccumulator::MetricsAccumulator(const TelemetryHeader& header)
    : task_(header.task),
      period_(header.control_period),
      deputies_(static_cast<int>(header.deputies.size())),
      in_span_(header.deputies.size(), false),
      last_fuel_(header.deputies.size(), kNan) {
    m_.min_margin.fill(kNan);
    m_.point_count = static_cast<int>(header.points.size());
}

void MetricsAccumulator::add(const TelemetryFrame& frame) {
    ++m_.frames;
    const std::size_t n = std::min(frame.deputies.size(), static_cast<std::size_t>(deputies_));
    bool all_docked = n > 0;
    for (std::size_t i = 0; i < n; ++i) {
        const DeputyRecord& r = frame.deputies[i];
        for (std::size_t c = 0; c < kConstraintCount; ++c) {
            const double v = r.margins[c];
            if (std::isnan(v)) continue;
            m_.min_margin[c] = std::isnan(m_.min_margin[c]) ? v : std::min(m_.min_margin[c], v);
        }
        if (r.intervened) {
            m_.intervention_duration += period_;
            if (!in_span_[i]) ++m_.intervention_count;
            in_span_[i] = true;
        } else {
            in_span_[i] = false;
        }
        last_fuel_[i] = r.state.resources.fuel_used;
        const TranslationalState& ts = r.state.translational;
        all_docked = all_docked && ts.position.norm() < task_.dock_radius && ts.velocity.norm() < task_.dock_speed;
    }
    m_.points_inspected = static_cast<int>(frame.inspected.size());
    if (!m_.completion_time) {
        const bool done = task_.kind == TaskKind::Dock
                              ? all_docked
                              : (m_.point_count > 0 && m_.points_inspected == m_.point_count);
        if (done) m_.completion_time = frame.t;
    }
}

EpisodeMetrics MetricsAccumulator::finish(const std::vector<FullState>& final_states, bool aborted) const {
    EpisodeMetrics out = m_;
    out.aborted = aborted;
    out.delta_v = last_fuel_;
    if (final_states.size() == last_fuel_.size())
        for (std::size_t i = 0; i < final_states.size(); ++i) out.delta_v[i] = final_states[i].resources.fuel_used;
    return out;
}

EpisodeMetrics compute_metrics(const TelemetryLog& log) {
    MetricsAccumulator acc(log.header);
    for (const TelemetryFrame& f : log.frames) acc.add(f);
    if (log.footer) return acc.finish(log.footer->final_states, log.footer->aborted);
    return acc.finish({}, false);
}

ReplayChecker::ReplayChecker(const TelemetryHeader& header, ReplayOptions options)
    : header_(header), options_(options), catalog_(header.catalog), metrics_(header) {}

void ReplayChecker::problem(const std::string& msg) {
    if (rep_.problems.size() < 20) rep_.problems.push_back(msg);
}

void ReplayChecker::add(const TelemetryFrame& f) {
    const TelemetryHeader& h = header_;
    metrics_.add(f);
    ++rep_.frames;
    const std::string at = "cycle " + std::to_string(f.cycle);
    bool abort_frame = false;
    for (const TelemetryEvent& e : f.events) {
        if (e.type == "catalog") {
            try {
                Catalog next;
                apply_catalog_edits(next, e.detail.at("catalog"), "catalog");
                catalog_ = next;
            } catch (const std::exception& ex) {
                ++rep_.structural_errors;
                problem(at + ": unreadable catalog event: " + ex.what());
            }
        }
        abort_frame = abort_frame || e.type == "abort";
    }
    if (!(f.t > prev_t_)) {
        ++rep_.structural_errors;
        problem(at + ": time not strictly increasing");
    }
    if (f.cycle != prev_cycle_ + 1) {
        ++rep_.structural_errors;
        problem(at + ": cycle index out of sequence");
    }
    prev_t_ = f.t;
    prev_cycle_ = f.cycle;
    if (f.inspected.size() < prev_inspected_.size() ||
        !std::includes(f.inspected.begin(), f.inspected.end(), prev_inspected_.begin(), prev_inspected_.end())) {
        ++rep_.structural_errors;
        problem(at + ": inspected set shrank");
    }
    prev_inspected_ = f.inspected;
    const std::size_t n_dep = h.deputies.size();
    if (f.deputies.size() != n_dep) {
        ++rep_.structural_errors;
        problem(at + ": deputy count differs from header");
        return;
    }
    if (abort_frame) return;

    std::vector<TranslationalState> all;
    for (const DeputyRecord& r : f.deputies) all.push_back(r.state.translational);
    for (std::size_t i = 0; i < n_dep; ++i) {
        const DeputyRecord& r = f.deputies[i];
        std::vector<TranslationalState> neighbors;
        if (h.pairwise_separation)
            for (std::size_t k = 0; k < n_dep; ++k)
                if (k != i) neighbors.push_back(all[k]);
        const EvalContext ctx{h.vehicle, neighbors};
        const std::string who = at + " deputy " + h.deputies[i];

        const MarginMap raw = compute_margins(r.state, catalog_, ctx);
        bool unsafe = false;
        for (ConstraintId id : kAllConstraints) {
            const std::size_t c = index_of(id);
            const double expect = std::isnan(raw[c]) ? kNan : raw[c] / catalog_[id].scale();
            const double logged = r.margins[c];
            const bool agree = (std::isnan(expect) && std::isnan(logged)) ||
                               std::abs(expect - logged) <= options_.margin_tolerance * std::max(1.0, std::abs(expect));
            if (!agree) {
                ++rep_.margin_mismatches;
                problem(who + ": " + std::string(constraint_name(id)) + " logged " + std::to_string(logged) +
                        ", recomputed " + std::to_string(expect));
            }
            for (double v : {expect, logged}) {
                if (std::isnan(v)) continue;
                rep_.worst_margin = std::min(rep_.worst_margin, v);
                if (v < -options_.safety_tolerance) unsafe = true;
            }
        }
        if (unsafe) {
            ++rep_.safety_violations;
            problem(who + ": margin below -" + std::to_string(options_.safety_tolerance));
        }
        if (r.mode == FilterMode::PassThrough && !(r.u_act == r.u_des)) {
            ++rep_.passthrough_mismatches;
            problem(who + ": PassThrough frame changed the command");
        }
        const bool barrier_decision = (r.mode == FilterMode::QpModified || r.mode == FilterMode::SwitchedToBackup) &&
                                      std::none_of(r.cause.begin(), r.cause.end(), is_switching);
        if (barrier_decision && !(r.u_act == r.u_des)) {
            bool feasible = within_box(r.u_des, h.vehicle);
            const ControlVec u = r.u_des.to_vector();
            for (const BarrierRow& row : filter_rows(r.state, catalog_, ctx, h.control_period)) {
                if (!feasible) break;
                feasible = row.degenerate ? row.margin_h > 0.0 : row.a.dot(u) - row.b >= 0.0;
            }
            if (feasible) {
                ++rep_.feasible_modified;
                problem(who + ": feasible desired command was modified");
            }
        }
    }
}

ReplayReport ReplayChecker::finish(const std::optional<TelemetryFooter>& footer) {
    if (!footer) {
        ++rep_.structural_errors;
        problem("missing end record");
        return rep_;
    }
    if (footer->frames != rep_.frames) {
        ++rep_.structural_errors;
        problem("end record frame count disagrees with the log");
    }
    if (!footer->aborted && rep_.frames != header_.expected_frames) {
        ++rep_.structural_errors;
        problem("frame count " + std::to_string(rep_.frames) + " differs from expected " +
                std::to_string(header_.expected_frames));
    }
    rep_.metrics_match = metrics_.finish(footer->final_states, footer->aborted) == footer->metrics;
    if (!rep_.metrics_match) problem("recomputed metrics differ from the end record");
    return rep_;
}

ReplayReport replay_check(const TelemetryLog& log, const ReplayOptions& options) {
    ReplayChecker checker(log.header, options);
    for (const TelemetryFrame& f : log.frames) checker.add(f);
    return checker.finish(log.footer);
}

}  // namespace orbitguard
