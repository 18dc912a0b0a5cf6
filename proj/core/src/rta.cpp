#include "orbitguard/rta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>

namespace orbitguard {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

constexpr std::array<std::string_view, 4> kModeNames = {"PassThrough", "QpModified", "SwitchedToBackup", "Override"};
constexpr std::array<std::string_view, 3> kBackupNames = {"EnmtInsertion", "ZeroThrustCoast", "Detumble"};

double box_component(int i, const VehicleParams& params) {
    return i < 3 ? params.max_thrust : params.max_torque;
}

void append_unique(std::vector<ConstraintId>& list, ConstraintId id) {
    if (std::find(list.begin(), list.end(), id) == list.end()) list.push_back(id);
}

void sort_ids(std::vector<ConstraintId>& list) {
    std::sort(list.begin(), list.end(), [](ConstraintId a, ConstraintId b) { return index_of(a) < index_of(b); });
}

BarrierRow make_row(const ConstraintEval& e, double h, double strength, const StateVec& f, const InputMatrix& g,
                    ConstraintId source) {
    BarrierRow row;
    row.a = g.transpose() * e.gradient;
    row.b = -e.gradient.dot(f) - kappa(e.h, strength);
    row.source = source;
    row.margin_h = h;
    row.degenerate = row.a.norm() < kDegenerateRowNorm;
    return row;
}

void append_rows(const FullState& state, const ConstraintSpec& spec, const EvalContext& ctx, const StateVec& f,
                 const InputMatrix& g, std::vector<BarrierRow>& out) {
    const ConstraintRows base = barrier_functions(spec.id, state, spec, ctx);
    if (relative_degree(spec.id) == 1) {
        for (const auto& e : base.view()) out.push_back(make_row(e, e.h, spec.kappa_strength[0], f, g, spec.id));
        return;
    }
    const ConstraintRows psi = extend_second_order(spec.id, state, spec, ctx);
    for (int i = 0; i < psi.count(); ++i) {
        const double h = i < base.count() ? base.rows[i].h : psi.rows[i].h;
        out.push_back(make_row(psi.rows[i], h, spec.kappa_strength[1], f, g, spec.id));
    }
}

double fuel_rate(const FullState& state, const ControlCommand& cmd, const VehicleParams& params) {
    return resource_derivative(state, cmd, sun_direction(state.time, params.mean_motion), params)[2];
}

FilterDecision backup_decision(const FullState& state, const BackupController& backup, const VehicleParams& params) {
    FilterDecision d;
    d.u_act = backup.command(state, params);
    d.mode = FilterMode::SwitchedToBackup;
    d.intervened = true;
    d.margins.fill(kNan);
    return d;
}

// Folds one sample into the result; false once a margin goes negative.
bool check_sample(const FullState& s, double elapsed, const Catalog& catalog, const EvalContext& ctx,
                  bool include_passive, MonitorResult& out) {
    for (const auto& spec : catalog) {
        if (!spec.enabled) continue;
        if (spec.id == ConstraintId::PassiveSafety && !include_passive) continue;
        const double m = margin(spec.id, s, spec, ctx) / spec.scale();
        out.min_margin = std::min(out.min_margin, m);
        if (m < 0.0) {
            out.safe = false;
            out.violated = spec.id;
            out.violation_time = elapsed;
            return false;
        }
    }
    return true;
}

bool translational_only(ConstraintId id) {
    switch (id) {
        case ConstraintId::SafeSeparation:
        case ConstraintId::DynamicSpeed:
        case ConstraintId::KeepIn:
        case ConstraintId::PassiveSafety:
        case ConstraintId::AxialVelocity:
        case ConstraintId::FuelLimit:
            return true;
        default:
            return false;
    }
}

double wall_seconds(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string_view filter_mode_name(FilterMode m) { return kModeNames[static_cast<std::size_t>(m)]; }

std::optional<FilterMode> filter_mode_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kModeNames.size(); ++i)
        if (kModeNames[i] == name) return static_cast<FilterMode>(i);
    return std::nullopt;
}

std::string_view backup_name(BackupKind k) { return kBackupNames[static_cast<std::size_t>(k)]; }

std::optional<BackupKind> backup_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kBackupNames.size(); ++i)
        if (kBackupNames[i] == name) return static_cast<BackupKind>(i);
    return std::nullopt;
}

double sampled_data_tightening(const FullState& state, const ConstraintSpec& spec, const VehicleParams& params,
                               double sample_period) {
    if (spec.id != ConstraintId::DynamicSpeed || !(sample_period > 0.0)) return 0.0;
    // Over one hold, -|v| loses at most dt^2/2 * |a|^2 / |v|. At the boundary |v| >= speed_offset.
    const auto& ts = state.translational;
    const double n = params.mean_motion;
    const Vec3 drift(3.0 * n * n * ts.position.x() + 2.0 * n * ts.velocity.y(), -2.0 * n * ts.velocity.x(),
                     -n * n * ts.position.z());
    const double accel = std::sqrt(3.0) * params.max_thrust / params.mass + drift.norm();
    const double speed = std::max(ts.velocity.norm(), spec.params[param::dynamic_speed::kSpeedOffset]);
    return 0.5 * sample_period * accel * accel / speed;
}

std::vector<BarrierRow> filter_rows(const FullState& state, const Catalog& catalog, const EvalContext& ctx,
                                    double sample_period) {
    std::vector<BarrierRow> rows;
    rows.reserve(16);
    const StateVec f = drift_vector(state, ctx.params);
    const InputMatrix g = input_matrix(state, ctx.params);
    for (const auto& spec : catalog) {
        if (!spec.enabled || spec.mode != EnforcementMode::Barrier) continue;
        const std::size_t first = rows.size();
        append_rows(state, spec, ctx, f, g, rows);
        const double tightening = sampled_data_tightening(state, spec, ctx.params, sample_period);
        for (std::size_t i = first; i < rows.size(); ++i) rows[i].b += tightening;
    }
    return rows;
}

std::vector<BarrierRow> barrier_rows(const FullState& state, const ConstraintSpec& spec, const EvalContext& ctx) {
    if (constraint_info(spec.id).mode != EnforcementMode::Barrier || spec.mode != EnforcementMode::Barrier)
        throw ModeError(std::string(constraint_name(spec.id)) + " is not a barrier constraint");
    std::vector<BarrierRow> out;
    append_rows(state, spec, ctx, drift_vector(state, ctx.params), input_matrix(state, ctx.params), out);
    return out;
}

BarrierRow barrier_row(const FullState& state, const ConstraintSpec& spec, const VehicleParams& params) {
    const EvalContext ctx{params, {}};
    auto rows = barrier_rows(state, spec, ctx);
    return rows.front();
}

ControlCommand clip_to_box(const ControlCommand& cmd, const VehicleParams& params) {
    ControlVec u = cmd.to_vector();
    for (int i = 0; i < kControlDim; ++i) {
        const double lim = box_component(i, params);
        u[i] = std::clamp(u[i], -lim, lim);
    }
    return ControlCommand::from_vector(u);
}

bool within_box(const ControlCommand& cmd, const VehicleParams& params, double tol) {
    const ControlVec u = cmd.to_vector();
    for (int i = 0; i < kControlDim; ++i)
        if (!(std::abs(u[i]) <= box_component(i, params) + tol)) return false;
    return true;
}

ControlCommand backup_enmt(const FullState& state, const VehicleParams& params, const BackupGains& gains) {
    const auto& ts = state.translational;
    if (!ts.position.allFinite() || !ts.velocity.allFinite())
        throw DomainError("backup_enmt: non-finite translational state");
    const double n = params.mean_motion;
    const double m = params.mass;
    const double e = ts.velocity.y() + 2.0 * n * ts.position.x();
    const double blend = std::abs(e) / (std::abs(e) + gains.manifold_tolerance);

    ControlCommand cmd;
    cmd.thrust.x() = -m * (gains.radial_damping * blend * ts.velocity.x());
    cmd.thrust.y() = -m * gains.manifold_gain * e;
    cmd.torque = -gains.detumble_gain * (params.inertia * state.attitude.body_rate);
    if (params.thrust_frame == ThrustFrame::Body)
        cmd.thrust = rotation_matrix(state.attitude.quaternion).transpose() * cmd.thrust;
    return clip_to_box(cmd, params);
}

ControlCommand BackupController::command(const FullState& state, const VehicleParams& params) const {
    switch (kind) {
        case BackupKind::EnmtInsertion:
            return backup_enmt(state, params, gains);
        case BackupKind::ZeroThrustCoast:
            return {};
        case BackupKind::Detumble: {
            ControlCommand cmd;
            cmd.torque = -gains.detumble_gain * (params.inertia * state.attitude.body_rate);
            return clip_to_box(cmd, params);
        }
    }
    return {};
}

MarginMap compute_margins(const FullState& state, const Catalog& catalog, const EvalContext& ctx) {
    MarginMap out;
    out.fill(kNan);
    for (const auto& spec : catalog)
        if (spec.enabled) out[index_of(spec.id)] = margin(spec.id, state, spec, ctx);
    return out;
}

RelaxationWeight relaxation_weight(int rank, int max_rank) {
    if (rank <= 2) return {1.0, true};
    return {std::pow(10.0, static_cast<double>(std::max(0, max_rank - rank))), false};
}

FilterDecision AsifFilter::filter(const FullState& state, const ControlCommand& u_des, const Catalog& catalog,
                                  const EvalContext& ctx) {
    const VehicleParams& params = ctx.params;
    FilterDecision d;
    d.margins.fill(kNan);

    const std::vector<BarrierRow> rows = filter_rows(state, catalog, ctx, cfg_.sample_period);

    QpProblem p;
    p.u_des = u_des.to_vector();
    p.lower.resize(kControlDim);
    p.upper.resize(kControlDim);
    for (int i = 0; i < kControlDim; ++i) {
        p.upper[i] = box_component(i, params);
        p.lower[i] = -p.upper[i];
    }

    std::vector<ConstraintId> sources;
    std::vector<ConstraintId> stuck;
    for (const auto& r : rows) {
        if (r.degenerate) {
            if (!(r.margin_h > 0.0)) append_unique(stuck, r.source);
            continue;
        }
        p.rows.push_back({r.a, r.b});
        sources.push_back(r.source);
    }
    d.solver.rows = static_cast<int>(p.rows.size());

    auto fall_back = [&](std::string why, std::vector<ConstraintId> cause) {
        d.u_act = cfg_.fallback.command(state, params);
        d.mode = FilterMode::SwitchedToBackup;
        d.intervened = true;
        sort_ids(cause);
        d.cause = std::move(cause);
        d.diagnostic = std::move(why);
        return d;
    };

    if (!stuck.empty()) {
        std::string why = "no control authority over violated constraint";
        for (auto id : stuck) why += std::string(" ") + std::string(constraint_name(id));
        return fall_back(why, stuck);
    }

    QpSolution sol;
    try {
        sol = solver_.solve(p);
        if (sol.status == QpStatus::Infeasible) {
            const int max_rank = catalog.max_enabled_rank();
            const std::size_t count = p.rows.size();
            std::vector<double> weights(count);
            auto hard = std::make_unique<bool[]>(count);
            for (std::size_t i = 0; i < count; ++i) {
                const auto w = relaxation_weight(catalog[sources[i]].priority, max_rank);
                weights[i] = w.weight;
                hard[i] = w.hard;
            }
            sol = solver_.solve_relaxed(p, weights, std::span<const bool>(hard.get(), count));
        }
    } catch (const SolverStallError& e) {
        d.solver.status = QpStatus::Infeasible;
        return fall_back(std::string("solver stall: ") + e.what(), {});
    }

    d.solver.status = sol.status;
    d.solver.iterations = sol.iterations;
    for (int idx : sol.active_set)
        if (idx < static_cast<int>(p.rows.size())) d.solver.active_set.push_back(idx);
    for (double s : sol.slacks) d.solver.max_slack = std::max(d.solver.max_slack, s);

    if (sol.status == QpStatus::Infeasible) {
        std::vector<ConstraintId> hard_rows;
        for (std::size_t i = 0; i < sources.size(); ++i)
            if (relaxation_weight(catalog[sources[i]].priority, catalog.max_enabled_rank()).hard)
                append_unique(hard_rows, sources[i]);
        return fall_back("hard constraints infeasible within actuator limits", hard_rows);
    }

    d.u_act = ControlCommand::from_vector(sol.u);
    d.intervened = !(d.u_act == u_des);
    d.mode = d.intervened ? FilterMode::QpModified : FilterMode::PassThrough;
    if (!d.intervened) d.u_act = u_des;
    for (int idx : d.solver.active_set) append_unique(d.cause, sources[static_cast<std::size_t>(idx)]);
    sort_ids(d.cause);
    if (sol.status == QpStatus::RelaxedOptimal) d.diagnostic = "relaxed: soft constraints traded by priority";
    return d;
}

FilterDecision asif_filter(const FullState& state, const ControlCommand& u_des, const Catalog& catalog,
                           const VehicleParams& params) {
    const EvalContext ctx{params, {}};
    AsifFilter filter(AsifConfig{{BackupKind::EnmtInsertion, {}}, false, 0.1});
    FilterDecision d = filter.filter(state, u_des, catalog, ctx);
    d.margins = compute_margins(state, catalog, ctx);
    return d;
}

MonitorResult monitor_rollout(const FullState& state, const ControlCommand& u_des, const BackupController& backup,
                              double horizon, double dt, const Catalog& catalog, const EvalContext& ctx,
                              const MonitorOptions& options) {
    if (!(horizon >= 0.0)) throw ConfigError("switching_monitor: horizon must be >= 0");
    if (!(options.control_period > 0.0)) throw ConfigError("switching_monitor: control period must be positive");
    if (horizon > 0.0 && !(dt > 0.0)) throw ConfigError("switching_monitor: dt must be positive");
    const VehicleParams& params = ctx.params;
    MonitorResult out;
    out.min_margin = std::numeric_limits<double>::infinity();

    if (!check_sample(state, 0.0, catalog, ctx, true, out)) return out;
    FullState s = propagate_rk4(state, u_des, options.control_period, params);
    double elapsed = options.control_period;
    if (!check_sample(s, elapsed, catalog, ctx, true, out) || horizon == 0.0) return out;

    const int samples = static_cast<int>(std::ceil(horizon / dt - 1e-9));
    const double step = horizon / samples;

    bool attitude_needed = false;
    for (const auto& spec : catalog)
        if (spec.enabled && !translational_only(spec.id)) attitude_needed = true;

    if (backup.kind == BackupKind::ZeroThrustCoast && options.stm_fast_path) {
        // Translation through the exact CW flow; attitude and resources through RK4 only if a
        // constraint reads them.
        const Mat6 phi = cw_stm(params.mean_motion, step);
        Vec6 x;
        x << s.translational.position, s.translational.velocity;
        const int substeps = std::max(1, static_cast<int>(std::ceil(step / 1.0)));
        for (int k = 0; k < samples; ++k) {
            x = phi * x;
            if (attitude_needed) {
                for (int j = 0; j < substeps; ++j) s = propagate_rk4(s, {}, step / substeps, params);
            } else {
                s.time += step;
            }
            s.translational.position = x.head<3>();
            s.translational.velocity = x.tail<3>();
            elapsed += step;
            if (!check_sample(s, elapsed, catalog, ctx, false, out)) return out;
        }
        return out;
    }

    const double target = options.rollout_step > 0.0 ? options.rollout_step : options.control_period;
    const int substeps = std::max(1, static_cast<int>(std::ceil(step / target - 1e-9)));
    const double h = step / substeps;
    for (int k = 0; k < samples; ++k) {
        for (int j = 0; j < substeps; ++j) s = propagate_rk4(s, backup.command(s, params), h, params);
        elapsed += step;
        if (!check_sample(s, elapsed, catalog, ctx, false, out)) return out;
    }
    return out;
}

bool switching_monitor(const FullState& state, const ControlCommand& u_des, const BackupController& backup,
                       double horizon, double dt, const Catalog& catalog, const EvalContext& ctx,
                       const MonitorOptions& options) {
    return monitor_rollout(state, u_des, backup, horizon, dt, catalog, ctx, options).safe;
}

FilterDecision switching_filter(const FullState& state, const ControlCommand& u_des, const BackupController& backup,
                                const Catalog& catalog, const EvalContext& ctx, double horizon, double dt,
                                const MonitorOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    FilterDecision d;
    if (switching_monitor(state, u_des, backup, horizon, dt, catalog, ctx, options)) {
        d.u_act = u_des;
        d.mode = FilterMode::PassThrough;
    } else {
        d = backup_decision(state, backup, ctx.params);
        for (const auto& spec : catalog)
            if (spec.enabled && spec.mode == EnforcementMode::Switching) d.cause.push_back(spec.id);
        d.diagnostic = "monitor predicted a violation under the desired command";
    }
    d.margins = compute_margins(state, catalog, ctx);
    d.latency = wall_seconds(t0);
    return d;
}

RtaPipeline::RtaPipeline(PipelineConfig cfg)
    : cfg_(cfg), asif_(AsifConfig{cfg.fallback, cfg.warm_start, cfg.control_period}) {
    if (!(cfg_.control_period > 0.0)) throw ConfigError("pipeline: control period must be positive");
}

void RtaPipeline::reset() {
    asif_.reset();
    fuel_latched_ = false;
}

FilterDecision RtaPipeline::step(const FullState& state, const ControlCommand& u_des, const Catalog& catalog,
                                 const EvalContext& ctx, const std::optional<ControlCommand>& override_cmd) {
    const auto t0 = std::chrono::steady_clock::now();
    const VehicleParams& params = ctx.params;
    const MarginMap margins = compute_margins(state, catalog, ctx);

    auto finish = [&](FilterDecision d) {
        d.margins = margins;
        d.latency = wall_seconds(t0);
        return d;
    };

    if (override_cmd) {
        FilterDecision d;
        d.u_act = *override_cmd;
        d.mode = FilterMode::Override;
        d.intervened = true;
        for (const auto& spec : catalog)
            if (spec.enabled && margins[index_of(spec.id)] < 0.0) d.cause.push_back(spec.id);
        if (!d.cause.empty()) d.diagnostic = "override active with violated constraints";
        return finish(d);
    }

    const ConstraintSpec& fuel = catalog[ConstraintId::FuelLimit];
    const ConstraintSpec& passive = catalog[ConstraintId::PassiveSafety];

    auto fuel_demands_backup = [&](const ControlCommand& u) {
        const double budget = fuel.params[param::fuel_limit::kBudget];
        const double predicted = state.resources.fuel_used + fuel_rate(state, u, params) * cfg_.control_period;
        return predicted > budget;
    };
    auto passive_demands_backup = [&](const ControlCommand& u) {
        const FullState next = propagate_rk4(state, u, cfg_.control_period, params);
        const double horizon = passive.params[param::passive_safety::kHorizonPeriods] * params.orbital_period();
        return passive_safety_margin(next.translational, params.mean_motion,
                                     passive.params[param::passive_safety::kChiefRadius], horizon,
                                     passive.params[param::passive_safety::kSampleInterval]) < 0.0;
    };
    const bool fuel_on = fuel.enabled && fuel.mode == EnforcementMode::Switching;
    const bool passive_on = passive.enabled && passive.mode == EnforcementMode::Switching;

    if (fuel_on) {
        const double budget = fuel.params[param::fuel_limit::kBudget];
        const double release = (1.0 - fuel.params[param::fuel_limit::kHysteresis]) * budget;
        if (fuel_latched_ && state.resources.fuel_used <= release) fuel_latched_ = false;
        if (!fuel_latched_ && fuel_demands_backup(u_des)) fuel_latched_ = true;
    } else {
        fuel_latched_ = false;
    }

    auto switched = [&](const BackupController& backup, ConstraintId why, std::string text) {
        FilterDecision d = backup_decision(state, backup, params);
        d.cause = {why};
        d.diagnostic = std::move(text);
        return finish(d);
    };

    if (fuel_latched_) return switched(cfg_.fuel_backup, ConstraintId::FuelLimit, "fuel budget reached");
    if (passive_on && passive_demands_backup(u_des))
        return switched(cfg_.passive_backup, ConstraintId::PassiveSafety, "free drift after this step reaches the chief");

    FilterDecision d = asif_.filter(state, u_des, catalog, ctx);
    if (d.intervened && d.mode == FilterMode::QpModified) {
        // The QP output is a different command; it must clear the switching monitors too.
        if (fuel_on && fuel_demands_backup(d.u_act)) {
            fuel_latched_ = true;
            return switched(cfg_.fuel_backup, ConstraintId::FuelLimit, "fuel budget reached by filtered command");
        }
        if (passive_on && passive_demands_backup(d.u_act))
            return switched(cfg_.passive_backup, ConstraintId::PassiveSafety,
                            "free drift after the filtered step reaches the chief");
    }
    return finish(d);
}

}  // namespace orbitguard
