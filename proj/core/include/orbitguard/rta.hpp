#pragma once

#include "orbitguard/constraints.hpp"
#include "orbitguard/qp.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace orbitguard {

enum class FilterMode { PassThrough, QpModified, SwitchedToBackup, Override };
std::string_view filter_mode_name(FilterMode m);
std::optional<FilterMode> filter_mode_from_name(std::string_view name);

/// Barrier condition L_f h + L_g h u + kappa(h) >= 0 written as a . u >= b.
struct BarrierRow {
    ControlVec a = ControlVec::Zero();
    double b = 0.0;
    ConstraintId source = ConstraintId::SafeSeparation;
    double margin_h = 0.0;
    bool degenerate = false;  // |a| < 1e-12: the control cannot act on this row
};

inline constexpr double kDegenerateRowNorm = 1e-12;

/// All rows contributed by one barrier-mode constraint at this state, using the second-order
/// extension for relative-degree-2 constraints. Throws ModeError for switching constraints.
std::vector<BarrierRow> barrier_rows(const FullState& state, const ConstraintSpec& spec, const EvalContext& ctx);
/// First row of barrier_rows.
BarrierRow barrier_row(const FullState& state, const ConstraintSpec& spec, const VehicleParams& params);

/// Tightening added to b so a row enforced only at samples, with the command held for
/// sample_period, still keeps h >= 0 between samples. Nonzero only for DynamicSpeed, whose -|v|
/// term is concave along any held thrust.
double sampled_data_tightening(const FullState& state, const ConstraintSpec& spec, const VehicleParams& params,
                               double sample_period);

/// Exactly the rows the ASIF hands to the QP at this state: every enabled barrier constraint,
/// sampled-data tightening applied. Degenerate rows are included and flagged.
std::vector<BarrierRow> filter_rows(const FullState& state, const Catalog& catalog, const EvalContext& ctx,
                                    double sample_period);

enum class BackupKind { EnmtInsertion, ZeroThrustCoast, Detumble };
std::string_view backup_name(BackupKind k);
std::optional<BackupKind> backup_from_name(std::string_view name);

struct BackupGains {
    double manifold_gain = 0.05;      // 1/s, drives v_y + 2 n x to zero
    double radial_damping = 0.02;     // 1/s, damps v_x while off the manifold
    double manifold_tolerance = 0.01; // m/s, scale of the radial damping blend
    double detumble_gain = 0.5;       // 1/s
};

struct BackupController {
    BackupKind kind = BackupKind::ZeroThrustCoast;
    BackupGains gains;

    ControlCommand command(const FullState& state, const VehicleParams& params) const;
};

/// Thrust toward the closed natural-motion manifold v_y = -2 n x with v_x damped and the
/// out-of-plane channel left on its natural oscillation; torque detumbles. Saturated to the box.
ControlCommand backup_enmt(const FullState& state, const VehicleParams& params, const BackupGains& gains = {});

ControlCommand clip_to_box(const ControlCommand& cmd, const VehicleParams& params);
bool within_box(const ControlCommand& cmd, const VehicleParams& params, double tol = 0.0);

/// NaN marks a disabled constraint.
using MarginMap = std::array<double, kConstraintCount>;

struct SolverSummary {
    QpStatus status = QpStatus::Optimal;
    int iterations = 0;
    int rows = 0;
    std::vector<int> active_set;
    double max_slack = 0.0;
};

struct FilterDecision {
    ControlCommand u_act;
    bool intervened = false;
    std::vector<ConstraintId> cause;
    FilterMode mode = FilterMode::PassThrough;
    MarginMap margins{};
    SolverSummary solver;
    double latency = 0.0;  // s, wall clock; not part of the deterministic record
    std::string diagnostic;
};

/// Instantaneous margins of every enabled constraint.
MarginMap compute_margins(const FullState& state, const Catalog& catalog, const EvalContext& ctx);

struct AsifConfig {
    BackupController fallback{BackupKind::EnmtInsertion, {}};
    bool warm_start = true;
    double sample_period = 0.1;  // s; 0 enforces the continuous-time rows as written
};

/// Optimization-based filter over the barrier-mode constraints.
class AsifFilter {
  public:
    explicit AsifFilter(AsifConfig cfg = {}) : cfg_(cfg), solver_(cfg.warm_start) {}

    /// Margins are left for the caller; decision.margins is not filled here.
    FilterDecision filter(const FullState& state, const ControlCommand& u_des, const Catalog& catalog,
                          const EvalContext& ctx);

    void reset() { solver_.reset(); }

  private:
    AsifConfig cfg_;
    QpSolver solver_;
};

FilterDecision asif_filter(const FullState& state, const ControlCommand& u_des, const Catalog& catalog,
                           const VehicleParams& params);

/// Slack weights and hard flags for the relaxed QP from operator priority ranks.
struct RelaxationWeight {
    double weight = 1.0;
    bool hard = false;
};
RelaxationWeight relaxation_weight(int rank, int max_rank);

struct MonitorOptions {
    double control_period = 0.1;  // s, length of the u_des step before the backup flow
    bool stm_fast_path = true;    // coast rollouts propagate translation through the STM
    double rollout_step = 0.0;    // s, RK4 step for the backup flow; 0 uses control_period
};

struct MonitorResult {
    bool safe = true;
    double min_margin = 0.0;  // smallest normalized margin seen before stopping
    std::optional<ConstraintId> violated;
    double violation_time = 0.0;  // s after the current state
};

/// The rollout behind switching_monitor; stops at the first violating sample.
MonitorResult monitor_rollout(const FullState& state, const ControlCommand& u_des, const BackupController& backup,
                              double horizon, double dt, const Catalog& catalog, const EvalContext& ctx,
                              const MonitorOptions& options = {});

/// Implicit monitor: one control period under u_des, then the backup flow for horizon seconds
/// sampled every dt. True iff every enabled constraint's instantaneous margin is >= 0 at all
/// samples. horizon = 0 checks the current and the post-step state only.
bool switching_monitor(const FullState& state, const ControlCommand& u_des, const BackupController& backup,
                       double horizon, double dt, const Catalog& catalog, const EvalContext& ctx,
                       const MonitorOptions& options = {});

FilterDecision switching_filter(const FullState& state, const ControlCommand& u_des, const BackupController& backup,
                                const Catalog& catalog, const EvalContext& ctx, double horizon, double dt,
                                const MonitorOptions& options = {});

struct PipelineConfig {
    double control_period = 0.1;
    BackupController fuel_backup{BackupKind::ZeroThrustCoast, {}};
    BackupController passive_backup{BackupKind::ZeroThrustCoast, {}};
    BackupController fallback{BackupKind::EnmtInsertion, {}};
    bool warm_start = true;
};

/// Routes each constraint to its enforcement mode: operator override first, then the switching
/// monitors (fuel, passive safety), then the ASIF over the barrier constraints. One instance
/// per deputy; holds the fuel latch and the QP warm start.
class RtaPipeline {
  public:
    explicit RtaPipeline(PipelineConfig cfg = {});

    FilterDecision step(const FullState& state, const ControlCommand& u_des, const Catalog& catalog,
                        const EvalContext& ctx, const std::optional<ControlCommand>& override_cmd = std::nullopt);

    bool fuel_latched() const { return fuel_latched_; }
    const PipelineConfig& config() const { return cfg_; }
    void reset();

  private:
    PipelineConfig cfg_;
    AsifFilter asif_;
    bool fuel_latched_ = false;
};

}  // namespace orbitguard
