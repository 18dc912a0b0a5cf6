#include <gtest/gtest.h>

#include "orbitguard/rta.hpp"
#include "test_support.hpp"

#include <cmath>
#include <cstring>

using namespace orbitguard;

namespace {

const VehicleParams kParams{};
const double kN = kParams.mean_motion;

FullState at(const Vec3& r, const Vec3& v = Vec3::Zero()) {
    FullState s;
    s.translational.position = r;
    s.translational.velocity = v;
    s.attitude.quaternion = test::sun_safe_attitude();
    return s;
}

ControlCommand thrust(double x, double y, double z) {
    ControlCommand c;
    c.thrust = Vec3(x, y, z);
    return c;
}

Catalog translational_only() {
    Catalog c = default_catalog(kParams);
    for (auto id : kAllConstraints) c[id].enabled = false;
    for (auto id : {ConstraintId::SafeSeparation, ConstraintId::DynamicSpeed, ConstraintId::KeepIn,
                    ConstraintId::AxialVelocity})
        c[id].enabled = true;
    return c;
}

double box_diameter() {
    return 2.0 * std::sqrt(3.0 * kParams.max_thrust * kParams.max_thrust +
                           3.0 * kParams.max_torque * kParams.max_torque);
}

bool same_decision(const FilterDecision& a, const FilterDecision& b) {
    return a.u_act == b.u_act && a.mode == b.mode && a.intervened == b.intervened && a.cause == b.cause &&
           a.solver.active_set == b.solver.active_set && a.solver.status == b.solver.status &&
           std::memcmp(a.margins.data(), b.margins.data(), sizeof(double) * kConstraintCount) == 0;
}

}  // namespace

TEST(BarrierRow, DynamicSpeedAtRestIsTriviallySatisfied) {
    const Catalog c = default_catalog(kParams);
    const FullState s = at({100.0, 0.0, 0.0});
    const BarrierRow row = barrier_row(s, c[ConstraintId::DynamicSpeed], kParams);
    const double h = 0.2 + 2.0 * kN * 100.0;
    EXPECT_TRUE(row.degenerate);
    EXPECT_EQ(row.a.norm(), 0.0);
    EXPECT_NEAR(row.margin_h, h, 1e-12);
    EXPECT_NEAR(row.b, -0.1 * h, 1e-12);
    EXPECT_LT(row.b, 0.0);
    EXPECT_EQ(row.source, ConstraintId::DynamicSpeed);
}

TEST(BarrierRow, KeepInSecondOrderMatchesHandDerivation) {
    const Catalog c = default_catalog(kParams);
    const FullState s = at({900.0, 0.0, 0.0}, {1.0, 0.0, 0.0});
    const BarrierRow row = barrier_row(s, c[ConstraintId::KeepIn], kParams);
    // psi = -r_hat.v + 0.05 (1000 - |r|) = 4; psi_dot = -(3 n^2 900 + u_x / m) - 0.05 (r_hat.v).
    ControlVec a = ControlVec::Zero();
    a(0) = -1.0 / kParams.mass;
    EXPECT_LT((row.a - a).norm(), 1e-14);
    EXPECT_NEAR(row.b, 3.0 * kN * kN * 900.0 + 0.05 - 0.1 * 4.0, 1e-12);
    EXPECT_NEAR(row.margin_h, 100.0, 1e-12);
    EXPECT_FALSE(row.degenerate);
}

TEST(BarrierRow, VanishingStrengthLeavesPureDerivativeCondition) {
    const Catalog c = default_catalog(kParams);
    ConstraintSpec spec = c[ConstraintId::DynamicSpeed];
    const FullState s = at({300.0, -50.0, 20.0}, {-0.2, 0.1, 0.05});
    const EvalContext ctx{kParams};
    const double lf = evaluate(spec.id, s, spec, ctx).rows[0].gradient.dot(drift_vector(s, kParams));
    for (double k : {1e-2, 1e-5, 1e-9}) {
        spec.kappa_strength = {k, k};
        const double h = evaluate(spec.id, s, spec, ctx).rows[0].h;
        EXPECT_NEAR(barrier_row(s, spec, kParams).b, -lf, 2.0 * k * h);
    }
    spec.kappa_strength = {0.0, 0.0};
    EXPECT_DOUBLE_EQ(barrier_row(s, spec, kParams).b, -lf);
}

TEST(BarrierRow, SwitchingConstraintsHaveNoRow) {
    const Catalog c = default_catalog(kParams);
    EXPECT_THROW(barrier_row(at({100, 0, 0}), c[ConstraintId::FuelLimit], kParams), ModeError);
    EXPECT_THROW(barrier_row(at({100, 0, 0}), c[ConstraintId::PassiveSafety], kParams), ModeError);
}

TEST(FilterRows, TighteningOnlyOnDynamicSpeed) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const FullState s = at({300.0, 100.0, 0.0}, {-0.4, 0.1, 0.0});
    const auto loose = filter_rows(s, c, ctx, 0.0);
    const auto tight = filter_rows(s, c, ctx, 0.1);
    ASSERT_EQ(loose.size(), tight.size());
    for (std::size_t i = 0; i < loose.size(); ++i) {
        if (loose[i].source == ConstraintId::DynamicSpeed) {
            // dt/2 * (sqrt(3) F/m + |drift|)^2 / |v|
            const Vec3 drift(3 * kN * kN * 300.0 + 2 * kN * 0.1, -2 * kN * -0.4, 0.0);
            const double acc = std::sqrt(3.0) / 12.0 + drift.norm();
            EXPECT_NEAR(tight[i].b - loose[i].b, 0.05 * acc * acc / std::hypot(0.4, 0.1), 1e-12);
        } else {
            EXPECT_EQ(tight[i].b, loose[i].b);
        }
    }
}

TEST(FilterRows, DisablingRemovesExactlyItsRows) {
    const EvalContext ctx{kParams};
    test::StateSampler sampler(31);
    Catalog all = default_catalog(kParams);
    all[ConstraintId::Communication].enabled = true;
    for (int trial = 0; trial < 20; ++trial) {
        const FullState s = sampler.state();
        const auto full = filter_rows(s, all, ctx, 0.1);
        for (auto off : kAllConstraints) {
            Catalog c = all;
            c[off].enabled = false;
            const auto reduced = filter_rows(s, c, ctx, 0.1);
            std::vector<BarrierRow> expected;
            for (const auto& r : full)
                if (r.source != off) expected.push_back(r);
            ASSERT_EQ(reduced.size(), expected.size());
            for (std::size_t i = 0; i < expected.size(); ++i) {
                EXPECT_EQ(reduced[i].a, expected[i].a);
                EXPECT_EQ(reduced[i].b, expected[i].b);
            }
        }
    }
}

TEST(RelaxationWeight, PriorityMapping) {
    EXPECT_TRUE(relaxation_weight(1, 11).hard);
    EXPECT_TRUE(relaxation_weight(2, 11).hard);
    EXPECT_FALSE(relaxation_weight(3, 11).hard);
    EXPECT_DOUBLE_EQ(relaxation_weight(3, 11).weight, 1e8);
    EXPECT_DOUBLE_EQ(relaxation_weight(11, 11).weight, 1.0);
    EXPECT_DOUBLE_EQ(relaxation_weight(7, 9).weight, 100.0);
}

TEST(Asif, FarFromBoundariesPassesThrough) {
    const Catalog c = default_catalog(kParams);
    ControlCommand u = thrust(0.3, -0.2, 0.1);
    u.torque = Vec3(1e-4, -2e-4, 0.0);
    const FilterDecision d = asif_filter(at({400.0, 200.0, 0.0}, {0.01, 0.0, 0.0}), u, c, kParams);
    EXPECT_EQ(d.mode, FilterMode::PassThrough);
    EXPECT_FALSE(d.intervened);
    EXPECT_EQ(d.u_act, u);
    EXPECT_TRUE(d.cause.empty());
    EXPECT_EQ(d.solver.iterations, 0);
}

TEST(Asif, InwardThrustClosedLoopHoldsSpeedLimit) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    AsifFilter filter;
    FullState s = at({200.0, 0.0, 0.0});
    double worst = 1e9;
    double worst_any = 1e9;
    bool intervened = false;
    for (int k = 0; k < 30000; ++k) {
        const FilterDecision d = filter.filter(s, thrust(-1.0, 0.0, 0.0), c, ctx);
        intervened = intervened || d.intervened;
        worst = std::min(worst, margin(ConstraintId::DynamicSpeed, s, c[ConstraintId::DynamicSpeed], ctx));
        for (const auto& spec : c)
            if (spec.mode == EnforcementMode::Barrier && spec.enabled)
                worst_any = std::min(worst_any, normalized_margin(spec.id, s, spec, ctx));
        s = propagate_rk4(s, d.u_act, 0.1, kParams);
    }
    EXPECT_TRUE(intervened);
    EXPECT_GE(worst, -1e-3);
    EXPECT_GE(worst_any, -1e-3);
}

TEST(Asif, ControllerAgnostic) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    test::StateSampler sampler(32);
    for (int trial = 0; trial < 100; ++trial) {
        const FullState s = sampler.state();
        ControlCommand u = thrust(sampler.uniform(-1, 1), sampler.uniform(-1, 1), sampler.uniform(-1, 1));
        u.torque = sampler.vec(-1e-3, 1e-3);
        AsifFilter first(AsifConfig{{BackupKind::EnmtInsertion, {}}, false, 0.1});
        AsifFilter second(AsifConfig{{BackupKind::EnmtInsertion, {}}, false, 0.1});
        EXPECT_TRUE(same_decision(first.filter(s, u, c, ctx), second.filter(s, u, c, ctx)));
        EXPECT_TRUE(same_decision(asif_filter(s, u, c, kParams), asif_filter(s, u, c, kParams)));
    }
}

TEST(Asif, HardCoreInfeasibleFallsBackToBackup) {
    const Catalog c = default_catalog(kParams);
    const FullState s = at({16.0, 0.0, 0.0}, {-1.0, 0.0, 0.0});
    const FilterDecision d = asif_filter(s, thrust(-1.0, 0.0, 0.0), c, kParams);
    EXPECT_EQ(d.mode, FilterMode::SwitchedToBackup);
    EXPECT_TRUE(d.intervened);
    EXPECT_FALSE(d.diagnostic.empty());
    EXPECT_TRUE(within_box(d.u_act, kParams));
    EXPECT_EQ(d.u_act, backup_enmt(s, kParams));
    EXPECT_NE(std::find(d.cause.begin(), d.cause.end(), ConstraintId::SafeSeparation), d.cause.end());
}

TEST(Asif, SoftConflictIsRelaxedByPriority) {
    const Catalog c = default_catalog(kParams);
    const FullState s = at({995.0, 0.0, 0.0}, {0.9, 0.0, 0.0});
    const FilterDecision d = asif_filter(s, {}, c, kParams);
    EXPECT_EQ(d.solver.status, QpStatus::RelaxedOptimal);
    EXPECT_EQ(d.mode, FilterMode::QpModified);
    EXPECT_GT(d.solver.max_slack, 0.0);
    // KeepIn slack costs 1e8, so the command brakes at the box limit.
    EXPECT_NEAR(d.u_act.thrust.x(), -kParams.max_thrust, 1e-6);
    EXPECT_NE(std::find(d.cause.begin(), d.cause.end(), ConstraintId::KeepIn), d.cause.end());
}

TEST(Asif, ViolatedDegenerateRowTriggersBackup) {
    const Catalog c = default_catalog(kParams);
    FullState s = at({400.0, 0.0, 0.0});
    s.resources.battery = 0.1;
    const FilterDecision d = asif_filter(s, thrust(0.1, 0.0, 0.0), c, kParams);
    EXPECT_EQ(d.mode, FilterMode::SwitchedToBackup);
    ASSERT_EQ(d.cause.size(), 1u);
    EXPECT_EQ(d.cause[0], ConstraintId::Battery);
}

TEST(Asif, OutOfBoxCommandIsProjected) {
    const Catalog c = default_catalog(kParams);
    const FilterDecision d = asif_filter(at({400.0, 200.0, 0.0}), thrust(3.0, 0.0, 0.0), c, kParams);
    EXPECT_EQ(d.mode, FilterMode::QpModified);
    EXPECT_DOUBLE_EQ(d.u_act.thrust.x(), kParams.max_thrust);
    EXPECT_TRUE(d.cause.empty());
}

TEST(BackupEnmt, OnManifoldCommandIsNegligible) {
    const FullState s = at({50.0, 120.0, -10.0}, {0.0, -2.0 * kN * 50.0, 0.02});
    const ControlCommand u = backup_enmt(s, kParams);
    EXPECT_LT(u.to_vector().norm(), 1e-3);
}

TEST(BackupEnmt, ConvergedOrbitIsClosedAndClear) {
    FullState s = at({20.0, 400.0, 10.0}, {0.05, 0.08, -0.01});
    for (int k = 0; k < 20000; ++k) s = propagate_rk4(s, backup_enmt(s, kParams), 0.1, kParams);
    const double e = s.translational.velocity.y() + 2.0 * kN * s.translational.position.x();
    EXPECT_LT(std::abs(e), 1e-4);

    const double period = kParams.orbital_period();
    Vec6 x0;
    x0 << s.translational.position, s.translational.velocity;
    double extent = 0.0;
    double closest = 1e9;
    for (int k = 0; k <= 1000; ++k) {
        const Vec6 x = cw_stm(kN, 2.0 * period * k / 1000.0) * x0;
        extent = std::max(extent, x.head<3>().norm());
        closest = std::min(closest, x.head<3>().norm());
    }
    const Vec6 after_one = cw_stm(kN, period) * x0;
    const Vec6 after_two = cw_stm(kN, 2.0 * period) * x0;
    EXPECT_GT(closest, 15.0);
    EXPECT_LT((after_one.head<3>() - x0.head<3>()).norm(), 0.01 * extent);
    EXPECT_LT((after_two.head<3>() - after_one.head<3>()).norm(), 0.01 * extent);
}

TEST(BackupEnmt, OutputAlwaysWithinBox) {
    test::StateSampler sampler(33);
    for (int trial = 0; trial < 2000; ++trial) {
        FullState s = sampler.state();
        s.translational.velocity *= 20.0;
        s.attitude.body_rate *= 30.0;
        for (auto kind : {BackupKind::EnmtInsertion, BackupKind::ZeroThrustCoast, BackupKind::Detumble})
            EXPECT_TRUE(within_box(BackupController{kind, {}}.command(s, kParams), kParams));
    }
}

TEST(BackupEnmt, RejectsNonFiniteState) {
    FullState s = at({1.0, 2.0, 3.0});
    s.translational.velocity.x() = std::nan("");
    EXPECT_THROW(backup_enmt(s, kParams), DomainError);
}

TEST(SwitchingMonitor, NaturalMotionOrbitIsSafeOverOnePeriod) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const FullState s = at({0.0, 200.0, 0.0}, {100.0 * kN, 0.0, 0.0});
    const BackupController coast{BackupKind::ZeroThrustCoast, {}};
    EXPECT_TRUE(switching_monitor(s, {}, coast, kParams.orbital_period(), 10.0, c, ctx));
}

TEST(SwitchingMonitor, SustainedClosureIsUnsafe) {
    const Catalog c = translational_only();
    const EvalContext ctx{kParams};
    Catalog sep_only = c;
    for (auto id : {ConstraintId::DynamicSpeed, ConstraintId::KeepIn, ConstraintId::AxialVelocity})
        sep_only[id].enabled = false;
    const FullState s = at({30.0, 0.0, 0.0}, {-1.0, 0.0, 0.0});
    const BackupController coast{BackupKind::ZeroThrustCoast, {}};
    EXPECT_FALSE(switching_monitor(s, thrust(-1.0, 0.0, 0.0), coast, kParams.orbital_period(), 10.0, c, ctx));
    const MonitorResult r = monitor_rollout(s, thrust(-1.0, 0.0, 0.0), coast, kParams.orbital_period(), 10.0,
                                            sep_only, ctx);
    EXPECT_FALSE(r.safe);
    EXPECT_EQ(r.violated, ConstraintId::SafeSeparation);
    EXPECT_LE(r.violation_time, 30.0);
}

TEST(SwitchingMonitor, ZeroHorizonIsExplicitCheck) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const FullState s = at({300.0, 100.0, 0.0}, {0.0, -2.0 * kN * 300.0, 0.0});
    for (const auto& spec : c)
        if (spec.enabled) ASSERT_GT(margin(spec.id, s, spec, ctx), 0.0) << constraint_name(spec.id);
    EXPECT_TRUE(switching_monitor(s, {}, BackupController{}, 0.0, 10.0, c, ctx));
    EXPECT_THROW(switching_monitor(s, {}, BackupController{}, -1.0, 10.0, c, ctx), ConfigError);
}

// Property: the STM fast path and an RK4 rollout disagree only where the margin is within 1e-3.
TEST(SwitchingMonitor, StmFastPathAgreesWithRk4) {
    const Catalog c = translational_only();
    const EvalContext ctx{kParams};
    const BackupController coast{BackupKind::ZeroThrustCoast, {}};
    MonitorOptions rk4;
    rk4.stm_fast_path = false;
    rk4.rollout_step = 10.0;
    test::StateSampler sampler(34);
    int unsafe = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const FullState s = at(sampler.position_in_shell(30.0, 900.0), sampler.vec(-0.15, 0.15));
        const MonitorResult fast = monitor_rollout(s, {}, coast, kParams.orbital_period(), 10.0, c, ctx);
        const MonitorResult slow = monitor_rollout(s, {}, coast, kParams.orbital_period(), 10.0, c, ctx, rk4);
        unsafe += fast.safe ? 0 : 1;
        if (fast.safe != slow.safe) {
            const MonitorResult& safe_side = fast.safe ? fast : slow;
            EXPECT_LT(safe_side.min_margin, 1e-3) << "trial " << trial;
        }
    }
    EXPECT_GT(unsafe, 50);
    EXPECT_LT(unsafe, 950);
}

TEST(SwitchingFilter, MonitorTruePassesDesired) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const FullState s = at({0.0, 200.0, 0.0}, {100.0 * kN, 0.0, 0.0});
    const ControlCommand u = thrust(0.01, 0.0, 0.0);
    const FilterDecision d = switching_filter(s, u, BackupController{}, c, ctx, 600.0, 10.0);
    EXPECT_EQ(d.mode, FilterMode::PassThrough);
    EXPECT_EQ(d.u_act, u);
}

TEST(SwitchingFilter, MonitorFalseUsesBackup) {
    const Catalog c = translational_only();
    const EvalContext ctx{kParams};
    const FullState s = at({30.0, 0.0, 0.0}, {-1.0, 0.0, 0.0});
    const BackupController enmt{BackupKind::EnmtInsertion, {}};
    const FilterDecision d = switching_filter(s, thrust(-1.0, 0.0, 0.0), enmt, c, ctx, 600.0, 10.0);
    EXPECT_EQ(d.mode, FilterMode::SwitchedToBackup);
    EXPECT_TRUE(d.intervened);
    EXPECT_EQ(d.u_act, enmt.command(s, kParams));
    EXPECT_TRUE(within_box(d.u_act, kParams));
}

TEST(Pipeline, CompliantCommandPassesEndToEnd) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    RtaPipeline pipe;
    const FullState s = at({0.0, 300.0, 0.0}, {150.0 * kN, 0.0, 0.0});
    const ControlCommand u = thrust(0.001, 0.0, 0.0);
    const FilterDecision d = pipe.step(s, u, c, ctx);
    EXPECT_EQ(d.mode, FilterMode::PassThrough);
    EXPECT_EQ(d.u_act, u);
    for (const auto& spec : c) EXPECT_EQ(std::isnan(d.margins[index_of(spec.id)]), !spec.enabled);
}

TEST(Pipeline, FuelExhaustedSwitchesAndLatches) {
    Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    RtaPipeline pipe;
    FullState s = at({0.0, 300.0, 0.0}, {150.0 * kN, 0.0, 0.0});
    s.resources.fuel_used = 20.0 - 1e-4;
    const ControlCommand u = thrust(0.5, 0.0, 0.0);
    ASSERT_EQ(asif_filter(s, u, c, kParams).mode, FilterMode::PassThrough);

    FilterDecision d = pipe.step(s, u, c, ctx);
    EXPECT_EQ(d.mode, FilterMode::SwitchedToBackup);
    EXPECT_EQ(d.u_act, ControlCommand{});
    ASSERT_EQ(d.cause.size(), 1u);
    EXPECT_EQ(d.cause[0], ConstraintId::FuelLimit);
    EXPECT_TRUE(pipe.fuel_latched());

    // Latched even for a zero-thrust request until the operator steps in.
    d = pipe.step(s, {}, c, ctx);
    EXPECT_EQ(d.mode, FilterMode::SwitchedToBackup);
    d = pipe.step(s, u, c, ctx, thrust(0.2, 0.0, 0.0));
    EXPECT_EQ(d.mode, FilterMode::Override);
    EXPECT_EQ(d.u_act, thrust(0.2, 0.0, 0.0));

    c[ConstraintId::FuelLimit].set_param("budget", 40.0);
    d = pipe.step(s, u, c, ctx);
    EXPECT_FALSE(pipe.fuel_latched());
    EXPECT_EQ(d.mode, FilterMode::PassThrough);
}

TEST(Pipeline, PassiveSafetyBlocksDriftIntoChief) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    RtaPipeline pipe;
    // Free drift from here clears the chief; a sustained inward push would not.
    FullState s = at({0.0, 40.0, 0.0});
    const ControlCommand u = thrust(0.0, -1.0, 0.0);
    bool switched = false;
    for (int k = 0; k < 400 && !switched; ++k) {
        const FilterDecision d = pipe.step(s, u, c, ctx);
        if (d.mode == FilterMode::SwitchedToBackup) {
            switched = true;
            EXPECT_EQ(d.cause[0], ConstraintId::PassiveSafety);
        }
        s = propagate_rk4(s, d.u_act, 0.1, kParams);
    }
    EXPECT_TRUE(switched);
    const auto& ps = c[ConstraintId::PassiveSafety];
    EXPECT_GE(margin(ConstraintId::PassiveSafety, s, ps, ctx), -1e-6);
}

TEST(Pipeline, OverrideBypassesButLogsMargins) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    RtaPipeline pipe;
    const FullState s = at({14.0, 0.0, 0.0}, {-0.5, 0.0, 0.0});
    const ControlCommand scripted = thrust(-1.0, 0.0, 0.0);
    const FilterDecision d = pipe.step(s, {}, c, ctx, scripted);
    EXPECT_EQ(d.mode, FilterMode::Override);
    EXPECT_TRUE(d.intervened);
    EXPECT_EQ(d.u_act, scripted);
    EXPECT_LT(d.margins[index_of(ConstraintId::SafeSeparation)], 0.0);
    EXPECT_NE(std::find(d.cause.begin(), d.cause.end(), ConstraintId::SafeSeparation), d.cause.end());
    EXPECT_FALSE(d.diagnostic.empty());
    for (const auto& spec : c) EXPECT_EQ(std::isnan(d.margins[index_of(spec.id)]), !spec.enabled);
}

TEST(Pipeline, RejectsBadPeriod) {
    PipelineConfig cfg;
    cfg.control_period = 0.0;
    EXPECT_THROW(RtaPipeline{cfg}, ConfigError);
}

// Property: PassThrough iff u_des already satisfies every row and the box; otherwise the
// correction stays within the sanity bound.
TEST(RtaProperties, MinimalInvasiveness) {
    Catalog c = default_catalog(kParams);
    c[ConstraintId::Communication].enabled = true;
    const EvalContext ctx{kParams};
    test::StateSampler sampler(35);
    AsifFilter filter;
    int passed = 0;
    int modified = 0;
    for (int trial = 0; trial < 2000; ++trial) {
        FullState s = sampler.state();
        s.translational.velocity *= 0.3;
        s.attitude.body_rate *= 0.3;
        const double scale = trial % 2 == 0 ? 0.1 : 1.2;
        ControlCommand u = thrust(sampler.uniform(-scale, scale), sampler.uniform(-scale, scale),
                                  sampler.uniform(-scale, scale));
        u.torque = sampler.vec(-1e-3, 1e-3) * scale;
        bool feasible = within_box(u, kParams);
        for (const auto& r : filter_rows(s, c, ctx, 0.1)) {
            if (r.degenerate) {
                feasible = feasible && r.margin_h > 0.0;
            } else {
                feasible = feasible && r.a.dot(u.to_vector()) >= r.b;
            }
        }
        const FilterDecision d = filter.filter(s, u, c, ctx);
        if (feasible) {
            ++passed;
            EXPECT_EQ(d.mode, FilterMode::PassThrough) << "trial " << trial;
            EXPECT_EQ(d.u_act, u);
        } else {
            ++modified;
            EXPECT_TRUE(d.intervened);
            const ControlVec backup = backup_enmt(s, kParams).to_vector();
            EXPECT_LE((d.u_act.to_vector() - u.to_vector()).norm(),
                      (u.to_vector() - backup).norm() + box_diameter());
        }
        EXPECT_EQ(d.mode == FilterMode::PassThrough, !d.intervened);
    }
    EXPECT_GT(passed, 100);
    EXPECT_GT(modified, 100);
}

TEST(RtaProperties, DecisionDeterminism) {
    Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    RtaPipeline a;
    RtaPipeline b;
    test::StateSampler sampler(36);
    for (int trial = 0; trial < 300; ++trial) {
        const FullState s = sampler.state();
        const ControlCommand u = thrust(sampler.uniform(-1, 1), sampler.uniform(-1, 1), sampler.uniform(-1, 1));
        EXPECT_TRUE(same_decision(a.step(s, u, c, ctx), b.step(s, u, c, ctx))) << "trial " << trial;
    }
}

TEST(FilterModeNames, RoundTrip) {
    for (auto m : {FilterMode::PassThrough, FilterMode::QpModified, FilterMode::SwitchedToBackup, FilterMode::Override})
        EXPECT_EQ(filter_mode_from_name(filter_mode_name(m)), m);
    for (auto k : {BackupKind::EnmtInsertion, BackupKind::ZeroThrustCoast, BackupKind::Detumble})
        EXPECT_EQ(backup_from_name(backup_name(k)), k);
    EXPECT_FALSE(filter_mode_from_name("Bogus").has_value());
}
