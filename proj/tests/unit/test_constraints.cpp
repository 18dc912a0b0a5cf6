#include <gtest/gtest.h>

#include "orbitguard/constraints.hpp"
#include "test_support.hpp"

#include <cmath>
#include <set>

using namespace orbitguard;

namespace {

const VehicleParams kParams{};

Catalog all_on() {
    Catalog c = default_catalog(kParams);
    c[ConstraintId::Communication].enabled = true;
    return c;
}

FullState at(const Vec3& r, const Vec3& v = Vec3::Zero()) {
    FullState s;
    s.translational.position = r;
    s.translational.velocity = v;
    return s;
}

double h_of(ConstraintId id, const FullState& s, const Catalog& c) {
    const EvalContext ctx{kParams};
    return evaluate(id, s, c[id], ctx).min_h();
}

}  // namespace

TEST(DefaultCatalog, ElevenSpecsWithModes) {
    const Catalog c = default_catalog(kParams);
    int count = 0;
    for (const auto& s : c) {
        ++count;
        const bool switching = s.id == ConstraintId::FuelLimit || s.id == ConstraintId::PassiveSafety;
        EXPECT_EQ(s.mode, switching ? EnforcementMode::Switching : EnforcementMode::Barrier);
        EXPECT_EQ(s.priority, static_cast<int>(index_of(s.id)) + 1);
    }
    EXPECT_EQ(count, 11);
    EXPECT_EQ(c[ConstraintId::FuelLimit].mode, EnforcementMode::Switching);
    EXPECT_EQ(c[ConstraintId::SafeSeparation].priority, 1);
    EXPECT_FALSE(c[ConstraintId::Communication].enabled);
    EXPECT_NO_THROW(c.validate());
}

TEST(DefaultCatalog, EnablingCommunicationKeepsPrioritiesUnique) {
    const Catalog c = all_on();
    std::set<int> ranks;
    int enabled = 0;
    for (const auto& s : c)
        if (s.enabled) {
            ++enabled;
            ranks.insert(s.priority);
        }
    EXPECT_EQ(enabled, 11);
    EXPECT_EQ(ranks.size(), 11u);
    EXPECT_NO_THROW(c.validate());
}

TEST(DefaultCatalog, SpeedSlopeIsTwiceMeanMotion) {
    const Catalog c = default_catalog(kParams);
    EXPECT_DOUBLE_EQ(c[ConstraintId::DynamicSpeed].param("speed_slope"), 2.0 * kParams.mean_motion);
}

TEST(CatalogValidation, DuplicateEnabledPriorityRejected) {
    Catalog c = default_catalog(kParams);
    c[ConstraintId::KeepIn].priority = 1;
    EXPECT_THROW(c.validate(), CatalogError);
    c[ConstraintId::KeepIn].enabled = false;
    EXPECT_NO_THROW(c.validate());
}

TEST(CatalogValidation, KappaAndModeChecked) {
    Catalog c = default_catalog(kParams);
    c[ConstraintId::KeepIn].kappa_strength[0] = 0.0;
    EXPECT_THROW(c.validate(), CatalogError);
    c = default_catalog(kParams);
    c[ConstraintId::FuelLimit].mode = EnforcementMode::Barrier;
    EXPECT_THROW(c.validate(), CatalogError);
}

TEST(CatalogValidation, ParameterRangesEnforced) {
    Catalog c = default_catalog(kParams);
    EXPECT_THROW(c[ConstraintId::Battery].set_param("min_charge", 1.5), CatalogError);
    EXPECT_THROW(c[ConstraintId::Battery].set_param("no_such", 0.5), CatalogError);
    c[ConstraintId::Battery].set_param("min_charge", 0.3);
    EXPECT_DOUBLE_EQ(c[ConstraintId::Battery].param("min_charge"), 0.3);
    c[ConstraintId::Temperature].set_param("min", 400.0);
    EXPECT_THROW(c.validate(), CatalogError);
}

TEST(ConstraintNames, RoundTrip) {
    for (ConstraintId id : kAllConstraints) {
        const auto back = constraint_from_name(constraint_name(id));
        ASSERT_TRUE(back.has_value());
        EXPECT_EQ(*back, id);
    }
    EXPECT_FALSE(constraint_from_name("Gravity").has_value());
}

TEST(Evaluate, SafeSeparationHandValue) {
    const Catalog c = default_catalog(kParams);
    EXPECT_NEAR(h_of(ConstraintId::SafeSeparation, at(Vec3(300.0, 400.0, 0.0)), c), 485.0, 1e-12);
}

TEST(Evaluate, DynamicSpeedHandValue) {
    Catalog c = default_catalog(kParams);
    c[ConstraintId::DynamicSpeed].set_param("speed_slope", 0.002054);
    const FullState s = at(Vec3(0.0, 100.0, 0.0), Vec3(0.0, 0.18, -0.24));
    EXPECT_NEAR(h_of(ConstraintId::DynamicSpeed, s, c), 0.1054, 1e-12);
}

TEST(Evaluate, KeepInBoundary) {
    const Catalog c = default_catalog(kParams);
    EXPECT_NEAR(h_of(ConstraintId::KeepIn, at(Vec3(0.0, 0.0, 1000.0)), c), 0.0, 1e-12);
}

TEST(Evaluate, AxialVelocityRows) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const auto rows = evaluate(ConstraintId::AxialVelocity, at(Vec3(100, 0, 0), Vec3(0.5, -0.25, 0.0)),
                               c[ConstraintId::AxialVelocity], ctx);
    ASSERT_EQ(rows.count(), 3);
    EXPECT_DOUBLE_EQ(rows.rows[0].h, 0.5);
    EXPECT_DOUBLE_EQ(rows.rows[1].h, 0.75);
    EXPECT_DOUBLE_EQ(rows.rows[2].h, 1.0);
    EXPECT_DOUBLE_EQ(rows.rows[0].gradient(slot::kVelocity), -1.0);
    EXPECT_DOUBLE_EQ(rows.rows[1].gradient(slot::kVelocity + 1), 1.0);
    // Subgradient convention at the kink.
    EXPECT_DOUBLE_EQ(rows.rows[2].gradient(slot::kVelocity + 2), 0.0);
}

TEST(Evaluate, AttitudeExclusionAngle) {
    const Catalog c = default_catalog(kParams);
    FullState s;  // boresight +x body = +x Hill, sun at +x at t = 0
    EXPECT_NEAR(h_of(ConstraintId::AttitudeExclusion, s, c), -deg_to_rad(30.0), 1e-12);
    s.attitude.quaternion = Vec4(0.0, 0.0, 1.0, 0.0);  // 180 deg about z: boresight -x
    EXPECT_NEAR(h_of(ConstraintId::AttitudeExclusion, s, c), kPi - deg_to_rad(30.0), 1e-9);
}

TEST(Evaluate, CommunicationAngle) {
    const Catalog c = all_on();
    FullState s;
    // Antenna -z body points -z Hill: 90 deg from -x.
    EXPECT_NEAR(h_of(ConstraintId::Communication, s, c), deg_to_rad(45.0) - kPi / 2.0, 1e-12);
    // Rotate +90 deg about y: body -z maps to Hill -x.
    s.attitude.quaternion = Vec4(0.0, std::sin(kPi / 4.0), 0.0, std::cos(kPi / 4.0));
    EXPECT_NEAR(h_of(ConstraintId::Communication, s, c), deg_to_rad(45.0), 1e-7);
}

TEST(Evaluate, ResourceRows) {
    const Catalog c = default_catalog(kParams);
    FullState s;
    s.resources.temperature = 300.0;
    s.resources.battery = 0.5;
    const EvalContext ctx{kParams};
    const auto t = evaluate(ConstraintId::Temperature, s, c[ConstraintId::Temperature], ctx);
    ASSERT_EQ(t.count(), 2);
    EXPECT_DOUBLE_EQ(t.rows[0].h, 30.0);
    EXPECT_DOUBLE_EQ(t.rows[1].h, 70.0);
    EXPECT_DOUBLE_EQ(h_of(ConstraintId::Battery, s, c), 0.3);
}

TEST(Evaluate, RelativeDegrees) {
    const Catalog c = all_on();
    const EvalContext ctx{kParams};
    const FullState s = at(Vec3(100.0, 50.0, 0.0));
    EXPECT_EQ(evaluate(ConstraintId::SafeSeparation, s, c[ConstraintId::SafeSeparation], ctx).rows[0].relative_degree, 2);
    EXPECT_EQ(evaluate(ConstraintId::KeepIn, s, c[ConstraintId::KeepIn], ctx).rows[0].relative_degree, 2);
    EXPECT_EQ(evaluate(ConstraintId::DynamicSpeed, s, c[ConstraintId::DynamicSpeed], ctx).rows[0].relative_degree, 1);
    EXPECT_EQ(evaluate(ConstraintId::Battery, s, c[ConstraintId::Battery], ctx).rows[0].relative_degree, 1);
}

TEST(Evaluate, SwitchingConstraintsHaveNoGradient) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const FullState s = at(Vec3(100.0, 0.0, 0.0));
    EXPECT_THROW(evaluate(ConstraintId::PassiveSafety, s, c[ConstraintId::PassiveSafety], ctx), ModeError);
    EXPECT_THROW(evaluate(ConstraintId::FuelLimit, s, c[ConstraintId::FuelLimit], ctx), ModeError);
    EXPECT_THROW(gradient_check(ConstraintId::FuelLimit, s, c[ConstraintId::FuelLimit], ctx, 1e-4), ModeError);
    EXPECT_THROW(evaluate(static_cast<ConstraintId>(42), s, c[ConstraintId::KeepIn], ctx), CatalogError);
}

TEST(Evaluate, SwitchingMargins) {
    Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    FullState s = at(Vec3(100.0, 0.0, 0.0));
    s.resources.fuel_used = 5.0;
    EXPECT_DOUBLE_EQ(margin(ConstraintId::FuelLimit, s, c[ConstraintId::FuelLimit], ctx), 15.0);
    // Radial offset at rest drifts away along-track; closest approach is the start.
    const double passive = margin(ConstraintId::PassiveSafety, s, c[ConstraintId::PassiveSafety], ctx);
    EXPECT_LE(passive, 85.0);
    EXPECT_NEAR(passive, 85.0, 0.01);
}

TEST(Evaluate, PairwiseSeparationRows) {
    const Catalog c = default_catalog(kParams);
    const std::array<TranslationalState, 2> others{TranslationalState{Vec3(100.0, 6.0, 8.0), Vec3::Zero()},
                                                   TranslationalState{Vec3(-200.0, 0.0, 0.0), Vec3::Zero()}};
    const EvalContext ctx{kParams, others};
    const auto rows = evaluate(ConstraintId::SafeSeparation, at(Vec3(100.0, 0.0, 0.0)), c[ConstraintId::SafeSeparation], ctx);
    ASSERT_EQ(rows.count(), 3);
    EXPECT_DOUBLE_EQ(rows.rows[0].h, 85.0);
    EXPECT_NEAR(rows.rows[1].h, 0.0, 1e-12);
    EXPECT_NEAR(rows.rows[2].h, 290.0, 1e-12);
}

TEST(GradientCheck, SafeSeparationOnAxis) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const FullState s = at(Vec3(500.0, 0.0, 0.0));
    const auto rows = evaluate(ConstraintId::SafeSeparation, s, c[ConstraintId::SafeSeparation], ctx);
    EXPECT_TRUE(rows.rows[0].gradient.segment<3>(slot::kPosition).isApprox(Vec3(1.0, 0.0, 0.0)));
    const auto res = gradient_check(ConstraintId::SafeSeparation, s, c[ConstraintId::SafeSeparation], ctx, 1e-4);
    EXPECT_FALSE(res.skipped);
    EXPECT_LT(res.max_relative_error, 1e-6);
}

TEST(GradientCheck, DynamicSpeedGeneric) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const FullState s = at(Vec3(120.0, -40.0, 30.0), Vec3(0.1, 0.2, -0.05));
    const auto res = gradient_check(ConstraintId::DynamicSpeed, s, c[ConstraintId::DynamicSpeed], ctx, 1e-4);
    EXPECT_FALSE(res.skipped);
    EXPECT_LT(res.max_relative_error, 1e-6);
}

TEST(GradientCheck, AxialVelocityAtRest) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const auto res = gradient_check(ConstraintId::AxialVelocity, at(Vec3(100.0, 0.0, 0.0)),
                                    c[ConstraintId::AxialVelocity], ctx, 1e-4);
    EXPECT_FALSE(res.skipped);
    EXPECT_DOUBLE_EQ(res.max_relative_error, 0.0);
}

TEST(GradientCheck, SingularRangeSkipped) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const auto res = gradient_check(ConstraintId::KeepIn, at(Vec3::Zero()), c[ConstraintId::KeepIn], ctx, 1e-4);
    EXPECT_TRUE(res.skipped);
    EXPECT_FALSE(res.diagnostic.empty());
}

TEST(Kappa, ClassKappaBasics) {
    EXPECT_DOUBLE_EQ(kappa(0.0, 0.3), 0.0);
    EXPECT_DOUBLE_EQ(kappa(2.0, 0.5), 1.0);
    EXPECT_LT(kappa(1.0, 0.1), kappa(1.5, 0.1));
    EXPECT_LT(kappa(-2.0, 0.1), kappa(-1.0, 0.1));
}

TEST(SecondOrder, KeepInAtRest) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const auto& spec = c[ConstraintId::KeepIn];
    const auto psi = extend_second_order(ConstraintId::KeepIn, at(Vec3(0.0, 600.0, 0.0)), spec, ctx);
    EXPECT_NEAR(psi.rows[0].h, kappa(400.0, spec.kappa_strength[0]), 1e-12);
    EXPECT_GT(psi.rows[0].h, 0.0);
}

TEST(SecondOrder, KeepInHandValue) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    const auto psi =
        extend_second_order(ConstraintId::KeepIn, at(Vec3(900.0, 0.0, 0.0), Vec3(1.0, 0.0, 0.0)), c[ConstraintId::KeepIn], ctx);
    EXPECT_NEAR(psi.rows[0].h, 4.0, 1e-12);
    // d psi / dv = -r_hat exposes the control in the QP row.
    EXPECT_TRUE(psi.rows[0].gradient.segment<3>(slot::kVelocity).isApprox(Vec3(-1.0, 0.0, 0.0)));
}

TEST(SecondOrder, SafeSeparationClosingSpeedLowersPsi) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    double last = 1e300;
    for (double speed : {0.0, 0.2, 0.5, 1.0, 2.0}) {
        const auto psi = extend_second_order(ConstraintId::SafeSeparation, at(Vec3(0.0, 60.0, 0.0), Vec3(0.0, -speed, 0.0)),
                                             c[ConstraintId::SafeSeparation], ctx);
        EXPECT_LT(psi.rows[0].h, last);
        last = psi.rows[0].h;
    }
}

TEST(SecondOrder, DegreeOneRejected) {
    const Catalog c = default_catalog(kParams);
    const EvalContext ctx{kParams};
    EXPECT_THROW(extend_second_order(ConstraintId::DynamicSpeed, at(Vec3(100, 0, 0)), c[ConstraintId::DynamicSpeed], ctx),
                 ModeError);
}

// psi must equal the time derivative of the barrier along the unforced flow plus kappa(h).
double flow_rate(ConstraintId id, const FullState& s, const ConstraintSpec& spec, const EvalContext& ctx) {
    const double dt = 1e-3;
    const FullState fwd = propagate_rk4(s, {}, dt, kParams);
    const FullState fwd2 = propagate_rk4(s, {}, 2.0 * dt, kParams);
    const double h0 = barrier_functions(id, s, spec, ctx).rows[0].h;
    const double h1 = barrier_functions(id, fwd, spec, ctx).rows[0].h;
    const double h2 = barrier_functions(id, fwd2, spec, ctx).rows[0].h;
    // Second-order one-sided difference: (-3 h0 + 4 h1 - h2) / (2 dt).
    return (-3.0 * h0 + 4.0 * h1 - h2) / (2.0 * dt);
}

TEST(SecondOrder, RadialPsiMatchesFlowDerivative) {
    test::StateSampler sampler(21);
    const Catalog c = all_on();
    const EvalContext ctx{kParams};
    for (ConstraintId id : {ConstraintId::SafeSeparation, ConstraintId::KeepIn}) {
        const auto& spec = c[id];
        for (int trial = 0; trial < 50; ++trial) {
            const FullState s = sampler.state();
            const double h0 = barrier_functions(id, s, spec, ctx).rows[0].h;
            const double psi = extend_second_order(id, s, spec, ctx).rows[0].h;
            const double expected = flow_rate(id, s, spec, ctx) + kappa(h0, spec.kappa_strength[0]);
            EXPECT_NEAR(psi, expected, 1e-6 * std::max(1.0, std::abs(expected)))
                << constraint_name(id) << " trial " << trial;
        }
    }
}

TEST(SecondOrder, PointingPsiIsBrakingMargin) {
    test::StateSampler sampler(23);
    const Catalog c = all_on();
    const EvalContext ctx{kParams};
    const double alpha = kParams.max_torque / 0.022;
    for (ConstraintId id : {ConstraintId::AttitudeExclusion, ConstraintId::Communication}) {
        const auto& spec = c[id];
        const double decel = kPointingBrakingFraction * alpha * std::sin(deg_to_rad(spec.params[0]));
        for (int trial = 0; trial < 50; ++trial) {
            const FullState s = sampler.state();
            const double h0 = barrier_functions(id, s, spec, ctx).rows[0].h;
            const double approach = std::max(0.0, decel * kPointingBrakingLead - flow_rate(id, s, spec, ctx));
            const double expected = h0 - approach * approach / (2.0 * decel);
            const double psi = extend_second_order(id, s, spec, ctx).rows[0].h;
            EXPECT_NEAR(psi, expected, 1e-6 * std::max(1.0, std::abs(expected)))
                << constraint_name(id) << " trial " << trial;
            EXPECT_LE(psi, h0);
        }
    }
}

// Property: analytic gradients match central differences at 1000 random in-envelope states.
TEST(ConstraintProperties, GradientSuite) {
    test::StateSampler sampler(22);
    const Catalog c = all_on();
    const EvalContext ctx{kParams};
    for (int trial = 0; trial < 1000; ++trial) {
        const FullState s = sampler.state();
        for (const auto& spec : c) {
            if (spec.mode != EnforcementMode::Barrier) continue;
            const auto res = gradient_check(spec.id, s, spec, ctx, 1e-4);
            if (res.skipped) continue;
            ASSERT_LT(res.max_relative_error, 1e-5) << constraint_name(spec.id) << " trial " << trial;
        }
    }
}

TEST(ConstraintProperties, EvaluateIsPure) {
    test::StateSampler sampler(23);
    const Catalog c = all_on();
    const EvalContext ctx{kParams};
    for (int trial = 0; trial < 50; ++trial) {
        const FullState s = sampler.state();
        for (const auto& spec : c) {
            if (spec.mode != EnforcementMode::Barrier) continue;
            const auto a = evaluate(spec.id, s, spec, ctx);
            const auto b = evaluate(spec.id, s, spec, ctx);
            ASSERT_EQ(a.count(), b.count());
            for (int r = 0; r < a.count(); ++r) {
                EXPECT_EQ(a.rows[r].h, b.rows[r].h);
                EXPECT_EQ(a.rows[r].gradient, b.rows[r].gradient);
            }
        }
    }
}

TEST(ConstraintProperties, HandBuiltViolations) {
    const Catalog c = all_on();
    const EvalContext ctx{kParams};
    auto expect_violated = [&](ConstraintId id, const FullState& s) {
        EXPECT_LT(margin(id, s, c[id], ctx), 0.0) << constraint_name(id);
    };
    FullState s;
    s.attitude.quaternion = Vec4(0.0, std::sin(kPi / 4.0), 0.0, std::cos(kPi / 4.0));
    s.time = 100.0;
    s.translational.position = Vec3(100.0, 0.0, 0.0);
    FullState v = s;
    v.translational.position = Vec3(10.0, 0.0, 0.0);
    expect_violated(ConstraintId::SafeSeparation, v);
    v = s;
    v.translational.velocity = Vec3(0.0, 0.5, 0.0);
    expect_violated(ConstraintId::DynamicSpeed, v);
    v = s;
    v.translational.position = Vec3(0.0, 1200.0, 0.0);
    expect_violated(ConstraintId::KeepIn, v);
    v = s;
    v.translational.position = Vec3(0.0, 40.0, 0.0);
    v.translational.velocity = Vec3(0.0, -0.3, 0.0);
    expect_violated(ConstraintId::PassiveSafety, v);
    v = s;
    v.translational.velocity = Vec3(0.0, 0.0, -1.5);
    expect_violated(ConstraintId::AxialVelocity, v);
    v = s;
    v.attitude.quaternion = Vec4(0.0, 0.0, 0.0, 1.0);
    v.time = 0.0;
    expect_violated(ConstraintId::AttitudeExclusion, v);
    v = s;
    v.attitude.quaternion = Vec4(0.0, 0.0, 0.0, 1.0);
    expect_violated(ConstraintId::Communication, v);
    v = s;
    v.resources.temperature = 340.0;
    expect_violated(ConstraintId::Temperature, v);
    v.resources.temperature = 220.0;
    expect_violated(ConstraintId::Temperature, v);
    v = s;
    v.resources.battery = 0.1;
    expect_violated(ConstraintId::Battery, v);
    v = s;
    v.attitude.body_rate = Vec3(0.0, -0.2, 0.0);
    expect_violated(ConstraintId::AngularVelocity, v);
    v = s;
    v.resources.fuel_used = 21.0;
    expect_violated(ConstraintId::FuelLimit, v);
}

TEST(PassiveSafety, DetectsDriftIntoChief) {
    // Along-track offset closing at 0.3 m/s: free drift reaches the keep-out sphere.
    TranslationalState ts{Vec3(0.0, 40.0, 0.0), Vec3(0.0, -0.3, 0.0)};
    EXPECT_LT(passive_safety_margin(ts, kParams.mean_motion, 15.0, kParams.orbital_period(), 10.0), 0.0);
}

TEST(PassiveSafety, NeverOverestimatesDenseMinimum) {
    test::StateSampler sampler(24);
    for (int trial = 0; trial < 200; ++trial) {
        TranslationalState ts{sampler.position_in_shell(20.0, 400.0), sampler.vec(-0.3, 0.3)};
        const double horizon = kParams.orbital_period();
        const double bound = passive_safety_margin(ts, kParams.mean_motion, 15.0, horizon, 10.0);
        double dense = 1e300;
        Vec6 x0;
        x0 << ts.position, ts.velocity;
        for (double t = 0.0; t <= horizon; t += 0.5)
            dense = std::min(dense, (cw_stm(kParams.mean_motion, t) * x0).head<3>().norm() - 15.0);
        EXPECT_LE(bound, dense + 1e-9) << "trial " << trial;
        EXPECT_GT(bound, dense - 1.0) << "trial " << trial;
    }
}
