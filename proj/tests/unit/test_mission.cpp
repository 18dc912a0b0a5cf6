#include <gtest/gtest.h>

#include "orbitguard/episode.hpp"
#include "orbitguard/scenario_io.hpp"
#include "test_support.hpp"

#include <numbers>
#include <sstream>

using namespace orbitguard;

namespace {

FullState at(const Vec3& r, const Vec3& v = Vec3::Zero()) {
    FullState s;
    s.translational.position = r;
    s.translational.velocity = v;
    s.attitude.quaternion = test::sun_safe_attitude();
    return s;
}

PolicySpec random_policy(std::uint64_t seed, int hold = 50) {
    PolicySpec p;
    p.kind = PolicyKind::RandomPolicy;
    p.seed = seed;
    p.hold_steps = hold;
    return p;
}

// Empty inspection task: the inspect policy has nothing left and commands zero.
PolicySpec idle_policy() {
    PolicySpec p;
    p.kind = PolicyKind::ScriptedInspect;
    return p;
}

Scenario base_scenario(double duration) {
    Scenario s;
    s.name = "unit";
    s.catalog = default_catalog(s.vehicle);
    s.catalog[ConstraintId::PassiveSafety].enabled = false;
    s.duration = duration;
    return s;
}

Scenario single(const FullState& initial, const PolicySpec& policy, double duration) {
    Scenario s = base_scenario(duration);
    s.deputies.push_back({"d0", initial, policy});
    return s;
}

void disable_all(Catalog& c) {
    for (ConstraintId id : kAllConstraints) c[id].enabled = false;
}

std::string run_to_text(Episode& ep) {
    MemorySink sink;
    ep.add_sink(sink);
    ep.run();
    ep.clear_sinks();
    return sink.text();
}

TelemetryLog parse_log(const std::string& text) {
    std::istringstream in(text);
    return read_telemetry(in);
}

double angle_between(const Vec3& a, const Vec3& b) {
    return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
}

}  // namespace

TEST(InspectionPoints, TwentyUnitNormals) {
    const auto pts = generate_points(20);
    ASSERT_EQ(pts.size(), 20u);
    for (const InspectionPoint& p : pts) {
        EXPECT_NEAR(p.normal.norm(), 1.0, 1e-12);
        EXPECT_FALSE(p.inspected);
        EXPECT_FALSE(p.inspected_at.has_value());
    }
}

TEST(InspectionPoints, MinimumPairwiseSeparationAboveThirtyDegrees) {
    const auto pts = generate_points(20);
    double worst = std::numbers::pi;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t k = i + 1; k < pts.size(); ++k)
            worst = std::min(worst, angle_between(pts[i].normal, pts[k].normal));
    EXPECT_GT(worst, 30.0 * std::numbers::pi / 180.0);
}

TEST(InspectionPoints, DeterministicAndRejectsEmptyCount) {
    const auto a = generate_points(37), b = generate_points(37);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].normal, b[i].normal);
    EXPECT_THROW(generate_points(0), ConfigError);
}

TEST(UpdateInspection, LitAndVisiblePointFlips) {
    std::vector<InspectionPoint> pts{{Vec3::UnitX()}};
    EXPECT_EQ(update_inspection(pts, {500, 0, 0}, {1, 0, 0}, 10.0, 4.0), 1);
    EXPECT_TRUE(pts[0].inspected);
    EXPECT_EQ(pts[0].inspected_at, 4.0);
}

TEST(UpdateInspection, NoLineOfSightFromFarSide) {
    std::vector<InspectionPoint> pts{{Vec3::UnitX()}};
    EXPECT_EQ(update_inspection(pts, {-500, 0, 0}, {1, 0, 0}, 10.0, 0.0), 0);
    EXPECT_FALSE(pts[0].inspected);
}

TEST(UpdateInspection, DarkSideStaysUninspected) {
    std::vector<InspectionPoint> pts{{Vec3::UnitX()}};
    EXPECT_EQ(update_inspection(pts, {500, 0, 0}, {-1, 0, 0}, 10.0, 0.0), 0);
    EXPECT_FALSE(pts[0].inspected);
}

TEST(UpdateInspection, FlipsArePermanent) {
    std::vector<InspectionPoint> pts{{Vec3::UnitX()}};
    update_inspection(pts, {500, 0, 0}, {1, 0, 0}, 10.0, 1.0);
    EXPECT_EQ(update_inspection(pts, {-500, 0, 0}, {-1, 0, 0}, 10.0, 9.0), 0);
    EXPECT_TRUE(pts[0].inspected);
    EXPECT_EQ(pts[0].inspected_at, 1.0);
    EXPECT_TRUE(remaining_normals(pts).empty());
}

TEST(UpdateInspection, InsideChiefSeesNothing) {
    std::vector<InspectionPoint> pts{{Vec3::UnitX()}};
    EXPECT_EQ(update_inspection(pts, {5, 0, 0}, {1, 0, 0}, 10.0, 0.0), 0);
}

TEST(UpdateInspection, GrazingAboveHorizonOnly) {
    // Deputy on the tangent plane of the point: not strictly above the horizon.
    std::vector<InspectionPoint> pts{{Vec3::UnitX()}};
    EXPECT_EQ(update_inspection(pts, {10, 300, 0}, {1, 0, 0}, 10.0, 0.0), 0);
    EXPECT_EQ(update_inspection(pts, {10.5, 300, 0}, {1, 0, 0}, 10.0, 0.0), 1);
}

TEST(EffectiveSeed, MixesBothSeeds) {
    EXPECT_EQ(effective_seed(3, 9), effective_seed(3, 9));
    EXPECT_NE(effective_seed(3, 9), effective_seed(4, 9));
    EXPECT_NE(effective_seed(3, 9), effective_seed(3, 10));
}

TEST(ScenarioValidation, RejectsBadValuesWithPaths) {
    Scenario s = single(at({200, 0, 0}), idle_policy(), 10.0);
    s.duration = 0.0;
    try {
        s.validate();
        FAIL();
    } catch (const ScenarioError& e) {
        EXPECT_EQ(e.path(), "duration");
    }
    s.duration = 10.0;
    s.filter_rate = 20.0;  // faster than 1/dt
    EXPECT_THROW(s.validate(), ScenarioError);
    s.filter_rate = 10.0;
    s.deputies.clear();
    EXPECT_THROW(s.validate(), ScenarioError);
}

TEST(Episode, FrameCountIsFloorOfDurationTimesRate) {
    for (double duration : {10.0, 10.05, 10.099, 0.1}) {
        Scenario s = single(at({200, 0, 0}), idle_policy(), duration);
        Episode ep(s);
        const TelemetryLog log = parse_log(run_to_text(ep));
        const long expected = static_cast<long>(std::floor(duration * 10.0 + 1e-9));
        EXPECT_EQ(static_cast<long>(log.frames.size()), expected) << duration;
        ASSERT_TRUE(log.footer);
        EXPECT_EQ(log.footer->frames, expected);
        for (std::size_t k = 1; k < log.frames.size(); ++k) EXPECT_GT(log.frames[k].t, log.frames[k - 1].t);
    }
}

TEST(Episode, ZeroThrustMatchesClosedFormDrift) {
    const Vec3 r0(120, -40, 25), v0(0.05, -0.1, 0.02);
    Scenario s = single(at(r0, v0), idle_policy(), 1000.0);
    disable_all(s.catalog);
    Episode ep(s);
    ep.run();
    const FullState end = ep.states().front();
    Vec6 x0;
    x0 << r0, v0;
    const Vec6 expect = cw_stm(s.vehicle.mean_motion, 1000.0) * x0;
    EXPECT_LT((end.translational.position - expect.head<3>()).norm(), 1e-3);
    EXPECT_EQ(end.resources.fuel_used, 0.0);
    const EpisodeMetrics m = ep.metrics();
    EXPECT_EQ(m.intervention_count, 0);
    EXPECT_EQ(m.intervention_duration, 0.0);
    EXPECT_EQ(m.total_delta_v(), 0.0);
}

TEST(Episode, SameSeedGivesByteIdenticalTelemetry) {
    Scenario s = single(at({300, 100, -50}), random_policy(17), 60.0);
    s.seed = 99;
    Episode a(s), b(s);
    const std::string ta = run_to_text(a), tb = run_to_text(b);
    EXPECT_EQ(ta, tb);
    s.seed = 100;
    Episode c(s);
    EXPECT_NE(ta, run_to_text(c));
}

TEST(Episode, NonFiniteStateAbortsWithDiagnosticFrame) {
    Scenario s = single(at({200, 0, 0}, {1e308, 0, 0}), idle_policy(), 100.0);
    disable_all(s.catalog);
    Episode ep(s);
    const TelemetryLog log = parse_log(run_to_text(ep));
    EXPECT_TRUE(ep.aborted());
    EXPECT_FALSE(ep.diagnostic().empty());
    ASSERT_FALSE(log.frames.empty());
    EXPECT_LT(static_cast<long>(log.frames.size()), log.header.expected_frames);
    const TelemetryFrame& last = log.frames.back();
    ASSERT_FALSE(last.events.empty());
    EXPECT_EQ(last.events.back().type, "abort");
    EXPECT_FALSE(last.deputies.front().diagnostic.empty());
    ASSERT_TRUE(log.footer);
    EXPECT_TRUE(log.footer->aborted);
    EXPECT_EQ(log.footer->diagnostic, ep.diagnostic());
    EXPECT_TRUE(replay_check(log).ok());
}

TEST(Episode, DeputiesAreIndependentWithoutInteraction) {
    const FullState s0 = at({300, 100, -50}), s1 = at({-250, 200, 80});
    Scenario both = base_scenario(80.0);
    both.pairwise_separation = false;
    both.deputies.push_back({"a", s0, random_policy(5)});
    both.deputies.push_back({"b", s1, random_policy(6)});

    Scenario only_a = base_scenario(80.0), only_b = base_scenario(80.0);
    only_a.deputies.push_back({"a", s0, random_policy(5)});
    only_b.deputies.push_back({"b", s1, random_policy(6)});

    Episode joint(both), ea(only_a), eb(only_b);
    const TelemetryLog lj = parse_log(run_to_text(joint));
    const TelemetryLog la = parse_log(run_to_text(ea));
    const TelemetryLog lb = parse_log(run_to_text(eb));
    ASSERT_EQ(lj.frames.size(), la.frames.size());
    for (std::size_t k = 0; k < lj.frames.size(); ++k) {
        const DeputyRecord& ja = lj.frames[k].deputies[0];
        const DeputyRecord& jb = lj.frames[k].deputies[1];
        EXPECT_EQ(ja.state.to_vector(), la.frames[k].deputies[0].state.to_vector());
        EXPECT_EQ(jb.state.to_vector(), lb.frames[k].deputies[0].state.to_vector());
        EXPECT_EQ(ja.u_act, la.frames[k].deputies[0].u_act);
        EXPECT_EQ(jb.u_act, lb.frames[k].deputies[0].u_act);
    }
}

TEST(Episode, PairwiseSeparationCouplesDeputies) {
    Scenario s = base_scenario(5.0);
    s.deputies.push_back({"a", at({100, 0, 0}), idle_policy()});
    s.deputies.push_back({"b", at({104, 0, 0}), idle_policy()});
    Episode ep(s);
    ep.step();
    const double m = ep.last_frame()->deputies[0].margins[index_of(ConstraintId::SafeSeparation)];
    EXPECT_LT(m, 0.0);  // 4 m apart, inside the 10 m deputy keep-out
}

TEST(Metrics, MinMarginMatchesBruteForceOverFrames) {
    Scenario s = single(at({150, -60, 30}), random_policy(21, 20), 120.0);
    Episode ep(s);
    const TelemetryLog log = parse_log(run_to_text(ep));
    MarginMap brute;
    brute.fill(std::numeric_limits<double>::quiet_NaN());
    for (const TelemetryFrame& f : log.frames)
        for (const DeputyRecord& r : f.deputies)
            for (std::size_t c = 0; c < brute.size(); ++c)
                if (!std::isnan(r.margins[c])) brute[c] = std::isnan(brute[c]) ? r.margins[c] : std::min(brute[c], r.margins[c]);
    ASSERT_TRUE(log.footer);
    for (std::size_t c = 0; c < brute.size(); ++c) {
        if (std::isnan(brute[c])) {
            EXPECT_TRUE(std::isnan(log.footer->metrics.min_margin[c]));
        } else {
            EXPECT_EQ(log.footer->metrics.min_margin[c], brute[c]);
        }
    }
    EXPECT_EQ(log.footer->metrics.delta_v.front(), log.footer->final_states.front().resources.fuel_used);
    EXPECT_TRUE(compute_metrics(log) == log.footer->metrics);
}

TEST(Metrics, InterventionSpansAndDuration) {
    TelemetryHeader h;
    h.control_period = 0.1;
    h.deputies = {"d"};
    MetricsAccumulator acc(h);
    const bool pattern[] = {false, true, true, false, true, false, false, true};
    for (long k = 0; k < 8; ++k) {
        TelemetryFrame f;
        f.cycle = k;
        f.t = 0.1 * k;
        DeputyRecord r;
        r.intervened = pattern[k];
        r.margins.fill(std::numeric_limits<double>::quiet_NaN());
        f.deputies.push_back(r);
        acc.add(f);
    }
    const EpisodeMetrics m = acc.finish({}, false);
    EXPECT_EQ(m.intervention_count, 3);
    EXPECT_NEAR(m.intervention_duration, 0.4, 1e-12);
}

TEST(Replay, CleanLogPassesAndTamperingIsCaught) {
    Scenario s = single(at({150, -60, 30}), random_policy(4, 20), 30.0);
    Episode ep(s);
    const std::string text = run_to_text(ep);
    const TelemetryLog log = parse_log(text);
    const ReplayReport clean = replay_check(log);
    EXPECT_TRUE(clean.ok()) << (clean.problems.empty() ? "" : clean.problems.front());
    EXPECT_EQ(clean.frames, static_cast<long>(log.frames.size()));

    TelemetryLog margin = log;
    margin.frames[7].deputies[0].margins[index_of(ConstraintId::KeepIn)] += 1e-6;
    const ReplayReport r1 = replay_check(margin);
    EXPECT_EQ(r1.margin_mismatches, 1);
    EXPECT_FALSE(r1.ok());

    TelemetryLog passthrough = log;
    for (TelemetryFrame& f : passthrough.frames)
        if (f.deputies[0].mode == FilterMode::PassThrough) {
            f.deputies[0].u_act.thrust.x() += 1e-9;
            break;
        }
    EXPECT_EQ(replay_check(passthrough).passthrough_mismatches, 1);

    TelemetryLog dropped = log;
    dropped.frames.erase(dropped.frames.begin() + 3);
    EXPECT_GT(replay_check(dropped).structural_errors, 0);

    TelemetryLog truncated = log;
    truncated.footer.reset();
    EXPECT_FALSE(replay_check(truncated).ok());
}

TEST(Replay, FeasibleCommandMarkedModifiedIsCaught) {
    Scenario s = single(at({150, -60, 30}), idle_policy(), 2.0);
    Episode ep(s);
    TelemetryLog log = parse_log(run_to_text(ep));
    DeputyRecord& r = log.frames[5].deputies[0];
    ASSERT_EQ(r.mode, FilterMode::PassThrough);
    r.mode = FilterMode::QpModified;
    r.u_act.thrust.x() = 0.01;
    EXPECT_EQ(replay_check(log).feasible_modified, 1);
}

TEST(Telemetry, RecordsRoundTripThroughText) {
    Scenario s = single(at({150, -60, 30}), random_policy(8, 10), 5.0);
    s.task.kind = TaskKind::Inspect;
    s.task.point_count = 20;
    Episode ep(s);
    const std::string text = run_to_text(ep);
    const TelemetryLog log = parse_log(text);
    std::string again = encode_line(header_to_json(log.header)) + "\n";
    for (const TelemetryFrame& f : log.frames) again += encode_line(frame_to_json(f)) + "\n";
    again += encode_line(footer_to_json(*log.footer)) + "\n";
    EXPECT_EQ(again, text);
    EXPECT_EQ(log.header.points.size(), 20u);
    EXPECT_EQ(log.header.expected_frames, 50);
}

TEST(Telemetry, MalformedLineNamesTheLine) {
    Scenario s = single(at({150, -60, 30}), idle_policy(), 1.0);
    Episode ep(s);
    std::string text = run_to_text(ep);
    const auto third = text.find('\n', text.find('\n') + 1);
    text.insert(third + 1, "{\"kind\": \"frame\", \"cycle\": \n");
    try {
        parse_log(text);
        FAIL();
    } catch (const TelemetryError& e) {
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    }
}

TEST(Episode, PolicySelectionTakesEffectAtNextCycle) {
    Scenario s = single(at({200, 0, 0}), idle_policy(), 3.0);
    Episode ep(s);
    for (int k = 0; k < 10; ++k) ep.step();
    EXPECT_EQ(ep.last_frame()->deputies[0].policy, PolicyKind::ScriptedInspect);
    ep.select_policy(0, random_policy(3));
    ep.step();
    const TelemetryFrame& f = *ep.last_frame();
    EXPECT_EQ(f.cycle, 10);
    EXPECT_EQ(f.deputies[0].policy, PolicyKind::RandomPolicy);
    ASSERT_EQ(f.events.size(), 1u);
    EXPECT_EQ(f.events[0].type, "policy");
    EXPECT_EQ(f.events[0].deputy, 0);
    EXPECT_THROW(ep.select_policy(3, random_policy(3)), ScenarioError);
}

TEST(Episode, OverrideExpiresAfterLastEntry) {
    Scenario s = single(at({200, 0, 0}), idle_policy(), 5.0);
    Episode ep(s);
    ControlCommand push, brake;
    push.thrust = Vec3(0.2, 0, 0);
    brake.thrust = Vec3(-0.1, 0, 0);
    ep.schedule_override(0, {{1.0, push}, {1.5, brake}});
    std::vector<TelemetryFrame> frames;
    while (ep.cycle() < 25) {
        ep.step();
        frames.push_back(*ep.last_frame());
    }
    EXPECT_EQ(frames[0].events.front().type, "override");
    EXPECT_EQ(frames[9].deputies[0].mode, FilterMode::PassThrough);  // t = 0.9
    for (int k = 10; k < 15; ++k) {
        EXPECT_EQ(frames[k].deputies[0].mode, FilterMode::Override);
        EXPECT_EQ(frames[k].deputies[0].u_act, push);
    }
    EXPECT_EQ(frames[15].deputies[0].u_act, brake);  // last entry holds one period
    EXPECT_EQ(frames[16].deputies[0].mode, FilterMode::PassThrough);
    ASSERT_FALSE(frames[16].events.empty());
    EXPECT_EQ(frames[16].events.front().type, "override_end");
    EXPECT_THROW(ep.schedule_override(0, {{3.0, push}, {3.0, brake}}), ScenarioError);
}

TEST(Episode, CatalogEditIsLoggedAndUsed) {
    Scenario s = single(at({200, 0, 0}), idle_policy(), 3.0);
    Episode ep(s);
    ep.step();
    Catalog c = ep.catalog();
    c[ConstraintId::KeepIn].enabled = false;
    ep.set_catalog(c);
    ep.step();
    EXPECT_EQ(ep.last_frame()->events.front().type, "catalog");
    EXPECT_TRUE(std::isnan(ep.last_frame()->deputies[0].margins[index_of(ConstraintId::KeepIn)]));
    Catalog dup = ep.catalog();
    dup[ConstraintId::DynamicSpeed].priority = dup[ConstraintId::SafeSeparation].priority;
    EXPECT_THROW(ep.set_catalog(dup), ScenarioError);
    EXPECT_FALSE(ep.catalog()[ConstraintId::KeepIn].enabled);
}

TEST(Episode, PreviewLeavesEpisodeUntouched) {
    Scenario s = single(at({200, 0, 0}), idle_policy(), 30.0);
    Episode ep(s);
    MemorySink sink;
    ep.add_sink(sink);
    for (int k = 0; k < 5; ++k) ep.step();
    const auto lines_before = sink.lines().size();
    const auto states_before = ep.states();
    PolicySpec dock;
    dock.kind = PolicyKind::ScriptedDock;
    const auto path = ep.preview(0, dock, 40);
    EXPECT_EQ(path.size(), 40u);
    EXPECT_EQ(sink.lines().size(), lines_before);
    EXPECT_EQ(ep.cycle(), 5);
    EXPECT_EQ(ep.states().front().to_vector(), states_before.front().to_vector());
    EXPECT_EQ(ep.policy(0).kind, PolicyKind::ScriptedInspect);
    EXPECT_LT(path.back().translational.position.x(), 200.0);
}

TEST(ScenarioFile, ParsesAndReportsFieldPaths) {
    const std::string good = R"({
      "schema": "orbitguard.scenario/1", "name": "t", "seed": 3, "duration": 20,
      "catalog": {"KeepIn": {"params": {"max_range": 800}}},
      "deputies": [{"name": "a", "state": {"position": [100, 0, 0]}, "policy": {"kind": "RandomPolicy", "seed": 4}}]
    })";
    const Scenario s = parse_scenario_text(good);
    EXPECT_EQ(s.name, "t");
    EXPECT_EQ(s.seed, 3u);
    EXPECT_EQ(s.frame_count(), 200);
    EXPECT_EQ(s.deputies[0].policy.kind, PolicyKind::RandomPolicy);

    auto path_of = [](const std::string& text) {
        try {
            parse_scenario_text(text);
        } catch (const ScenarioError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    const std::string head = R"({"schema": "orbitguard.scenario/1", "duration": 20, )";
    const std::string dep = R"("deputies": [{"policy": {"kind": "ScriptedDock"}}])";
    EXPECT_EQ(path_of(head + R"("deputies": [{"policy": {"kind": "ScriptedDock", "gainz": {}}}]})")
                  .rfind("deputies[0].policy.gainz", 0),
              0u);
    EXPECT_EQ(path_of(head + R"("catalog": {"KeepIn": {"params": {"max_range": -5}}}, )" + dep + "}").rfind(
                  "catalog.KeepIn.params.max_range", 0),
              0u);
    const std::string dup = path_of(head + R"("catalog": {"KeepIn": {"priority": 1}}, )" + dep + "}");
    EXPECT_NE(dup.find("duplicate priority 1"), std::string::npos) << dup;
    EXPECT_EQ(dup.rfind("catalog.", 0), 0u) << dup;
    EXPECT_EQ(path_of(R"({"schema": "orbitguard.scenario/1", )" + dep + "}").rfind("duration", 0), 0u);
    EXPECT_EQ(path_of(R"({"schema": "orbitguard.scenario/1", "duration": 9, "duration_periods": 1, )" + dep + "}")
                  .rfind("duration", 0),
              0u);
    EXPECT_EQ(path_of(head + R"("deputies": [{"state": {"quaternion": [1, 1, 0, 0]}, "policy": {}}]})")
                  .rfind("deputies[0].state.quaternion", 0),
              0u);
    EXPECT_NE(path_of("{not json").find("not valid JSON"), std::string::npos);
}

TEST(ScenarioFile, SerializedFormParsesBackIdentically) {
    Scenario s = single(at({150, -60, 30}), random_policy(8, 10), 12.5);
    s.task.kind = TaskKind::Inspect;
    s.task.point_count = 12;
    s.catalog[ConstraintId::KeepIn].params[0] = 700.0;
    const Json j = scenario_to_json(s);
    const Json again = scenario_to_json(parse_scenario(j));
    EXPECT_EQ(j.dump(), again.dump());
}
