#include "orbitguard/episode.hpp"
#include "orbitguard/rta.hpp"
#include "orbitguard/scenario_io.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace og = orbitguard;

namespace {

og::FullState approach_state() {
    og::FullState s;
    s.translational.position = og::Vec3(120.0, -40.0, 15.0);
    s.translational.velocity = og::Vec3(-0.6, 0.1, 0.0);
    s.attitude.quaternion = og::Vec4(0.7071067811865476, 0.0, 0.7071067811865476, 0.0);
    return s;
}

og::QpProblem random_problem(std::mt19937_64& rng, int rows) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    og::QpProblem p;
    p.u_des = Eigen::VectorXd::NullaryExpr(6, [&] { return 2.0 * u(rng); });
    p.lower = Eigen::VectorXd::Constant(6, -1.0);
    p.upper = Eigen::VectorXd::Constant(6, 1.0);
    for (int i = 0; i < rows; ++i) {
        og::QpRow r{Eigen::VectorXd::NullaryExpr(6, [&] { return u(rng); }), 0.0};
        r.b = -0.2 * r.a.lpNorm<1>() * std::abs(u(rng));  // keeps the origin strictly feasible
        p.rows.push_back(r);
    }
    return p;
}

}  // namespace

static void BM_Rk4Step(benchmark::State& st) {
    const og::VehicleParams params;
    og::FullState s = approach_state();
    og::ControlCommand u;
    u.thrust = og::Vec3(0.2, -0.1, 0.05);
    u.torque = og::Vec3(1e-4, 0.0, -2e-4);
    for (auto _ : st) {
        s = og::propagate_rk4(s, u, 0.1, params);
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_Rk4Step);

static void BM_QpSolve(benchmark::State& st) {
    std::mt19937_64 rng(42);
    std::vector<og::QpProblem> problems;
    for (int i = 0; i < 256; ++i) problems.push_back(random_problem(rng, static_cast<int>(st.range(0))));
    std::size_t i = 0;
    for (auto _ : st) {
        auto sol = og::solve_qp(problems[i++ % problems.size()]);
        benchmark::DoNotOptimize(sol);
    }
}
BENCHMARK(BM_QpSolve)->Arg(2)->Arg(8)->Arg(16);

static void BM_ComputeMargins(benchmark::State& st) {
    const og::VehicleParams params;
    const og::Catalog catalog = og::default_catalog(params);
    const og::FullState s = approach_state();
    const og::EvalContext ctx{params};
    for (auto _ : st) {
        auto m = og::compute_margins(s, catalog, ctx);
        benchmark::DoNotOptimize(m);
    }
}
BENCHMARK(BM_ComputeMargins);

static void BM_PipelineStep(benchmark::State& st) {
    const og::VehicleParams params;
    const og::Catalog catalog = og::default_catalog(params);
    const og::EvalContext ctx{params};
    og::RtaPipeline rta;
    const og::FullState s = approach_state();
    og::ControlCommand u;
    u.thrust = og::Vec3(-1.0, 0.3, 0.0);
    for (auto _ : st) {
        auto d = rta.step(s, u, catalog, ctx);
        benchmark::DoNotOptimize(d);
    }
}
BENCHMARK(BM_PipelineStep);

static void BM_EpisodeCycle(benchmark::State& st) {
    og::Json doc = og::Json::parse(R"({
      "schema": "orbitguard.scenario/1", "name": "bench", "seed": 3, "duration_periods": 3,
      "deputies": [{"name": "d", "state": {"position": [180, 40, -20]}, "policy": {"kind": "RandomPolicy", "seed": 9}}]})");
    og::Episode ep(og::parse_scenario(doc));
    ep.start();
    for (auto _ : st) {
        ep.step();
        if (ep.done()) st.SkipWithError("episode ended");
    }
}
BENCHMARK(BM_EpisodeCycle)->Iterations(20000);

BENCHMARK_MAIN();
