#include "orbitguard/episode.hpp"
#include "orbitguard/gateway/service.hpp"
#include "orbitguard/scenario_io.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace og = orbitguard;

namespace {

enum Exit : int { kOk = 0, kInvalid = 1, kCheckFailed = 2, kAborted = 3 };

std::optional<og::Scenario> load_or_report(const std::string& path) {
    try {
        return og::load_scenario(path);
    } catch (const og::ScenarioError& e) {
        std::cerr << "invalid scenario " << path << ": " << e.what() << "\n";
        if (!e.path().empty()) std::cerr << "field: " << e.path() << "\n";
    } catch (const og::Error& e) {
        std::cerr << "invalid scenario " << path << ": " << e.what() << "\n";
    }
    return std::nullopt;
}

void print_metrics(const og::EpisodeMetrics& m) {
    std::cout << "frames " << m.frames << "\n";
    for (std::size_t i = 0; i < m.delta_v.size(); ++i) std::cout << "delta_v[" << i << "] " << m.delta_v[i] << " m/s\n";
    if (m.point_count > 0) std::cout << "inspected " << m.points_inspected << "/" << m.point_count << "\n";
    if (m.completion_time) std::cout << "completion " << *m.completion_time << " s\n";
    std::cout << "interventions " << m.intervention_count << " (" << m.intervention_duration << " s)\n";
    for (og::ConstraintId id : og::kAllConstraints) {
        const double v = m.min_margin[og::index_of(id)];
        if (!std::isnan(v)) std::cout << "min_margin " << og::constraint_name(id) << " " << v << "\n";
    }
}

int cmd_run(const std::string& path, std::optional<std::string> out, std::optional<std::uint64_t> seed) {
    auto scenario = load_or_report(path);
    if (!scenario) return kInvalid;
    if (seed) scenario->seed = *seed;
    if (!out) {
        const char* dir = std::getenv("ORBITGUARD_LOG_DIR");
        const std::filesystem::path base = dir && *dir ? dir : ".";
        std::filesystem::create_directories(base);
        out = (base / (std::filesystem::path(path).stem().string() + ".ndjson")).string();
    }
    og::EpisodeResult result;
    try {
        result = og::run_episode(*scenario, *out);
    } catch (const og::ScenarioError& e) {
        std::cerr << "invalid scenario " << path << ": " << e.what() << "\n";
        return kInvalid;
    } catch (const og::Error& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return kAborted;
    }
    std::cout << "telemetry " << *out << "\n";
    print_metrics(result.metrics);
    if (result.aborted) {
        std::cerr << "aborted: " << result.diagnostic << "\n";
        return kAborted;
    }
    return kOk;
}

int cmd_replay(const std::string& path, bool check) {
    og::TelemetryLog log;
    try {
        log = og::read_telemetry_file(path);
    } catch (const og::Error& e) {
        std::cerr << "unreadable telemetry: " << e.what() << "\n";
        return kInvalid;
    }
    if (!check) {
        print_metrics(og::compute_metrics(log));
        return kOk;
    }
    const og::ReplayReport r = og::replay_check(log);
    std::cout << "frames " << r.frames << "\n"
              << "margin_mismatches " << r.margin_mismatches << "\n"
              << "safety_violations " << r.safety_violations << "\n"
              << "passthrough_mismatches " << r.passthrough_mismatches << "\n"
              << "feasible_modified " << r.feasible_modified << "\n"
              << "structural_errors " << r.structural_errors << "\n"
              << "metrics_match " << (r.metrics_match ? "yes" : "no") << "\n"
              << "worst_margin " << r.worst_margin << "\n";
    for (const std::string& p : r.problems) std::cerr << "  " << p << "\n";
    std::cout << (r.ok() ? "check passed" : "check FAILED") << "\n";
    return r.ok() ? kOk : kCheckFailed;
}

int cmd_validate(const std::string& path) {
    const auto scenario = load_or_report(path);
    if (!scenario) return kInvalid;
    try {
        og::Episode probe(*scenario);
        std::cout << "valid: " << scenario->name << ", " << probe.total_cycles() << " cycles, "
                  << scenario->deputies.size() << " deputies\n";
    } catch (const og::Error& e) {
        std::cerr << "invalid scenario " << path << ": " << e.what() << "\n";
        return kInvalid;
    }
    return kOk;
}

int cmd_serve(std::optional<int> port, std::optional<std::string> log_dir) {
    og::gateway::ServiceConfig cfg;
    try {
        cfg = og::gateway::resolve_service_config(port, log_dir, [](const char* k) { return std::getenv(k); });
    } catch (const og::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kInvalid;
    }
    // Block the stop signals before any thread starts so only sigwait sees them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    og::gateway::Service service(cfg);
    try {
        service.start();
    } catch (const og::gateway::ServiceError& e) {
        std::cerr << e.what() << "\n";
        return kAborted;
    }
    std::cout << "listening on " << cfg.host << ":" << service.port();
    if (!cfg.gateway.log_dir.empty()) std::cout << ", telemetry in " << cfg.gateway.log_dir;
    std::cout << std::endl;
    int sig = 0;
    sigwait(&stop_signals, &sig);
    service.stop();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"orbitguard: run-time assured proximity operations"};
    app.require_subcommand(1);

    std::string scenario_path, telemetry_path;
    std::optional<std::string> out, log_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> port;
    bool check = false;

    auto* run = app.add_subcommand("run", "Run a scenario headless and write its telemetry");
    run->add_option("scenario", scenario_path, "Scenario JSON")->required();
    run->add_option("--out", out, "Telemetry output path (NDJSON)");
    run->add_option("--seed", seed, "Override the scenario seed");

    auto* serve = app.add_subcommand("serve", "Serve the operator gateway over HTTP");
    serve->add_option("--port", port, "TCP port (env ORBITGUARD_PORT, default 8470)");
    serve->add_option("--log-dir", log_dir, "Telemetry directory (env ORBITGUARD_LOG_DIR)");

    auto* replay = app.add_subcommand("replay", "Summarize or verify a telemetry log");
    replay->add_option("telemetry", telemetry_path, "Telemetry NDJSON")->required();
    replay->add_flag("--check", check, "Recompute margins and metrics and verify safety");

    auto* validate = app.add_subcommand("validate", "Validate a scenario file");
    validate->add_option("scenario", scenario_path, "Scenario JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }
    if (*run) return cmd_run(scenario_path, out, seed);
    if (*serve) return cmd_serve(port, log_dir);
    if (*replay) return cmd_replay(telemetry_path, check);
    return cmd_validate(scenario_path);
}
