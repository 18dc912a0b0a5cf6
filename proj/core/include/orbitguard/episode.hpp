#pragma once

#include "orbitguard/telemetry.hpp"

#include <optional>
#include <string>
#include <vector>

namespace orbitguard {

/// One entry of an open-loop override script; holds until the next entry's time, and the last
/// entry holds for one control period.
struct TimedCommand {
    double t = 0.0;
    ControlCommand command;
};

struct EpisodeResult {
    EpisodeMetrics metrics;
    std::string telemetry_path;
    bool aborted = false;
    std::string diagnostic;
};

/// The fixed-rate loop: inspection update, policy, RTA pipeline, zero-order-hold propagation.
/// Single-threaded value type; copies are independent (used for look-ahead previews).
/// Edits made between steps take effect at the next step and are annotated in its frame.
class Episode {
  public:
    /// Throws ScenarioError if the scenario is invalid.
    explicit Episode(Scenario scenario);

    /// Non-owning; sinks must outlive the episode's writes.
    void add_sink(TelemetrySink& sink) { sinks_.push_back(&sink); }
    void clear_sinks() { sinks_.clear(); }

    /// Writes the header. step() calls it on first use.
    void start();
    /// One control cycle. After the last cycle the end record is written. No-op when done.
    void step();
    void run();
    bool done() const { return finished_; }
    bool aborted() const { return aborted_; }
    const std::string& diagnostic() const { return diagnostic_; }

    /// Throws ScenarioError for duplicate ranks or invalid values; nothing changes on error.
    void set_catalog(const Catalog& catalog);
    /// Throws ScenarioError for a bad deputy index or an unusable policy.
    void select_policy(int deputy, const PolicySpec& spec);
    /// Replaces the deputy's override script. Entries must have strictly increasing times.
    void schedule_override(int deputy, std::vector<TimedCommand> entries);

    long cycle() const { return cycle_; }
    long total_cycles() const { return total_cycles_; }
    double time() const { return t0_ + static_cast<double>(cycle_) * period_; }
    const Scenario& scenario() const { return scenario_; }
    const Catalog& catalog() const { return catalog_; }
    const PolicySpec& policy(int deputy) const;
    std::vector<FullState> states() const;
    const std::vector<InspectionPoint>& points() const { return points_; }
    const TelemetryHeader& header() const { return header_; }
    const std::optional<TelemetryFrame>& last_frame() const { return last_frame_; }
    /// Set once done().
    const std::optional<TelemetryFooter>& footer() const { return footer_; }
    /// Metrics so far; final once done().
    EpisodeMetrics metrics() const;

    /// Runs a sink-less copy for up to `cycles` steps with `spec` driving `deputy`; returns that
    /// deputy's states after each step.
    std::vector<FullState> preview(int deputy, const PolicySpec& spec, long cycles) const;

  private:
    struct Deputy {
        std::string name;
        FullState state;
        Policy policy;
        RtaPipeline rta;
        std::vector<TimedCommand> override_script;
    };

    void emit(const Json& j);
    std::optional<ControlCommand> active_override(Deputy& d, int index, double t);
    void abort_with(const std::string& message, int deputy);
    void finish();
    PolicySpec seeded(const PolicySpec& spec) const;
    void check_deputy(int deputy) const;

    Scenario scenario_;
    Catalog catalog_;
    std::vector<Deputy> deputies_;
    std::vector<InspectionPoint> points_;
    TelemetryHeader header_;
    MetricsAccumulator metrics_;
    std::vector<TelemetrySink*> sinks_;
    std::vector<TelemetryEvent> pending_;
    std::optional<TelemetryFrame> last_frame_;
    std::optional<TelemetryFooter> footer_;
    double t0_ = 0.0;
    double period_ = 0.1;
    long cycle_ = 0;
    long total_cycles_ = 0;
    bool started_ = false;
    bool finished_ = false;
    bool aborted_ = false;
    bool completion_announced_ = false;
    std::string diagnostic_;
};

/// Runs to completion; writes telemetry to path when non-empty.
EpisodeResult run_episode(const Scenario& scenario, const std::string& telemetry_path = "");

}  // namespace orbitguard
