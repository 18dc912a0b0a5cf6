#pragma once

#include "orbitguard/codec.hpp"
#include "orbitguard/mission.hpp"

#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace orbitguard {

inline constexpr std::string_view kTelemetrySchema = "orbitguard.telemetry/1";

class TelemetryError : public Error {
  public:
    using Error::Error;
};

struct DeputyRecord {
    FullState state;
    ControlCommand u_des;
    ControlCommand u_act;
    FilterMode mode = FilterMode::PassThrough;
    bool intervened = false;
    std::vector<ConstraintId> cause;
    MarginMap margins{};  // normalized by each constraint's scale; NaN when disabled
    SolverSummary solver;
    PolicyKind policy = PolicyKind::ScriptedDock;
    bool fuel_latched = false;
    std::string diagnostic;
};

/// Annotation attached to the frame of the cycle it took effect in.
struct TelemetryEvent {
    std::string type;    // catalog, policy, override, override_end, task_complete, abort
    int deputy = -1;     // -1 when not deputy-specific
    Json detail = Json::object();
};

struct TelemetryFrame {
    long cycle = 0;
    double t = 0.0;
    std::vector<DeputyRecord> deputies;
    std::vector<int> inspected;  // indices of inspected points, ascending
    std::vector<TelemetryEvent> events;
};

struct TelemetryHeader {
    std::string scenario;
    std::uint64_t seed = 0;
    double control_period = 0.1;
    double dt = 0.1;
    double duration = 0.0;
    long expected_frames = 0;
    VehicleParams vehicle;
    Catalog catalog;
    TaskSpec task;
    bool pairwise_separation = true;
    std::vector<std::string> deputies;
    std::vector<Vec3> points;
};

struct EpisodeMetrics {
    long frames = 0;
    bool aborted = false;
    std::vector<double> delta_v;  // per deputy, m/s (final fuel_used)
    int points_inspected = 0;
    int point_count = 0;
    int intervention_count = 0;         // contiguous intervened spans, summed over deputies
    double intervention_duration = 0.0; // s, summed over deputies
    MarginMap min_margin{};             // normalized; NaN when never enabled
    std::optional<double> completion_time;

    double total_delta_v() const;
    double inspected_fraction() const;
    bool operator==(const EpisodeMetrics& other) const;
};

struct TelemetryFooter {
    long frames = 0;
    bool aborted = false;
    std::string diagnostic;
    std::vector<FullState> final_states;
    EpisodeMetrics metrics;
};

Json header_to_json(const TelemetryHeader& h);
Json frame_to_json(const TelemetryFrame& f);
Json footer_to_json(const TelemetryFooter& f);
Json metrics_to_json(const EpisodeMetrics& m);
EpisodeMetrics metrics_from_json(const Json& j, const std::string& path);

TelemetryHeader header_from_json(const Json& j);
TelemetryFrame frame_from_json(const Json& j);
TelemetryFooter footer_from_json(const Json& j);

/// One serialized record, no trailing newline.
std::string encode_line(const Json& j);

struct TelemetryLog {
    TelemetryHeader header;
    std::vector<TelemetryFrame> frames;
    std::optional<TelemetryFooter> footer;
};

/// Throws TelemetryError naming the line on malformed input.
TelemetryLog read_telemetry(std::istream& in);
TelemetryLog read_telemetry_file(const std::string& path);

/// Receives each serialized record in order.
class TelemetrySink {
  public:
    virtual ~TelemetrySink() = default;
    virtual void write(std::string_view line) = 0;
};

class FileSink : public TelemetrySink {
  public:
    /// Throws TelemetryError when the file cannot be created.
    explicit FileSink(const std::string& path);
    void write(std::string_view line) override;

  private:
    std::ofstream out_;
};

class MemorySink : public TelemetrySink {
  public:
    void write(std::string_view line) override { lines_.emplace_back(line); }
    const std::vector<std::string>& lines() const { return lines_; }
    std::string text() const;

  private:
    std::vector<std::string> lines_;
};

/// Folds frames into the episode metrics; the episode and replay share it.
class MetricsAccumulator {
  public:
    MetricsAccumulator(const TelemetryHeader& header);

    void add(const TelemetryFrame& frame);
    EpisodeMetrics finish(const std::vector<FullState>& final_states, bool aborted) const;

  private:
    TaskSpec task_;
    double period_;
    int deputies_;
    EpisodeMetrics m_;
    std::vector<bool> in_span_;
    std::vector<double> last_fuel_;
};

/// Metrics from a log; final fuel comes from the footer when present, else the last frame.
EpisodeMetrics compute_metrics(const TelemetryLog& log);

struct ReplayOptions {
    double safety_tolerance = 1e-3;   // normalized margin floor
    double margin_tolerance = 1e-12;  // relative agreement between logged and recomputed margins
};

struct ReplayReport {
    long frames = 0;
    long margin_mismatches = 0;
    long safety_violations = 0;
    long passthrough_mismatches = 0;
    long feasible_modified = 0;    // feasible u_des changed by the barrier filter
    long structural_errors = 0;
    bool metrics_match = true;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::vector<std::string> problems;  // first few, human readable

    bool ok() const {
        return margin_mismatches == 0 && safety_violations == 0 && passthrough_mismatches == 0 &&
               feasible_modified == 0 && structural_errors == 0 && metrics_match;
    }
};

/// Streaming form of replay_check: feed frames in order, then the end record (if any).
class ReplayChecker {
  public:
    explicit ReplayChecker(const TelemetryHeader& header, ReplayOptions options = {});

    void add(const TelemetryFrame& frame);
    ReplayReport finish(const std::optional<TelemetryFooter>& footer);
    const ReplayReport& report() const { return rep_; }

  private:
    void problem(const std::string& msg);

    TelemetryHeader header_;
    ReplayOptions options_;
    Catalog catalog_;
    MetricsAccumulator metrics_;
    ReplayReport rep_;
    double prev_t_ = -std::numeric_limits<double>::infinity();
    long prev_cycle_ = -1;
    std::vector<int> prev_inspected_;
};

/// Recomputes every margin from the logged states and catalog, re-checks safety, exact
/// pass-through, that no barrier-feasible u_des was modified, structure and metrics.
ReplayReport replay_check(const TelemetryLog& log, const ReplayOptions& options = {});

}  // namespace orbitguard
