#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "duplex/config.hpp"
#include "duplex/decision.hpp"
#include "duplex/orchestrator.hpp"
#include "duplex/trace.hpp"

namespace duplex {

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Expected { Respond, Wait, ContinueSpeaking, CancelAndListen, Ignore };

std::string_view to_string(Expected expected) noexcept;
std::optional<Expected> parse_expected(std::string_view text) noexcept;

struct ScenarioEvent {
    Millis t_ms = 0;
    Millis duration_ms = 0;
    TruthLabel label = TruthLabel::Complete;
    Expected expected = Expected::Respond;
    std::string text;
    /// Agent reply the scripted oracle gives when it answers this event.
    std::string reply;

    Millis end_ms() const noexcept { return t_ms + duration_ms; }
    bool operator==(const ScenarioEvent&) const = default;
};

struct ScenarioScript {
    std::string name = "scenario";
    std::uint64_t seed = 0;
    std::vector<ScenarioEvent> events;

    bool operator==(const ScenarioScript&) const = default;
};

/// Parses the JSON scenario format. Errors name the offending event index.
ScenarioScript parse_scenario(std::string_view text);
ScenarioScript load_scenario(const std::filesystem::path& path);
std::string scenario_to_json(const ScenarioScript& script);
/// Checks ordering, 20 ms alignment, non-overlap and NonTarget expectations.
void validate(const ScenarioScript& script);

inline constexpr double kTargetVoiceHz = 440.0;
inline constexpr double kOtherVoiceHz = 220.0;

/// User audio for the script: silence with a tone burst per event (440 Hz for
/// the target speaker, 220 Hz for NonTarget), followed by `tail_ms` of silence.
std::vector<AudioFrame> synthesize_user_audio(const ScenarioScript& script, Millis tail_ms);

/// Index of the event whose burst contains `speech_start`.
std::optional<std::size_t> event_at(const ScenarioScript& script, Millis speech_start);

/// Oracle and transcript lookups keyed on the speech start of each segment.
ScriptHooks script_hooks(const ScenarioScript& script);

/// Runs the script on a virtual clock with backends built from `config`; the
/// scripted oracle is seeded from the script.
SessionTrace simulate(const ScenarioScript& script, const Config& config);

struct EventOutcome {
    std::size_t index = 0;
    TruthLabel label = TruthLabel::Complete;
    Expected expected = Expected::Respond;
    std::vector<std::int64_t> segment_ids;
    /// Transitions caused by this event's segments, e.g. "kl", "l2s", "ks", "s2l".
    std::string observed;
    bool met = false;
    std::optional<Millis> response_delay_ms;

    bool operator==(const EventOutcome&) const = default;
};

struct MetricsReport {
    std::string name;
    std::optional<double> first_response_delay_s;
    std::optional<double> total_delay_s;
    std::optional<double> interruption_total_score;
    std::optional<double> rejection_total_score;

    // Raw tallies the means and scores are computed from.
    std::int64_t first_response_count = 0;
    std::int64_t first_response_sum_ms = 0;
    std::int64_t onset_count = 0;
    std::int64_t onset_sum_ms = 0;
    std::int64_t interruption_events = 0;
    std::int64_t interruptions_handled = 0;
    std::int64_t rejection_events = 0;
    std::int64_t rejections_handled = 0;

    std::vector<EventOutcome> events;

    bool expectations_met() const noexcept;
    bool operator==(const MetricsReport&) const = default;
};

/// Scores a trace against its script.
///
/// first_response_delay: mean over Complete events answered through l2s of
/// (first agent frame - end of the utterance). total_delay: the same over
/// every agent-audio onset, including replies after an interruption.
/// interruption_total_score: percentage of Interruption events whose decision
/// cancelled playback within t_stop_ms of the user's onset and produced s2l.
/// rejection_total_score: percentage of Backchannel/NonTarget events that
/// caused no switch and no cancellation. Means over empty sets are absent.
/// Throws ScenarioError when the trace does not belong to the script.
MetricsReport compute_metrics(const SessionTrace& trace, const ScenarioScript& script, Millis t_stop_ms = 1000);

/// Pools the tallies of several reports.
MetricsReport aggregate(std::span<const MetricsReport> reports, std::string name = "aggregate");

enum class ReportFormat { Json, Markdown };

std::optional<ReportFormat> parse_report_format(std::string_view text) noexcept;

/// Published reference rows printed for context in markdown reports.
struct ReferenceRow {
    std::string name;
    std::string first_response_delay;
    std::string interruption_total_score;
    std::string rejection_total_score;
    std::string total_delay;
};
const std::vector<ReferenceRow>& published_reference_rows();

std::string report_to_json(std::span<const MetricsReport> reports);
std::vector<MetricsReport> reports_from_json(std::string_view text);
std::string report_to_markdown(std::span<const MetricsReport> reports);
/// Throws std::runtime_error when the path cannot be written.
void emit_report(std::span<const MetricsReport> reports, ReportFormat format, const std::filesystem::path& path);

struct GeneratorOptions {
    std::size_t events = 10;
    bool include_non_target = true;
};

/// Random but well-formed scenario whose expectations hold for a perfect
/// oracle under `config`'s timing.
ScenarioScript generate_scenario(std::uint64_t seed, const Config& config, GeneratorOptions options = {});

struct BenchResult {
    std::vector<std::string> scenarios;
    std::vector<MetricsReport> reports;
    MetricsReport aggregate;
    bool all_met = true;
};

/// Simulates every *.json scenario in the directory, in parallel.
BenchResult run_bench(const std::filesystem::path& dir, const Config& config, unsigned threads = 0);

}  // namespace duplex
