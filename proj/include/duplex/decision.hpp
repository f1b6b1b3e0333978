#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "duplex/audio.hpp"
#include "duplex/context.hpp"
#include "duplex/core.hpp"

namespace duplex {

enum class PromptTemplate { Listen, Speak };

struct Turn {
    std::string role;
    std::string text;

    bool operator==(const Turn&) const = default;
};

/// Identifies the user speech run that triggered a decision.
struct SegmentRef {
    std::int64_t segment_id = 0;
    Millis t_start = 0;
    Millis t_end = 0;
    Millis speech_start = 0;
    Millis speech_end = 0;
    bool partial = false;
};

struct DecisionRequest {
    std::int64_t cycle = 0;
    DialogueState state = DialogueState::Listen;
    SegmentRef segment;
    /// Triggering segment plus preceding user audio inside the window.
    std::vector<AudioFrame> audio;
    std::vector<TranscriptEntry> transcripts;
    std::vector<Turn> history;
    PromptTemplate prompt_template = PromptTemplate::Listen;
};

struct DecisionOutcome {
    Action action = Action::Continue;
    UtteranceLabel label = UtteranceLabel::Incomplete;
    /// Present exactly when a Listen decision switches to Speak.
    std::optional<std::string> response_text;
    Millis backend_latency_ms = 0;

    bool operator==(const DecisionOutcome&) const = default;
};

struct DecisionResult {
    DecisionOutcome outcome;
    bool fallback = false;
    /// Why the fallback was taken.
    std::optional<std::string> degradation;
};

/// What a backend said, before validation.
struct BackendReply {
    std::optional<UtteranceLabel> label;
    std::string response_text;
    Millis latency_ms = 0;
    std::string error;
};

class DecisionBackend {
public:
    virtual ~DecisionBackend() = default;
    virtual BackendReply query(const DecisionRequest& request, const std::string& prompt) = 0;
    virtual bool blocking() const noexcept { return false; }
};

std::string render_prompt(DialogueState state, const std::vector<TranscriptEntry>& transcripts,
                          const std::vector<Turn>& history);

/// Continue in both states: (Continue, Incomplete) in Listen and
/// (Continue, Backchannel) in Speak.
DecisionOutcome fallback_outcome(DialogueState state, Millis latency_ms = 0);

/// Queries the backend and validates the reply. Errors, timeouts, unknown or
/// state-invalid labels and a Listen switch without reply text all produce the
/// fallback outcome; this never throws for backend misbehaviour.
DecisionResult decide(DecisionBackend& backend, const DecisionRequest& request, Millis timeout_ms = 1500);

struct ParsedReply {
    UtteranceLabel label = UtteranceLabel::Incomplete;
    std::string response_text;

    bool operator==(const ParsedReply&) const = default;
};

/// Looks for a `DECISION: <label>` header line (case-insensitive); whatever
/// follows the header is the response text. nullopt when there is no header
/// or the label is unknown.
std::optional<ParsedReply> parse_backend_reply(std::string_view raw);

/// Ground-truth categories used by scripted scenarios.
enum class TruthLabel { Complete, Incomplete, Backchannel, Interruption, NonTarget };

std::string_view to_string(TruthLabel label) noexcept;
std::optional<TruthLabel> parse_truth_label(std::string_view text) noexcept;

/// Maps a scenario label onto the decision space of `state`. Labels from the
/// other state are carried across by their action (Interruption in Listen is
/// Complete, Incomplete in Speak is Backchannel); NonTarget is always the
/// Continue label.
UtteranceLabel project_label(TruthLabel truth, DialogueState state) noexcept;

/// Complete <-> Incomplete, Backchannel <-> Interruption.
UtteranceLabel flip_label(UtteranceLabel label) noexcept;

struct GroundTruth {
    TruthLabel label = TruthLabel::Complete;
    std::string reply;
};

struct ScriptedOracleConfig {
    Millis latency_ms = 300;
    Millis jitter_ms = 0;
    double error_rate = 0.0;
    std::uint64_t seed = 0;
    bool adversarial = false;
    /// Labels for segments the lookup does not know; unset means fallback.
    std::optional<UtteranceLabel> default_listen;
    std::optional<UtteranceLabel> default_speak;
    std::string default_reply = "Sure, let me help with that.";
};

/// Deterministic decision backend driven by scenario ground truth.
class ScriptedOracle final : public DecisionBackend {
public:
    using Lookup = std::function<std::optional<GroundTruth>(const DecisionRequest&)>;

    explicit ScriptedOracle(ScriptedOracleConfig config = {}, Lookup lookup = {});

    BackendReply query(const DecisionRequest& request, const std::string& prompt) override;

    const ScriptedOracleConfig& config() const noexcept { return config_; }

private:
    ScriptedOracleConfig config_;
    Lookup lookup_;
    std::mt19937_64 rng_;
};

/// Chat-style HTTP adapter. Sends {state, prompt, audio_b64, sample_rate},
/// expects {text} holding a reply in the parse_backend_reply format.
class RemoteDecisionBackend final : public DecisionBackend {
public:
    RemoteDecisionBackend(std::string url, Millis timeout_ms = 1500);

    BackendReply query(const DecisionRequest& request, const std::string& prompt) override;
    bool blocking() const noexcept override { return true; }

private:
    std::string url_;
    Millis timeout_ms_;
};

}  // namespace duplex
