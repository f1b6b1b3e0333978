#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "duplex/audio.hpp"
#include "duplex/core.hpp"

namespace duplex::trace {

struct Ingress {
    std::int64_t frames = 0;
    Millis first_t = 0;
    Millis last_t = 0;
    bool operator==(const Ingress&) const = default;
};

struct Vad {
    VadEvent event;
    bool operator==(const Vad&) const = default;
};

struct Segment {
    std::int64_t segment_id = 0;
    Millis t_start = 0;
    Millis t_end = 0;
    Millis speech_start = 0;
    Millis speech_end = 0;
    bool partial = false;
    bool accepted = true;
    std::optional<double> sv_score;
    bool operator==(const Segment&) const = default;
};

struct AsrSubmit {
    std::int64_t segment_id = 0;
    std::int64_t cycle = 0;
    bool operator==(const AsrSubmit&) const = default;
};

struct AsrComplete {
    std::int64_t segment_id = 0;
    bool ok = true;
    std::string text;
    bool operator==(const AsrComplete&) const = default;
};

struct DecisionRequest {
    std::int64_t cycle = 0;
    DialogueState state = DialogueState::Listen;
    std::int64_t segment_id = 0;
    std::int64_t transcripts = 0;
    std::int64_t audio_frames = 0;
    bool operator==(const DecisionRequest&) const = default;
};

struct DecisionOutcome {
    std::int64_t cycle = 0;
    DialogueState state = DialogueState::Listen;
    std::int64_t segment_id = 0;
    Action action = Action::Continue;
    UtteranceLabel label = UtteranceLabel::Incomplete;
    std::optional<std::string> response_text;
    Millis backend_latency_ms = 0;
    bool fallback = false;
    bool operator==(const DecisionOutcome&) const = default;
};

/// Why a transition happened.
enum class Cause { Decision, PlaybackComplete, SynthesisFailed };

struct Transition {
    TransitionKind kind = TransitionKind::KeepListen;
    /// Unit the transition was recorded in (before any s2l rollover).
    std::int64_t unit_index = 0;
    Cause cause = Cause::Decision;
    std::optional<std::int64_t> cycle;
    bool operator==(const Transition&) const = default;
};

struct PlaybackStart {
    std::int64_t utterance_id = 0;
    std::int64_t segment_id = 0;
    std::string text;
    Millis total_duration_ms = 0;
    Millis first_frame_at = 0;
    bool operator==(const PlaybackStart&) const = default;
};

/// One emitted agent frame; the event time is the frame's t_start.
struct AgentFrame {
    std::int64_t utterance_id = 0;
    std::int64_t index = 0;
    bool operator==(const AgentFrame&) const = default;
};

struct PlaybackCancel {
    std::int64_t utterance_id = 0;
    /// Segment whose decision caused the cancellation.
    std::int64_t segment_id = 0;
    Millis emitted_ms = 0;
    bool operator==(const PlaybackCancel&) const = default;
};

struct PlaybackComplete {
    std::int64_t utterance_id = 0;
    Millis emitted_ms = 0;
    bool operator==(const PlaybackComplete&) const = default;
};

struct Degradation {
    std::string source;
    std::string detail;
    bool operator==(const Degradation&) const = default;
};

using Record = std::variant<Ingress, Vad, Segment, AsrSubmit, AsrComplete, DecisionRequest, DecisionOutcome,
                            Transition, PlaybackStart, AgentFrame, PlaybackCancel, PlaybackComplete, Degradation>;

struct Event {
    Millis t = 0;
    Record record;
    bool operator==(const Event&) const = default;
};

std::string_view kind_name(const Record& record);
std::string_view to_string(Cause cause) noexcept;

}  // namespace duplex::trace

namespace duplex {

struct SessionTrace {
    std::string session_id;
    std::vector<trace::Event> events;

    bool operator==(const SessionTrace&) const = default;

    template <class T>
    std::vector<std::pair<Millis, const T*>> all() const {
        std::vector<std::pair<Millis, const T*>> out;
        for (const auto& e : events) {
            if (const auto* r = std::get_if<T>(&e.record)) out.emplace_back(e.t, r);
        }
        return out;
    }
};

/// One JSON object per line; the first line is a session header.
std::string to_jsonl(const SessionTrace& trace);
void write_jsonl(std::ostream& out, const SessionTrace& trace);
/// Throws std::runtime_error with the offending line number on bad input.
SessionTrace parse_jsonl(std::string_view text);

/// Re-applies every recorded transition to a fresh Dialogue.
Dialogue replay_units(const SessionTrace& trace, Millis started_at = 0);

}  // namespace duplex
