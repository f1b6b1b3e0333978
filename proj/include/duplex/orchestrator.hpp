#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duplex/audio.hpp"
#include "duplex/clock.hpp"
#include "duplex/config.hpp"
#include "duplex/context.hpp"
#include "duplex/core.hpp"
#include "duplex/decision.hpp"
#include "duplex/synth.hpp"
#include "duplex/trace.hpp"

namespace duplex {

struct Backends {
    std::shared_ptr<VoiceActivityDetector> vad;
    std::shared_ptr<SpeakerEmbedder> embedder;
    std::optional<SpeakerProfile> profile;
    std::shared_ptr<AsrBackend> asr;
    std::shared_ptr<DecisionBackend> decision;
    std::shared_ptr<TtsBackend> tts;
};

/// Ground-truth lookups used by the scripted backends.
struct ScriptHooks {
    ScriptedOracle::Lookup truth;
    MockAsr::Lookup transcript;
};

/// Builds the backends named in the config (mock/scripted or remote).
Backends make_backends(const Config& config, ScriptHooks hooks = {});

/// Receives every trace record and agent frame as the engine produces them.
class EngineObserver {
public:
    virtual ~EngineObserver() = default;
    virtual void on_event(const trace::Event& event) { (void)event; }
    virtual void on_agent_frame(const AudioFrame& frame, std::int64_t utterance_id) {
        (void)frame;
        (void)utterance_id;
    }
};

struct EngineStats {
    std::int64_t units = 0;
    std::int64_t decisions = 0;
    std::int64_t cancellations = 0;
    std::int64_t completed_playbacks = 0;
    std::int64_t degradations = 0;
};

/// Unit-level control loop for one dialogue session.
///
/// User frames go through VAD, segment assembly and the speaker gate.
/// Accepted segments are transcribed asynchronously and turned into decision
/// cycles, which are strictly serialized. In Listen a cycle runs when a
/// segment ends; in Speak it runs once the user has been talking over the
/// reply for min_overlap_ms. Continue/Switch outcomes are applied through the
/// core state machine: l2s synthesizes and starts playback, s2l from a Speak
/// decision cancels playback first. Playback completion ends the unit with an
/// automatic s2l. All mutation happens on the clock's thread.
class Engine {
public:
    Engine(Config config, Backends backends, Clock& clock, std::string session_id = "session",
           EngineObserver* observer = nullptr);
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Feeds one user frame. Call once the frame is complete, i.e. at or after
    /// its t_end on the session clock.
    void ingest(const AudioFrame& frame);

    /// Appends the ingress summary. Pending work keeps running on the clock.
    void finish();

    const SessionTrace& trace() const noexcept { return trace_; }
    const Dialogue& dialogue() const noexcept { return dialogue_; }
    DialogueState state() const noexcept { return dialogue_.state(); }
    EngineStats stats() const;
    const Player& player() const noexcept { return player_; }
    const TranscriptCache& transcripts() const noexcept { return cache_; }
    bool decision_in_flight() const noexcept { return in_flight_.has_value(); }
    bool aborted() const noexcept { return aborted_; }
    const Config& config() const noexcept { return config_; }

private:
    enum class StimulusKind { Final, Probe };

    struct Stimulus {
        StimulusKind kind;
        SpeechSegment segment;
    };

    struct Run {
        std::int64_t segment_id = 0;
        VadEvent start;
        bool probed = false;
        std::optional<bool> accepted;
        std::optional<double> sv_score;
    };

    struct InFlight {
        DialogueState state;
        std::int64_t cycle;
    };

    void record(trace::Record record);
    void degrade(std::string source, std::string detail);
    void transition(TransitionKind kind, trace::Cause cause, std::optional<std::int64_t> cycle);

    void on_speech_start(const VadEvent& event);
    void on_speech_end(const VadEvent& event);
    void maybe_probe(Millis now);
    SpeechSegment gate(SpeechSegment segment);
    void record_segment(const SpeechSegment& segment);
    void submit_asr(const SpeechSegment& segment);

    void pump_queue();
    void start_decision(DialogueState state, Stimulus stimulus);
    void on_decision(DecisionRequest request, DecisionResult result);
    void start_reply(const std::string& text, std::int64_t segment_id);
    void emit_frame(std::int64_t utterance_id, std::int64_t index);
    void on_playback_complete(std::int64_t utterance_id);

    template <class F>
    void guarded(F&& f);

    Config config_;
    Backends backends_;
    Clock& clock_;
    EngineObserver* observer_;
    SessionTrace trace_;

    FrameRing ring_;
    std::optional<Run> run_;
    std::int64_t next_segment_id_ = 0;
    std::map<std::int64_t, bool> consumed_;

    TranscriptCache cache_;
    Dialogue dialogue_;
    std::int64_t next_cycle_ = 0;
    std::optional<InFlight> in_flight_;
    std::deque<Stimulus> queue_;
    std::vector<SpeechSegment> pending_listen_;
    std::vector<Turn> history_;

    Player player_;
    std::int64_t next_utterance_id_ = 0;
    bool completion_held_ = false;

    std::int64_t frames_in_ = 0;
    Millis first_frame_t_ = 0;
    Millis last_frame_t_ = 0;
    std::int64_t cancellations_ = 0;
    std::int64_t completions_ = 0;
    std::int64_t degradations_ = 0;
    bool aborted_ = false;
};

/// Virtual-clock driver: ingests every frame at its end time, then drains
/// all pending work.
SessionTrace run_session(std::span<const AudioFrame> frames, Backends backends, const Config& config, Clock& clock,
                         std::string session_id = "session", EngineObserver* observer = nullptr);

}  // namespace duplex
