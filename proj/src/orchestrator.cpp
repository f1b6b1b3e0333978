#include "duplex/orchestrator.hpp"

#include <algorithm>
#include <sstream>

namespace duplex {

Backends make_backends(const Config& config, ScriptHooks hooks) {
    Backends b;
    b.vad = std::make_shared<EnergyVad>(config.audio.vad);
    if (config.audio.sv_enabled) {
        auto embedder = std::make_shared<ToneEmbedder>(config.audio.sv_reference_hz);
        b.profile = embedder->profile(config.audio.sv_threshold);
        b.embedder = std::move(embedder);
    }
    if (config.context.asr_backend == "remote") {
        b.asr = std::make_shared<RemoteAsr>(config.context.asr_url, config.context.asr_timeout_ms);
    } else {
        b.asr = std::make_shared<MockAsr>(std::move(hooks.transcript), config.context.asr_latency_ms);
    }
    if (config.decision.backend == "remote") {
        b.decision = std::make_shared<RemoteDecisionBackend>(config.decision.url, config.decision.timeout_ms);
    } else {
        b.decision = std::make_shared<ScriptedOracle>(config.decision.scripted, std::move(hooks.truth));
    }
    if (config.tts.backend == "remote") {
        b.tts = std::make_shared<RemoteTts>(config.tts.url, config.tts.timeout_ms);
    } else {
        b.tts = std::make_shared<MockTts>(config.tts.ms_per_char, config.tts.first_chunk_latency_ms);
    }
    return b;
}

Engine::Engine(Config config, Backends backends, Clock& clock, std::string session_id, EngineObserver* observer)
    : config_(std::move(config)),
      backends_(std::move(backends)),
      clock_(clock),
      observer_(observer),
      ring_(config_.audio.ring_ms),
      dialogue_(clock.now()) {
    config_.validate();
    if (!backends_.vad) backends_.vad = std::make_shared<EnergyVad>(config_.audio.vad);
    if (!backends_.asr || !backends_.decision || !backends_.tts) {
        throw ContractViolation("engine needs asr, decision and tts backends");
    }
    trace_.session_id = std::move(session_id);
}

EngineStats Engine::stats() const {
    EngineStats s;
    s.units = dialogue_.unit_index();
    s.decisions = next_cycle_;
    s.cancellations = cancellations_;
    s.completed_playbacks = completions_;
    s.degradations = degradations_;
    return s;
}

template <class F>
void Engine::guarded(F&& f) {
    if (aborted_) return;
    try {
        f();
    } catch (const ContractViolation& e) {
        aborted_ = true;
        degrade("engine", std::string("session aborted: ") + e.what());
    }
}

void Engine::record(trace::Record r) {
    trace_.events.push_back(trace::Event{clock_.now(), std::move(r)});
    if (observer_) observer_->on_event(trace_.events.back());
}

void Engine::degrade(std::string source, std::string detail) {
    ++degradations_;
    record(trace::Degradation{std::move(source), std::move(detail)});
}

void Engine::transition(TransitionKind kind, trace::Cause cause, std::optional<std::int64_t> cycle) {
    const auto unit = dialogue_.unit_index();
    dialogue_.advance(clock_.now(), kind);
    record(trace::Transition{kind, unit, cause, cycle});
}

void Engine::ingest(const AudioFrame& frame) {
    guarded([&] {
        if (frame.source != Source::User) throw ContractViolation("engine ingests user frames only");
        if (frames_in_ == 0) first_frame_t_ = frame.t_start;
        ++frames_in_;
        last_frame_t_ = frame.t_start;
        ring_.push(frame);

        if (const auto event = backends_.vad->update(frame)) {
            record(trace::Vad{*event});
            if (event->kind == VadEventKind::SpeechStart) {
                on_speech_start(*event);
            } else {
                on_speech_end(*event);
            }
        }
        maybe_probe(frame.t_end());
        pump_queue();
    });
}

void Engine::finish() {
    guarded([&] { record(trace::Ingress{frames_in_, first_frame_t_, last_frame_t_}); });
}

void Engine::on_speech_start(const VadEvent& event) {
    run_ = Run{next_segment_id_++, event, false, std::nullopt, std::nullopt};
}

SpeechSegment Engine::gate(SpeechSegment segment) {
    auto gated = sv_gate(std::move(segment), backends_.profile, backends_.embedder.get());
    if (gated.warning) degrade("sv", *gated.warning);
    return std::move(gated.segment);
}

void Engine::record_segment(const SpeechSegment& s) {
    record(trace::Segment{s.segment_id, s.t_start, s.t_end, s.speech_start, s.speech_end, s.partial, s.accepted,
                          s.sv_score});
}

void Engine::on_speech_end(const VadEvent& event) {
    if (!run_) throw ContractViolation("SpeechEnd without an open speech run");
    const Run run = *run_;
    run_.reset();

    auto assembled = assemble_segment(ring_, run.start, event.t, config_.audio.pre_roll_ms, run.segment_id);
    if (assembled.warning) degrade("audio", *assembled.warning);
    auto segment = std::move(assembled.segment);
    if (run.accepted) {
        // The probe already went through the gate; the final segment keeps
        // that verdict so a run is never decided twice with different results.
        segment.accepted = *run.accepted;
        segment.sv_score = run.sv_score;
    } else {
        segment = gate(std::move(segment));
    }
    record_segment(segment);
    if (!segment.accepted) return;

    submit_asr(segment);
    queue_.push_back(Stimulus{StimulusKind::Final, std::move(segment)});
}

void Engine::maybe_probe(Millis now) {
    if (!run_ || run_->probed) return;
    if (state() != DialogueState::Speak || !player_.playing()) return;
    if (now - run_->start.t < config_.orchestrator.min_overlap_ms) return;

    run_->probed = true;
    auto assembled = assemble_segment(ring_, run_->start, now, config_.audio.pre_roll_ms, run_->segment_id, true);
    if (assembled.warning) degrade("audio", *assembled.warning);
    auto probe = gate(std::move(assembled.segment));
    run_->accepted = probe.accepted;
    run_->sv_score = probe.sv_score;
    record_segment(probe);
    if (probe.accepted) queue_.push_back(Stimulus{StimulusKind::Probe, std::move(probe)});
}

void Engine::submit_asr(const SpeechSegment& segment) {
    const auto id = segment.segment_id;
    cache_.submit(id, next_cycle_, clock_.now());
    record(trace::AsrSubmit{id, next_cycle_});
    const auto timeout = config_.context.asr_timeout_ms;
    auto backend = backends_.asr;
    clock_.defer<AsrResult>(
        [backend, segment]() {
            try {
                return backend->transcribe(segment);
            } catch (const std::exception& e) {
                AsrResult r;
                r.ok = false;
                r.error = e.what();
                return r;
            }
        },
        backend->blocking(),
        [this, id, timeout](AsrResult r) {
            guarded([&] {
                if (r.ok && r.latency_ms > timeout) {
                    r.ok = false;
                    r.error = "timed out after " + std::to_string(timeout) + " ms";
                }
                if (r.ok) {
                    cache_.complete(id, r.text, r.latency_ms);
                } else {
                    cache_.fail(id);
                    degrade("asr", "segment " + std::to_string(id) + ": " + r.error);
                }
                record(trace::AsrComplete{id, r.ok, r.ok ? r.text : std::string()});
            });
        },
        [timeout](const AsrResult& r) { return std::min(r.latency_ms, timeout); });
}

void Engine::pump_queue() {
    while (!in_flight_ && !queue_.empty() && !aborted_) {
        auto stimulus = std::move(queue_.front());
        queue_.pop_front();
        const auto id = stimulus.segment.segment_id;
        const bool consumed = consumed_.count(id) != 0;

        if (stimulus.kind == StimulusKind::Probe) {
            // The reply ended or was interrupted while this probe waited; the
            // final segment will be offered to Listen instead.
            if (state() != DialogueState::Speak || !player_.playing() || consumed) continue;
            start_decision(DialogueState::Speak, std::move(stimulus));
            return;
        }
        if (consumed) continue;
        if (state() == DialogueState::Listen) {
            start_decision(DialogueState::Listen, std::move(stimulus));
            return;
        }
        // A final segment reaching Speak was never long enough to probe, or
        // ended before the reply began. Its transcript still reaches later
        // Listen decisions.
    }
}

void Engine::start_decision(DialogueState state, Stimulus stimulus) {
    DecisionRequest request;
    request.cycle = next_cycle_++;
    request.state = state;
    request.prompt_template = state == DialogueState::Listen ? PromptTemplate::Listen : PromptTemplate::Speak;
    const auto& seg = stimulus.segment;
    request.segment = SegmentRef{seg.segment_id, seg.t_start, seg.t_end, seg.speech_start, seg.speech_end, seg.partial};

    const Millis window_start = seg.t_end - config_.decision.window_ms;
    if (state == DialogueState::Listen) {
        for (const auto& pending : pending_listen_) {
            for (const auto& f : pending.frames) {
                if (f.t_start >= window_start) request.audio.push_back(f);
            }
        }
    }
    for (const auto& f : seg.frames) {
        if (f.t_start >= window_start) request.audio.push_back(f);
    }
    request.transcripts = cache_.snapshot(request.cycle, clock_.now(), config_.context.max_segments);
    request.history = history_;

    record(trace::DecisionRequest{request.cycle, state, seg.segment_id,
                                  static_cast<std::int64_t>(request.transcripts.size()),
                                  static_cast<std::int64_t>(request.audio.size())});
    in_flight_ = InFlight{state, request.cycle};
    if (state == DialogueState::Listen) pending_listen_.push_back(std::move(stimulus.segment));

    auto backend = backends_.decision;
    const auto timeout = config_.decision.timeout_ms;
    auto meta = request;
    meta.audio.clear();
    clock_.defer<DecisionResult>(
        [backend, request = std::move(request), timeout]() { return decide(*backend, request, timeout); },
        backend->blocking(),
        [this, meta = std::move(meta)](DecisionResult result) mutable {
            guarded([&] { on_decision(std::move(meta), std::move(result)); });
        },
        [](const DecisionResult& r) { return r.outcome.backend_latency_ms; });
}

void Engine::on_decision(DecisionRequest request, DecisionResult result) {
    in_flight_.reset();
    const auto& outcome = result.outcome;
    if (result.degradation) degrade("decision", "cycle " + std::to_string(request.cycle) + ": " + *result.degradation);
    if (!label_valid_for(request.state, outcome.label) || label_to_action(request.state, outcome.label) != outcome.action) {
        throw ContractViolation("decision outcome is outside the decision space");
    }
    const auto seg_id = request.segment.segment_id;
    record(trace::DecisionOutcome{request.cycle, request.state, seg_id, outcome.action, outcome.label,
                                  outcome.response_text, outcome.backend_latency_ms, result.fallback});

    const auto step = apply_action(request.state, outcome.action);
    switch (step.kind) {
        case TransitionKind::KeepListen:
            transition(step.kind, trace::Cause::Decision, request.cycle);
            break;
        case TransitionKind::ListenToSpeak: {
            transition(step.kind, trace::Cause::Decision, request.cycle);
            std::ostringstream heard;
            for (const auto& t : request.transcripts) {
                const bool pending = std::any_of(pending_listen_.begin(), pending_listen_.end(),
                                                 [&](const SpeechSegment& s) { return s.segment_id == t.segment_id; });
                if (pending && !t.text.empty()) heard << (heard.tellp() > 0 ? " " : "") << t.text;
            }
            if (heard.tellp() > 0) history_.push_back(Turn{"user", heard.str()});
            history_.push_back(Turn{"assistant", *outcome.response_text});
            pending_listen_.clear();
            start_reply(*outcome.response_text, seg_id);
            break;
        }
        case TransitionKind::KeepSpeak:
            consumed_[seg_id] = true;
            transition(step.kind, trace::Cause::Decision, request.cycle);
            if (completion_held_) {
                completion_held_ = false;
                transition(TransitionKind::SpeakToListen, trace::Cause::PlaybackComplete, std::nullopt);
            }
            break;
        case TransitionKind::SpeakToListen:
            if (player_.playing()) {
                const auto cancelled = player_.cancel(clock_.now());
                ++cancellations_;
                record(trace::PlaybackCancel{cancelled->utterance_id, seg_id, cancelled->emitted_ms});
            }
            completion_held_ = false;
            transition(step.kind, trace::Cause::Decision, request.cycle);
            break;
    }
    pump_queue();
}

void Engine::start_reply(const std::string& text, std::int64_t segment_id) {
    const auto utterance_id = next_utterance_id_++;
    auto backend = backends_.tts;
    struct Synth {
        std::optional<SynthesisHandle> handle;
        std::string error;
    };
    clock_.defer<Synth>(
        [backend, text, utterance_id]() {
            Synth out;
            try {
                out.handle = synthesize(*backend, text, utterance_id);
            } catch (const std::exception& e) {
                out.error = e.what();
            }
            return out;
        },
        backend->blocking(),
        [this, segment_id](Synth s) {
            guarded([&] {
                if (!s.handle) {
                    degrade("tts", s.error);
                    transition(TransitionKind::SpeakToListen, trace::Cause::SynthesisFailed, std::nullopt);
                    pump_queue();
                    return;
                }
                const auto& session = player_.start(*s.handle, clock_.now());
                record(trace::PlaybackStart{session.utterance_id, segment_id, s.handle->text,
                                            session.total_duration_ms, session.first_frame_at()});
                const auto id = session.utterance_id;
                if (s.handle->frame_count() > 0) {
                    clock_.schedule(session.first_frame_at(), [this, id] { guarded([&] { emit_frame(id, 0); }); });
                }
                clock_.schedule(session.completes_at(), [this, id] { guarded([&] { on_playback_complete(id); }); });
            });
        },
        [](const Synth&) { return Millis{0}; });
}

void Engine::emit_frame(std::int64_t utterance_id, std::int64_t index) {
    if (!player_.may_emit(utterance_id)) return;
    const auto* handle = player_.handle();
    const auto frame = render_frame(*handle, index, clock_.now());
    record(trace::AgentFrame{utterance_id, index});
    if (observer_) observer_->on_agent_frame(frame, utterance_id);
    if (index + 1 < handle->frame_count()) {
        const auto next = player_.current()->first_frame_at() + (index + 1) * handle->chunk_ms;
        clock_.schedule(next, [this, utterance_id, index] { guarded([&] { emit_frame(utterance_id, index + 1); }); });
    }
}

void Engine::on_playback_complete(std::int64_t utterance_id) {
    if (!player_.may_emit(utterance_id)) return;
    const auto done = player_.complete();
    ++completions_;
    record(trace::PlaybackComplete{utterance_id, done->emitted_ms});
    if (in_flight_ && in_flight_->state == DialogueState::Speak) {
        completion_held_ = true;
        return;
    }
    transition(TransitionKind::SpeakToListen, trace::Cause::PlaybackComplete, std::nullopt);
    pump_queue();
}

SessionTrace run_session(std::span<const AudioFrame> frames, Backends backends, const Config& config, Clock& clock,
                         std::string session_id, EngineObserver* observer) {
    Engine engine(config, std::move(backends), clock, std::move(session_id), observer);
    for (const auto& frame : frames) {
        clock.schedule(frame.t_end(), [&engine, &frame] { engine.ingest(frame); });
    }
    clock.run_until_idle();
    engine.finish();
    clock.run_until_idle();
    return engine.trace();
}

}  // namespace duplex
