#include "duplex/trace.hpp"

#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace duplex::trace {

namespace {

template <class... Fs>
struct overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

}  // namespace

std::string_view kind_name(const Record& record) {
    return std::visit(overloaded{
                          [](const Ingress&) { return std::string_view("ingress"); },
                          [](const Vad&) { return std::string_view("vad"); },
                          [](const Segment&) { return std::string_view("segment"); },
                          [](const AsrSubmit&) { return std::string_view("asr_submit"); },
                          [](const AsrComplete&) { return std::string_view("asr_complete"); },
                          [](const DecisionRequest&) { return std::string_view("decision_request"); },
                          [](const DecisionOutcome&) { return std::string_view("decision_outcome"); },
                          [](const Transition&) { return std::string_view("transition"); },
                          [](const PlaybackStart&) { return std::string_view("playback_start"); },
                          [](const AgentFrame&) { return std::string_view("agent_frame"); },
                          [](const PlaybackCancel&) { return std::string_view("playback_cancel"); },
                          [](const PlaybackComplete&) { return std::string_view("playback_complete"); },
                          [](const Degradation&) { return std::string_view("degradation"); },
                      },
                      record);
}

std::string_view to_string(Cause cause) noexcept {
    switch (cause) {
        case Cause::Decision: return "decision";
        case Cause::PlaybackComplete: return "playback_complete";
        case Cause::SynthesisFailed: return "synthesis_failed";
    }
    return "?";
}

}  // namespace duplex::trace

namespace duplex {

using json = nlohmann::ordered_json;
using namespace trace;

namespace {

json encode(const Event& event) {
    json j;
    j["t"] = event.t;
    j["kind"] = std::string(kind_name(event.record));
    std::visit(overloaded{
                   [&](const Ingress& r) {
                       j["frames"] = r.frames;
                       j["first_t"] = r.first_t;
                       j["last_t"] = r.last_t;
                   },
                   [&](const Vad& r) {
                       j["event"] = r.event.kind == VadEventKind::SpeechStart ? "speech_start" : "speech_end";
                       j["event_t"] = r.event.t;
                   },
                   [&](const Segment& r) {
                       j["segment_id"] = r.segment_id;
                       j["t_start"] = r.t_start;
                       j["t_end"] = r.t_end;
                       j["speech_start"] = r.speech_start;
                       j["speech_end"] = r.speech_end;
                       j["partial"] = r.partial;
                       j["accepted"] = r.accepted;
                       if (r.sv_score) j["sv_score"] = *r.sv_score;
                   },
                   [&](const AsrSubmit& r) {
                       j["segment_id"] = r.segment_id;
                       j["cycle"] = r.cycle;
                   },
                   [&](const AsrComplete& r) {
                       j["segment_id"] = r.segment_id;
                       j["ok"] = r.ok;
                       j["text"] = r.text;
                   },
                   [&](const DecisionRequest& r) {
                       j["cycle"] = r.cycle;
                       j["state"] = std::string(to_string(r.state));
                       j["segment_id"] = r.segment_id;
                       j["transcripts"] = r.transcripts;
                       j["audio_frames"] = r.audio_frames;
                   },
                   [&](const DecisionOutcome& r) {
                       j["cycle"] = r.cycle;
                       j["state"] = std::string(to_string(r.state));
                       j["segment_id"] = r.segment_id;
                       j["action"] = std::string(to_string(r.action));
                       j["label"] = std::string(to_string(r.label));
                       if (r.response_text) j["response_text"] = *r.response_text;
                       j["backend_latency_ms"] = r.backend_latency_ms;
                       j["fallback"] = r.fallback;
                   },
                   [&](const Transition& r) {
                       j["transition"] = std::string(to_string(r.kind));
                       j["unit_index"] = r.unit_index;
                       j["cause"] = std::string(to_string(r.cause));
                       if (r.cycle) j["cycle"] = *r.cycle;
                   },
                   [&](const PlaybackStart& r) {
                       j["utterance_id"] = r.utterance_id;
                       j["segment_id"] = r.segment_id;
                       j["text"] = r.text;
                       j["total_duration_ms"] = r.total_duration_ms;
                       j["first_frame_at"] = r.first_frame_at;
                   },
                   [&](const AgentFrame& r) {
                       j["utterance_id"] = r.utterance_id;
                       j["index"] = r.index;
                   },
                   [&](const PlaybackCancel& r) {
                       j["utterance_id"] = r.utterance_id;
                       j["segment_id"] = r.segment_id;
                       j["emitted_ms"] = r.emitted_ms;
                   },
                   [&](const PlaybackComplete& r) {
                       j["utterance_id"] = r.utterance_id;
                       j["emitted_ms"] = r.emitted_ms;
                   },
                   [&](const Degradation& r) {
                       j["source"] = r.source;
                       j["detail"] = r.detail;
                   },
               },
               event.record);
    return j;
}

template <class E>
E parse_enum(const json& j, const char* key, std::optional<E> (*parse)(std::string_view)) {
    const auto text = j.at(key).get<std::string>();
    const auto value = parse(text);
    if (!value) throw std::runtime_error(std::string("bad value for ") + key + ": " + text);
    return *value;
}

Cause parse_cause(const std::string& text) {
    if (text == "decision") return Cause::Decision;
    if (text == "playback_complete") return Cause::PlaybackComplete;
    if (text == "synthesis_failed") return Cause::SynthesisFailed;
    throw std::runtime_error("bad transition cause: " + text);
}

Record decode(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "ingress") {
        return Ingress{j.at("frames").get<std::int64_t>(), j.at("first_t").get<Millis>(), j.at("last_t").get<Millis>()};
    }
    if (kind == "vad") {
        const auto ev = j.at("event").get<std::string>();
        if (ev != "speech_start" && ev != "speech_end") throw std::runtime_error("bad vad event: " + ev);
        return Vad{VadEvent{ev == "speech_start" ? VadEventKind::SpeechStart : VadEventKind::SpeechEnd,
                            j.at("event_t").get<Millis>()}};
    }
    if (kind == "segment") {
        Segment r;
        r.segment_id = j.at("segment_id").get<std::int64_t>();
        r.t_start = j.at("t_start").get<Millis>();
        r.t_end = j.at("t_end").get<Millis>();
        r.speech_start = j.at("speech_start").get<Millis>();
        r.speech_end = j.at("speech_end").get<Millis>();
        r.partial = j.at("partial").get<bool>();
        r.accepted = j.at("accepted").get<bool>();
        if (j.contains("sv_score")) r.sv_score = j.at("sv_score").get<double>();
        return r;
    }
    if (kind == "asr_submit") {
        return AsrSubmit{j.at("segment_id").get<std::int64_t>(), j.at("cycle").get<std::int64_t>()};
    }
    if (kind == "asr_complete") {
        return AsrComplete{j.at("segment_id").get<std::int64_t>(), j.at("ok").get<bool>(),
                           j.at("text").get<std::string>()};
    }
    if (kind == "decision_request") {
        DecisionRequest r;
        r.cycle = j.at("cycle").get<std::int64_t>();
        r.state = parse_enum<DialogueState>(j, "state", &parse_state);
        r.segment_id = j.at("segment_id").get<std::int64_t>();
        r.transcripts = j.at("transcripts").get<std::int64_t>();
        r.audio_frames = j.at("audio_frames").get<std::int64_t>();
        return r;
    }
    if (kind == "decision_outcome") {
        DecisionOutcome r;
        r.cycle = j.at("cycle").get<std::int64_t>();
        r.state = parse_enum<DialogueState>(j, "state", &parse_state);
        r.segment_id = j.at("segment_id").get<std::int64_t>();
        r.action = parse_enum<Action>(j, "action", &parse_action);
        r.label = parse_enum<UtteranceLabel>(j, "label", &parse_label);
        if (j.contains("response_text")) r.response_text = j.at("response_text").get<std::string>();
        r.backend_latency_ms = j.at("backend_latency_ms").get<Millis>();
        r.fallback = j.at("fallback").get<bool>();
        return r;
    }
    if (kind == "transition") {
        Transition r;
        r.kind = parse_enum<TransitionKind>(j, "transition", &parse_transition);
        r.unit_index = j.at("unit_index").get<std::int64_t>();
        r.cause = parse_cause(j.at("cause").get<std::string>());
        if (j.contains("cycle")) r.cycle = j.at("cycle").get<std::int64_t>();
        return r;
    }
    if (kind == "playback_start") {
        return PlaybackStart{j.at("utterance_id").get<std::int64_t>(), j.at("segment_id").get<std::int64_t>(),
                             j.at("text").get<std::string>(), j.at("total_duration_ms").get<Millis>(),
                             j.at("first_frame_at").get<Millis>()};
    }
    if (kind == "agent_frame") {
        return AgentFrame{j.at("utterance_id").get<std::int64_t>(), j.at("index").get<std::int64_t>()};
    }
    if (kind == "playback_cancel") {
        return PlaybackCancel{j.at("utterance_id").get<std::int64_t>(), j.at("segment_id").get<std::int64_t>(),
                              j.at("emitted_ms").get<Millis>()};
    }
    if (kind == "playback_complete") {
        return PlaybackComplete{j.at("utterance_id").get<std::int64_t>(), j.at("emitted_ms").get<Millis>()};
    }
    if (kind == "degradation") {
        return Degradation{j.at("source").get<std::string>(), j.at("detail").get<std::string>()};
    }
    throw std::runtime_error("unknown trace record kind: " + kind);
}

}  // namespace

void write_jsonl(std::ostream& out, const SessionTrace& trace) {
    json header;
    header["kind"] = "session";
    header["session_id"] = trace.session_id;
    header["events"] = trace.events.size();
    out << header.dump() << '\n';
    for (const auto& event : trace.events) out << encode(event).dump() << '\n';
}

std::string to_jsonl(const SessionTrace& trace) {
    std::ostringstream out;
    write_jsonl(out, trace);
    return out.str();
}

SessionTrace parse_jsonl(std::string_view text) {
    SessionTrace trace;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            if (!header_seen) {
                if (j.at("kind").get<std::string>() != "session") {
                    throw std::runtime_error("first line must be the session header");
                }
                trace.session_id = j.at("session_id").get<std::string>();
                header_seen = true;
                continue;
            }
            trace.events.push_back(Event{j.at("t").get<Millis>(), decode(j)});
        } catch (const std::exception& e) {
            throw std::runtime_error("trace line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (!header_seen) throw std::runtime_error("trace is missing its session header");
    return trace;
}

Dialogue replay_units(const SessionTrace& trace, Millis started_at) {
    Dialogue dialogue(started_at);
    for (const auto& event : trace.events) {
        if (const auto* t = std::get_if<Transition>(&event.record)) dialogue.advance(event.t, t->kind);
    }
    return dialogue;
}

}  // namespace duplex
