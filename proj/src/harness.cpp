#include "duplex/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace duplex {

using json = nlohmann::ordered_json;

std::string_view to_string(Expected expected) noexcept {
    switch (expected) {
        case Expected::Respond: return "Respond";
        case Expected::Wait: return "Wait";
        case Expected::ContinueSpeaking: return "ContinueSpeaking";
        case Expected::CancelAndListen: return "CancelAndListen";
        case Expected::Ignore: return "Ignore";
    }
    return "?";
}

std::optional<Expected> parse_expected(std::string_view text) noexcept {
    if (text == "Respond") return Expected::Respond;
    if (text == "Wait") return Expected::Wait;
    if (text == "ContinueSpeaking") return Expected::ContinueSpeaking;
    if (text == "CancelAndListen") return Expected::CancelAndListen;
    if (text == "Ignore") return Expected::Ignore;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Scenario files

void validate(const ScenarioScript& script) {
    for (std::size_t i = 0; i < script.events.size(); ++i) {
        const auto& e = script.events[i];
        const auto fail = [&](const std::string& what) {
            throw ScenarioError("event " + std::to_string(i) + ": " + what);
        };
        if (e.t_ms < 0 || e.t_ms % kFrameMs != 0) fail("t_ms must be a non-negative multiple of 20");
        if (e.duration_ms <= 0 || e.duration_ms % kFrameMs != 0) fail("duration_ms must be a positive multiple of 20");
        if (e.label == TruthLabel::NonTarget && e.expected != Expected::Ignore) {
            fail("NonTarget events can only expect Ignore");
        }
        if (i > 0 && e.t_ms < script.events[i - 1].end_ms()) fail("overlaps or precedes the previous event");
    }
}

ScenarioScript parse_scenario(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const std::exception& e) {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
    }
    ScenarioScript script;
    try {
        script.name = doc.value("name", std::string("scenario"));
        script.seed = doc.value("seed", std::uint64_t{0});
    } catch (const std::exception& e) {
        throw ScenarioError(std::string("scenario header: ") + e.what());
    }
    if (!doc.contains("events") || !doc.at("events").is_array()) throw ScenarioError("scenario needs an events array");
    std::size_t index = 0;
    for (const auto& ev : doc.at("events")) {
        try {
            ScenarioEvent e;
            if (ev.value("kind", std::string("UserUtterance")) != "UserUtterance") {
                throw ScenarioError("unsupported kind " + ev.at("kind").get<std::string>());
            }
            e.t_ms = ev.at("t_ms").get<Millis>();
            e.duration_ms = ev.at("duration_ms").get<Millis>();
            const auto label = ev.at("label").get<std::string>();
            const auto parsed_label = parse_truth_label(label);
            if (!parsed_label) throw ScenarioError("unknown label " + label);
            e.label = *parsed_label;
            const auto expected = ev.at("expected").get<std::string>();
            const auto parsed_expected = parse_expected(expected);
            if (!parsed_expected) throw ScenarioError("unknown expectation " + expected);
            e.expected = *parsed_expected;
            e.text = ev.value("text", std::string());
            e.reply = ev.value("reply", std::string());
            script.events.push_back(std::move(e));
        } catch (const ScenarioError& err) {
            throw ScenarioError("event " + std::to_string(index) + ": " + err.what());
        } catch (const std::exception& err) {
            throw ScenarioError("event " + std::to_string(index) + ": " + err.what());
        }
        ++index;
    }
    validate(script);
    return script;
}

ScenarioScript load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse_scenario(buffer.str());
    } catch (const ScenarioError& e) {
        throw ScenarioError(path.string() + ": " + e.what());
    }
}

std::string scenario_to_json(const ScenarioScript& script) {
    json doc;
    doc["name"] = script.name;
    doc["seed"] = script.seed;
    doc["events"] = json::array();
    for (const auto& e : script.events) {
        json ev;
        ev["t_ms"] = e.t_ms;
        ev["kind"] = "UserUtterance";
        ev["duration_ms"] = e.duration_ms;
        ev["label"] = std::string(to_string(e.label));
        ev["expected"] = std::string(to_string(e.expected));
        ev["text"] = e.text;
        if (!e.reply.empty()) ev["reply"] = e.reply;
        doc["events"].push_back(std::move(ev));
    }
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Simulation

std::vector<AudioFrame> synthesize_user_audio(const ScenarioScript& script, Millis tail_ms) {
    Millis end = 0;
    for (const auto& e : script.events) end = std::max(end, e.end_ms());
    end += std::max<Millis>(0, tail_ms);
    const auto frame_count = static_cast<std::size_t>((end + kFrameMs - 1) / kFrameMs);

    std::vector<AudioFrame> frames(frame_count);
    for (std::size_t i = 0; i < frame_count; ++i) {
        frames[i].t_start = static_cast<Millis>(i) * kFrameMs;
        frames[i].source = Source::User;
    }
    for (const auto& e : script.events) {
        const double hz = e.label == TruthLabel::NonTarget ? kOtherVoiceHz : kTargetVoiceHz;
        for (Millis t = e.t_ms; t < e.end_ms(); t += kFrameMs) {
            auto& frame = frames[static_cast<std::size_t>(t / kFrameMs)];
            for (std::size_t k = 0; k < kFrameSamples; ++k) {
                const auto n = static_cast<double>(t) * kSampleRate / 1000.0 + static_cast<double>(k);
                frame.samples[k] =
                    static_cast<std::int16_t>(std::lround(30000.0 * std::sin(2.0 * std::numbers::pi * hz * n / kSampleRate)));
            }
        }
    }
    return frames;
}

std::optional<std::size_t> event_at(const ScenarioScript& script, Millis speech_start) {
    for (std::size_t i = 0; i < script.events.size(); ++i) {
        const auto& e = script.events[i];
        if (speech_start >= e.t_ms && speech_start < e.end_ms()) return i;
    }
    return std::nullopt;
}

ScriptHooks script_hooks(const ScenarioScript& script) {
    auto shared = std::make_shared<const ScenarioScript>(script);
    ScriptHooks hooks;
    hooks.truth = [shared](const DecisionRequest& request) -> std::optional<GroundTruth> {
        const auto i = event_at(*shared, request.segment.speech_start);
        if (!i) return std::nullopt;
        const auto& e = shared->events[*i];
        return GroundTruth{e.label, e.reply};
    };
    hooks.transcript = [shared](const SpeechSegment& segment) -> std::optional<std::string> {
        const auto i = event_at(*shared, segment.speech_start);
        if (!i) return std::nullopt;
        return shared->events[*i].text;
    };
    return hooks;
}

SessionTrace simulate(const ScenarioScript& script, const Config& config) {
    validate(script);
    Config cfg = config;
    cfg.decision.scripted.seed ^= script.seed;
    const auto frames = synthesize_user_audio(script, cfg.harness.tail_ms);
    Clock clock(ClockMode::Virtual);
    return run_session(frames, make_backends(cfg, script_hooks(script)), cfg, clock, script.name);
}

// ---------------------------------------------------------------------------
// Metrics

bool MetricsReport::expectations_met() const noexcept {
    return std::all_of(events.begin(), events.end(), [](const EventOutcome& e) { return e.met; });
}

namespace {

std::optional<double> mean_seconds(std::int64_t sum_ms, std::int64_t count) {
    if (count == 0) return std::nullopt;
    return static_cast<double>(sum_ms) / static_cast<double>(count) / 1000.0;
}

std::optional<double> percentage(std::int64_t hits, std::int64_t total) {
    if (total == 0) return std::nullopt;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

void finalize(MetricsReport& r) {
    r.first_response_delay_s = mean_seconds(r.first_response_sum_ms, r.first_response_count);
    r.total_delay_s = mean_seconds(r.onset_sum_ms, r.onset_count);
    r.interruption_total_score = percentage(r.interruptions_handled, r.interruption_events);
    r.rejection_total_score = percentage(r.rejections_handled, r.rejection_events);
}

}  // namespace

MetricsReport compute_metrics(const SessionTrace& trace, const ScenarioScript& script, Millis t_stop_ms) {
    if (trace.session_id != script.name) {
        throw ScenarioError("trace '" + trace.session_id + "' was not produced from scenario '" + script.name + "'");
    }
    std::map<std::int64_t, std::size_t> segment_event;
    std::set<std::int64_t> rejected;
    struct Decision {
        Millis t;
        const trace::DecisionOutcome* outcome;
    };
    std::map<std::int64_t, Decision> by_cycle;
    std::map<std::int64_t, Millis> s2l_by_cycle;
    std::map<std::int64_t, std::vector<std::string>> observed;
    std::map<std::int64_t, std::vector<Millis>> cancels_by_segment;
    std::map<std::int64_t, std::int64_t> playback_segment;
    std::map<std::int64_t, Millis> first_frame;

    for (const auto& [t, seg] : trace.all<trace::Segment>()) {
        const auto i = event_at(script, seg->speech_start);
        if (!i) {
            throw ScenarioError("segment " + std::to_string(seg->segment_id) + " at t=" +
                                std::to_string(seg->speech_start) + " matches no scripted event");
        }
        segment_event[seg->segment_id] = *i;
        if (!seg->accepted) rejected.insert(seg->segment_id);
    }
    for (const auto& [t, o] : trace.all<trace::DecisionOutcome>()) by_cycle[o->cycle] = Decision{t, o};
    for (const auto& ev : trace.events) {
        if (const auto* tr = std::get_if<trace::Transition>(&ev.record)) {
            if (!tr->cycle) continue;
            const auto it = by_cycle.find(*tr->cycle);
            if (it == by_cycle.end()) throw ScenarioError("transition for unknown cycle " + std::to_string(*tr->cycle));
            observed[it->second.outcome->segment_id].emplace_back(to_string(tr->kind));
            if (tr->kind == TransitionKind::SpeakToListen) s2l_by_cycle[*tr->cycle] = ev.t;
        } else if (const auto* c = std::get_if<trace::PlaybackCancel>(&ev.record)) {
            cancels_by_segment[c->segment_id].push_back(ev.t);
            observed[c->segment_id].emplace_back("cancel");
        }
    }
    for (const auto& [t, p] : trace.all<trace::PlaybackStart>()) playback_segment[p->utterance_id] = p->segment_id;
    for (const auto& [t, f] : trace.all<trace::AgentFrame>()) {
        if (f->index == 0) first_frame.emplace(f->utterance_id, t);
    }

    MetricsReport report;
    report.name = script.name;
    std::vector<std::optional<Millis>> first_onset(script.events.size());
    for (const auto& [utterance, t] : first_frame) {
        const auto seg = playback_segment.at(utterance);
        const auto& event = script.events.at(segment_event.at(seg));
        const auto delay = t - event.end_ms();
        report.onset_sum_ms += delay;
        ++report.onset_count;
        auto& slot = first_onset[segment_event.at(seg)];
        if (!slot) slot = delay;
    }

    for (std::size_t i = 0; i < script.events.size(); ++i) {
        const auto& e = script.events[i];
        EventOutcome out;
        out.index = i;
        out.label = e.label;
        out.expected = e.expected;
        for (const auto& [seg, idx] : segment_event) {
            if (idx == i) out.segment_ids.push_back(seg);
        }

        bool listen_switch = false;
        bool speak_switch = false;
        bool speak_switch_s2l = false;
        bool any_switch = false;
        bool any_cancel = false;
        bool cancel_in_time = false;
        bool all_rejected = !out.segment_ids.empty();
        std::vector<std::string> seen;
        for (const auto seg : out.segment_ids) {
            if (!rejected.count(seg)) all_rejected = false;
            if (auto it = observed.find(seg); it != observed.end()) seen.insert(seen.end(), it->second.begin(), it->second.end());
            if (auto it = cancels_by_segment.find(seg); it != cancels_by_segment.end()) {
                any_cancel = true;
                for (const auto tc : it->second) {
                    if (tc - e.t_ms <= t_stop_ms) cancel_in_time = true;
                }
            }
            for (const auto& [cycle, d] : by_cycle) {
                if (d.outcome->segment_id != seg || d.outcome->action != Action::Switch) continue;
                any_switch = true;
                if (d.outcome->state == DialogueState::Listen) listen_switch = true;
                if (d.outcome->state == DialogueState::Speak) {
                    speak_switch = true;
                    if (s2l_by_cycle.count(cycle)) speak_switch_s2l = true;
                }
            }
        }
        if (seen.empty()) {
            out.observed = out.segment_ids.empty() ? "none" : (all_rejected ? "rejected" : "undecided");
        } else {
            for (std::size_t k = 0; k < seen.size(); ++k) out.observed += (k ? "," : "") + seen[k];
        }
        out.response_delay_ms = first_onset[i];

        const bool answered = listen_switch && first_onset[i].has_value();
        if (e.label == TruthLabel::Complete && answered) {
            report.first_response_sum_ms += *first_onset[i];
            ++report.first_response_count;
        }
        if (e.label == TruthLabel::Interruption) {
            ++report.interruption_events;
            if (speak_switch_s2l && cancel_in_time) ++report.interruptions_handled;
        }
        const bool quiet = !any_switch && !any_cancel;
        if (e.label == TruthLabel::Backchannel || e.label == TruthLabel::NonTarget) {
            ++report.rejection_events;
            if (quiet) ++report.rejections_handled;
        }

        switch (e.expected) {
            case Expected::Respond: out.met = answered; break;
            case Expected::Wait: out.met = !any_switch; break;
            case Expected::ContinueSpeaking: out.met = quiet; break;
            case Expected::CancelAndListen: out.met = speak_switch && any_cancel; break;
            case Expected::Ignore: out.met = !any_switch; break;
        }
        report.events.push_back(std::move(out));
    }
    finalize(report);
    return report;
}

MetricsReport aggregate(std::span<const MetricsReport> reports, std::string name) {
    MetricsReport total;
    total.name = std::move(name);
    for (const auto& r : reports) {
        total.first_response_count += r.first_response_count;
        total.first_response_sum_ms += r.first_response_sum_ms;
        total.onset_count += r.onset_count;
        total.onset_sum_ms += r.onset_sum_ms;
        total.interruption_events += r.interruption_events;
        total.interruptions_handled += r.interruptions_handled;
        total.rejection_events += r.rejection_events;
        total.rejections_handled += r.rejections_handled;
    }
    finalize(total);
    return total;
}

// ---------------------------------------------------------------------------
// Reports

std::optional<ReportFormat> parse_report_format(std::string_view text) noexcept {
    if (text == "json") return ReportFormat::Json;
    if (text == "md" || text == "markdown") return ReportFormat::Markdown;
    return std::nullopt;
}

const std::vector<ReferenceRow>& published_reference_rows() {
    static const std::vector<ReferenceRow> rows = {
        {"published challenge baseline (HumDial dev)", "2.753s", "80.2", "45.6", "2.436s"},
        {"published unit-based system (HumDial dev)", "1.528s", "89.7", "50.0", "1.698s"},
        {"published unit-based system (HumDial test)", "-", "89.7", "57.8", "1.632s"},
    };
    return rows;
}

namespace {

json optional_number(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

std::optional<double> read_optional(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

std::string fmt_seconds(const std::optional<double>& v) {
    if (!v) return "-";
    std::ostringstream out;
    out << std::fixed << std::setprecision(3) << *v << "s";
    return out.str();
}

std::string fmt_score(const std::optional<double>& v) {
    if (!v) return "-";
    std::ostringstream out;
    out << std::fixed << std::setprecision(1) << *v;
    return out.str();
}

}  // namespace

std::string report_to_json(std::span<const MetricsReport> reports) {
    json doc;
    doc["reports"] = json::array();
    for (const auto& r : reports) {
        json j;
        j["name"] = r.name;
        j["first_response_delay_s"] = optional_number(r.first_response_delay_s);
        j["interruption_total_score"] = optional_number(r.interruption_total_score);
        j["rejection_total_score"] = optional_number(r.rejection_total_score);
        j["total_delay_s"] = optional_number(r.total_delay_s);
        j["tallies"] = {
            {"first_response_count", r.first_response_count}, {"first_response_sum_ms", r.first_response_sum_ms},
            {"onset_count", r.onset_count},                   {"onset_sum_ms", r.onset_sum_ms},
            {"interruption_events", r.interruption_events},   {"interruptions_handled", r.interruptions_handled},
            {"rejection_events", r.rejection_events},         {"rejections_handled", r.rejections_handled},
        };
        j["events"] = json::array();
        for (const auto& e : r.events) {
            json ev;
            ev["index"] = e.index;
            ev["label"] = std::string(to_string(e.label));
            ev["expected"] = std::string(to_string(e.expected));
            ev["segment_ids"] = e.segment_ids;
            ev["observed"] = e.observed;
            ev["met"] = e.met;
            ev["response_delay_ms"] = e.response_delay_ms ? json(*e.response_delay_ms) : json(nullptr);
            j["events"].push_back(std::move(ev));
        }
        doc["reports"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

std::vector<MetricsReport> reports_from_json(std::string_view text) {
    const auto doc = json::parse(text);
    std::vector<MetricsReport> out;
    for (const auto& j : doc.at("reports")) {
        MetricsReport r;
        r.name = j.at("name").get<std::string>();
        r.first_response_delay_s = read_optional(j, "first_response_delay_s");
        r.interruption_total_score = read_optional(j, "interruption_total_score");
        r.rejection_total_score = read_optional(j, "rejection_total_score");
        r.total_delay_s = read_optional(j, "total_delay_s");
        const auto& t = j.at("tallies");
        r.first_response_count = t.at("first_response_count").get<std::int64_t>();
        r.first_response_sum_ms = t.at("first_response_sum_ms").get<std::int64_t>();
        r.onset_count = t.at("onset_count").get<std::int64_t>();
        r.onset_sum_ms = t.at("onset_sum_ms").get<std::int64_t>();
        r.interruption_events = t.at("interruption_events").get<std::int64_t>();
        r.interruptions_handled = t.at("interruptions_handled").get<std::int64_t>();
        r.rejection_events = t.at("rejection_events").get<std::int64_t>();
        r.rejections_handled = t.at("rejections_handled").get<std::int64_t>();
        for (const auto& ev : j.at("events")) {
            EventOutcome e;
            e.index = ev.at("index").get<std::size_t>();
            e.label = parse_truth_label(ev.at("label").get<std::string>()).value();
            e.expected = parse_expected(ev.at("expected").get<std::string>()).value();
            e.segment_ids = ev.at("segment_ids").get<std::vector<std::int64_t>>();
            e.observed = ev.at("observed").get<std::string>();
            e.met = ev.at("met").get<bool>();
            if (!ev.at("response_delay_ms").is_null()) e.response_delay_ms = ev.at("response_delay_ms").get<Millis>();
            r.events.push_back(std::move(e));
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::string report_to_markdown(std::span<const MetricsReport> reports) {
    std::ostringstream out;
    out << "| System | First Response Delay | Interruption Total Score | Rejection Total Score | Total Delay |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& row : published_reference_rows()) {
        out << "| " << row.name << " | " << row.first_response_delay << " | " << row.interruption_total_score << " | "
            << row.rejection_total_score << " | " << row.total_delay << " |\n";
    }
    for (const auto& r : reports) {
        out << "| " << r.name << " | " << fmt_seconds(r.first_response_delay_s) << " | "
            << fmt_score(r.interruption_total_score) << " | " << fmt_score(r.rejection_total_score) << " | "
            << fmt_seconds(r.total_delay_s) << " |\n";
    }
    out << "\nPublished rows come from graded, judge-scored HumDial runs with production models. Rows below them "
           "use binary behavioral scoring on scripted scenarios and are not directly comparable.\n";
    for (const auto& r : reports) {
        if (r.events.empty()) continue;
        out << "\n### " << r.name << "\n\n| # | Label | Expected | Observed | Met | Response delay |\n|---|---|---|---|---|---|\n";
        for (const auto& e : r.events) {
            out << "| " << e.index << " | " << to_string(e.label) << " | " << to_string(e.expected) << " | " << e.observed
                << " | " << (e.met ? "yes" : "NO") << " | "
                << (e.response_delay_ms ? std::to_string(*e.response_delay_ms) + " ms" : "-") << " |\n";
        }
    }
    return out.str();
}

void emit_report(std::span<const MetricsReport> reports, ReportFormat format, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report to " + path.string());
    out << (format == ReportFormat::Json ? report_to_json(reports) : report_to_markdown(reports));
    if (!out) throw std::runtime_error("failed writing report to " + path.string());
}

// ---------------------------------------------------------------------------
// Scenario generator

namespace {

constexpr std::array<std::string_view, 24> kWords = {
    "sure",  "the",    "weather", "looks", "sunny", "tomorrow", "with", "light", "wind",  "and",    "mild", "rain",
    "later", "in",     "evening", "your",  "train", "leaves",   "at",   "nine",  "there", "is",     "time", "left"};

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    Millis between(Millis lo, Millis hi) {
        lo = (lo + kFrameMs - 1) / kFrameMs;
        hi = hi / kFrameMs;
        if (hi < lo) return lo * kFrameMs;
        return std::uniform_int_distribution<Millis>(lo, hi)(rng_) * kFrameMs;
    }
    double unit() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }
    std::string sentence(std::size_t min_chars, std::size_t max_chars) {
        const auto target = std::uniform_int_distribution<std::size_t>(min_chars, max_chars)(rng_);
        std::string out;
        while (out.size() < target) {
            if (!out.empty()) out += ' ';
            out += kWords[std::uniform_int_distribution<std::size_t>(0, kWords.size() - 1)(rng_)];
        }
        return out;
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace

ScenarioScript generate_scenario(std::uint64_t seed, const Config& config, GeneratorOptions options) {
    Gen gen(seed);
    ScenarioScript script;
    script.name = "generated-" + std::to_string(seed);
    script.seed = seed;

    const Millis silence = config.audio.vad.min_silence_ms;
    const Millis decision = config.decision.scripted.latency_ms + config.decision.scripted.jitter_ms;
    const Millis first_chunk = config.tts.first_chunk_latency_ms;
    const Millis per_char = config.tts.ms_per_char;
    const Millis overlap_trigger =
        std::max((config.orchestrator.min_overlap_ms + kFrameMs - 1) / kFrameMs * kFrameMs, config.audio.vad.min_speech_ms);
    const Millis gap = silence + kFrameMs;

    Millis cursor = 1000;
    auto push = [&](Millis t, Millis d, TruthLabel label, Expected expected, std::string text, std::string reply = {}) {
        script.events.push_back(ScenarioEvent{t, d, label, expected, std::move(text), std::move(reply)});
    };
    auto remaining = [&] { return options.events - script.events.size(); };

    // Reply to a user turn ending at `end`: returns [first frame, completion).
    auto reply_window = [&](Millis end, const std::string& reply) {
        const Millis first = end + silence + decision + first_chunk;
        return std::pair{first, first + per_char * static_cast<Millis>(character_count(reply))};
    };

    while (remaining() > 0) {
        const double pick = gen.unit();
        if (options.include_non_target && pick < 0.12) {
            const Millis t = gen.between(cursor, cursor + 400);
            const Millis d = gen.between(300, 900);
            push(t, d, TruthLabel::NonTarget, Expected::Ignore, "background talk");
            cursor = t + d + silence + decision + 200;
            continue;
        }
        if (pick < 0.30 && remaining() >= 2) {
            const Millis t = gen.between(cursor, cursor + 400);
            const Millis d = gen.between(400, 1000);
            push(t, d, TruthLabel::Incomplete, Expected::Wait, "so i was wondering");
            cursor = t + d + silence + decision + 100;
        }

        const Millis t = gen.between(cursor, cursor + 600);
        const Millis d = gen.between(600, 2000);
        auto reply = gen.sentence(30, 90);
        const auto [first, end] = reply_window(t + d, reply);
        push(t, d, TruthLabel::Complete, Expected::Respond, gen.sentence(10, 40), reply);
        cursor = std::max(end + 200, t + d + gap);
        if (remaining() == 0) break;

        const double overlap = gen.unit();
        if (overlap < 0.35) {
            const Millis bd = gen.between(200, 400);
            const Millis latest = end - overlap_trigger - decision - 200;
            if (latest > first + 100) {
                const Millis bt = gen.between(first + 100, latest);
                push(bt, bd, TruthLabel::Backchannel, Expected::ContinueSpeaking, "mm-hm");
                cursor = std::max(end + 200, bt + bd + gap);
            }
        } else if (overlap < 0.75) {
            const Millis latest = end - overlap_trigger - decision - 100;
            if (latest > first + 100) {
                const Millis it = gen.between(first + 100, latest);
                const Millis id = gen.between(600, 1200);
                auto second = gen.sentence(30, 90);
                const auto [first2, end2] = reply_window(it + id, second);
                push(it, id, TruthLabel::Interruption, Expected::CancelAndListen, "wait, actually", second);
                cursor = std::max(end2 + 200, it + id + gap);
            }
        } else if (options.include_non_target && overlap < 0.85) {
            const Millis nd = gen.between(300, 600);
            const Millis latest = end - overlap_trigger - decision - 200;
            if (latest > first + 100) {
                const Millis nt = gen.between(first + 100, latest);
                push(nt, nd, TruthLabel::NonTarget, Expected::Ignore, "someone else talking");
                cursor = std::max(end + 200, nt + nd + gap);
            }
        }
    }
    validate(script);
    return script;
}

// ---------------------------------------------------------------------------
// Bench

BenchResult run_bench(const std::filesystem::path& dir, const Config& config, unsigned threads) {
    BenchResult result;
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::vector<ScenarioScript> scripts;
    scripts.reserve(files.size());
    for (const auto& f : files) scripts.push_back(load_scenario(f));

    result.reports.resize(scripts.size());
    std::vector<std::string> errors(scripts.size());
    std::atomic<std::size_t> next{0};
    const unsigned workers = std::max(1u, threads ? threads : std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(workers, scripts.size()); ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < scripts.size(); i = next++) {
                try {
                    const auto trace = simulate(scripts[i], config);
                    result.reports[i] = compute_metrics(trace, scripts[i], config.harness.t_stop_ms);
                } catch (const std::exception& e) {
                    errors[i] = e.what();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!errors[i].empty()) throw ScenarioError(files[i].string() + ": " + errors[i]);
    }

    for (std::size_t i = 0; i < scripts.size(); ++i) {
        result.scenarios.push_back(files[i].filename().string());
        if (!result.reports[i].expectations_met()) result.all_met = false;
    }
    result.aggregate = aggregate(result.reports, "all scenarios");
    return result;
}

}  // namespace duplex
