#include "duplex/decision.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <regex>
#include <sstream>

#include "json.hpp"

#include "duplex/remote.hpp"

namespace duplex {

namespace {

constexpr std::string_view kListenInstructions =
    "You are the listening side of a full-duplex voice assistant. The user's audio for this turn is attached.\n"
    "Decide whether the user's utterance is semantically complete.\n"
    "Answer with a first line `DECISION: complete` or `DECISION: incomplete`.\n"
    "If it is complete, write the spoken reply to the user on the following lines.\n";

constexpr std::string_view kSpeakInstructions =
    "You are the speaking side of a full-duplex voice assistant and your reply is playing right now.\n"
    "The attached user audio overlaps your speech. Decide whether it is a backchannel (short feedback such as "
    "\"mm-hm\" that should not stop you) or a genuine interruption.\n"
    "Answer with a single line `DECISION: backchannel` or `DECISION: interruption`.\n";

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

}  // namespace

std::string render_prompt(DialogueState state, const std::vector<TranscriptEntry>& transcripts,
                          const std::vector<Turn>& history) {
    std::ostringstream out;
    out << "[task]\n" << (state == DialogueState::Listen ? kListenInstructions : kSpeakInstructions);
    out << "\n[transcripts]\n";
    if (transcripts.empty()) out << "(none)\n";
    for (const auto& t : transcripts) out << "- segment " << t.segment_id << ": " << t.text << '\n';
    out << "\n[history]\n";
    if (history.empty()) out << "(none)\n";
    for (const auto& turn : history) out << "- " << turn.role << ": " << turn.text << '\n';
    return out.str();
}

DecisionOutcome fallback_outcome(DialogueState state, Millis latency_ms) {
    DecisionOutcome out;
    out.action = Action::Continue;
    out.label = state == DialogueState::Listen ? UtteranceLabel::Incomplete : UtteranceLabel::Backchannel;
    out.backend_latency_ms = latency_ms;
    return out;
}

DecisionResult decide(DecisionBackend& backend, const DecisionRequest& request, Millis timeout_ms) {
    const auto degraded = [&](std::string why, Millis latency) {
        DecisionResult r;
        r.outcome = fallback_outcome(request.state, latency);
        r.fallback = true;
        r.degradation = std::move(why);
        return r;
    };

    BackendReply reply;
    try {
        reply = backend.query(request, render_prompt(request.state, request.transcripts, request.history));
    } catch (const std::exception& e) {
        return degraded(std::string("backend threw: ") + e.what(), 0);
    }

    const Millis latency = std::max<Millis>(0, reply.latency_ms);
    if (latency > timeout_ms) {
        return degraded("backend timed out after " + std::to_string(timeout_ms) + " ms", timeout_ms);
    }
    if (!reply.error.empty()) return degraded("backend error: " + reply.error, latency);
    if (!reply.label) return degraded("backend reply carried no label", latency);
    if (!label_valid_for(request.state, *reply.label)) {
        return degraded("label " + std::string(to_string(*reply.label)) + " is invalid in state " +
                            std::string(to_string(request.state)),
                        latency);
    }

    DecisionResult result;
    result.outcome.label = *reply.label;
    result.outcome.action = label_to_action(request.state, *reply.label);
    result.outcome.backend_latency_ms = latency;
    if (request.state == DialogueState::Listen && result.outcome.action == Action::Switch) {
        auto text = trim(reply.response_text);
        if (text.empty()) return degraded("switch to speak without a reply", latency);
        result.outcome.response_text = std::move(text);
    }
    return result;
}

std::optional<ParsedReply> parse_backend_reply(std::string_view raw) {
    static const std::regex header(R"(^\s*decision\s*:\s*([a-z]+)\s*$)", std::regex::icase);
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        const auto nl = raw.find('\n', pos);
        const auto end = nl == std::string_view::npos ? raw.size() : nl;
        const std::string line(raw.substr(pos, end - pos));
        std::smatch m;
        if (std::regex_match(line, m, header)) {
            const auto label = parse_label(m[1].str());
            if (!label) return std::nullopt;
            const auto rest = nl == std::string_view::npos ? std::string_view{} : raw.substr(nl + 1);
            return ParsedReply{*label, trim(rest)};
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return std::nullopt;
}

std::string_view to_string(TruthLabel label) noexcept {
    switch (label) {
        case TruthLabel::Complete: return "Complete";
        case TruthLabel::Incomplete: return "Incomplete";
        case TruthLabel::Backchannel: return "Backchannel";
        case TruthLabel::Interruption: return "Interruption";
        case TruthLabel::NonTarget: return "NonTarget";
    }
    return "?";
}

std::optional<TruthLabel> parse_truth_label(std::string_view text) noexcept {
    std::string t(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "complete") return TruthLabel::Complete;
    if (t == "incomplete") return TruthLabel::Incomplete;
    if (t == "backchannel") return TruthLabel::Backchannel;
    if (t == "interruption") return TruthLabel::Interruption;
    if (t == "nontarget" || t == "non_target" || t == "non-target") return TruthLabel::NonTarget;
    return std::nullopt;
}

UtteranceLabel project_label(TruthLabel truth, DialogueState state) noexcept {
    const bool switches = truth == TruthLabel::Complete || truth == TruthLabel::Interruption;
    if (state == DialogueState::Listen) return switches ? UtteranceLabel::Complete : UtteranceLabel::Incomplete;
    return switches ? UtteranceLabel::Interruption : UtteranceLabel::Backchannel;
}

UtteranceLabel flip_label(UtteranceLabel label) noexcept {
    switch (label) {
        case UtteranceLabel::Complete: return UtteranceLabel::Incomplete;
        case UtteranceLabel::Incomplete: return UtteranceLabel::Complete;
        case UtteranceLabel::Backchannel: return UtteranceLabel::Interruption;
        case UtteranceLabel::Interruption: return UtteranceLabel::Backchannel;
    }
    return label;
}

ScriptedOracle::ScriptedOracle(ScriptedOracleConfig config, Lookup lookup)
    : config_(std::move(config)), lookup_(std::move(lookup)), rng_(config_.seed) {}

BackendReply ScriptedOracle::query(const DecisionRequest& request, const std::string&) {
    BackendReply reply;
    // Both draws happen on every call so the random stream does not depend on
    // which branch was taken.
    Millis jitter = 0;
    if (config_.jitter_ms > 0) {
        jitter = std::uniform_int_distribution<Millis>(-config_.jitter_ms, config_.jitter_ms)(rng_);
    }
    const bool inject_error = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < config_.error_rate;
    reply.latency_ms = std::max<Millis>(0, config_.latency_ms + jitter);
    if (inject_error) {
        reply.error = "injected failure";
        return reply;
    }

    std::optional<UtteranceLabel> label;
    std::string text;
    if (auto truth = lookup_ ? lookup_(request) : std::nullopt) {
        label = project_label(truth->label, request.state);
        text = truth->reply;
    } else {
        label = request.state == DialogueState::Listen ? config_.default_listen : config_.default_speak;
    }
    if (!label) {
        reply.error = "no ground truth for segment " + std::to_string(request.segment.segment_id);
        return reply;
    }
    if (config_.adversarial) label = flip_label(*label);
    reply.label = label;
    if (request.state == DialogueState::Listen && *label == UtteranceLabel::Complete) {
        reply.response_text = text.empty() ? config_.default_reply : text;
    }
    return reply;
}

RemoteDecisionBackend::RemoteDecisionBackend(std::string url, Millis timeout_ms)
    : url_(std::move(url)), timeout_ms_(timeout_ms) {}

BackendReply RemoteDecisionBackend::query(const DecisionRequest& request, const std::string& prompt) {
    const auto started = std::chrono::steady_clock::now();
    nlohmann::json body;
    body["state"] = std::string(to_string(request.state));
    body["prompt"] = prompt;
    body["audio_b64"] = remote::encode_audio(request.audio);
    body["sample_rate"] = kSampleRate;
    const auto http = remote::post_json(url_, body.dump(), timeout_ms_);

    BackendReply reply;
    reply.latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    if (!http.ok) {
        reply.error = http.error;
        return reply;
    }
    try {
        const auto text = nlohmann::json::parse(http.body).at("text").get<std::string>();
        if (auto parsed = parse_backend_reply(text)) {
            reply.label = parsed->label;
            reply.response_text = std::move(parsed->response_text);
        } else {
            reply.error = "unparsable decision reply";
        }
    } catch (const std::exception& e) {
        reply.error = std::string("malformed decision response: ") + e.what();
    }
    return reply;
}

}  // namespace duplex
