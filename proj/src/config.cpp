#include "duplex/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace duplex {

namespace {

struct Entry {
    const char* key;
    const char* description;
    std::function<void(Config&, std::string_view)> set;
    std::function<std::string(const Config&)> get;
};

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
    const auto t = trim(text);
    T value{};
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty()) {
        throw ConfigError(std::string(key) + ": not a number: '" + t + "'");
    }
    return value;
}

double parse_double(std::string_view key, std::string_view text) {
    const auto t = trim(text);
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(std::string(key) + ": not a number: '" + t + "'");
    }
}

bool parse_bool(std::string_view key, std::string_view text) {
    const auto t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(std::string(key) + ": not a boolean: '" + t + "'");
}

std::string fmt_double(double v) {
    std::ostringstream out;
    out << v;
    return out.str();
}

std::optional<UtteranceLabel> parse_optional_label(std::string_view key, std::string_view text, DialogueState state) {
    const auto t = trim(text);
    if (t.empty() || t == "none") return std::nullopt;
    const auto label = parse_label(t);
    if (!label || !label_valid_for(state, *label)) {
        throw ConfigError(std::string(key) + ": label '" + t + "' is not valid in state " +
                          std::string(to_string(state)));
    }
    return label;
}

std::string label_or_none(const std::optional<UtteranceLabel>& label) {
    return label ? std::string(to_string(*label)) : "none";
}

std::string one_of(std::string_view key, std::string_view text, std::initializer_list<std::string_view> allowed) {
    const auto t = trim(text);
    for (const auto a : allowed) {
        if (t == a) return t;
    }
    throw ConfigError(std::string(key) + ": unsupported value '" + t + "'");
}

#define DUPLEX_MILLIS(KEY, FIELD, DESC)                                                              \
    Entry {                                                                                          \
        KEY, DESC, [](Config& c, std::string_view v) { c.FIELD = parse_number<Millis>(KEY, v); },    \
            [](const Config& c) { return std::to_string(c.FIELD); }                                  \
    }

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        Entry{"audio.vad.threshold_dbfs", "frame is voiced when its RMS level exceeds this (dBFS)",
              [](Config& c, std::string_view v) { c.audio.vad.threshold_dbfs = parse_double("audio.vad.threshold_dbfs", v); },
              [](const Config& c) { return fmt_double(c.audio.vad.threshold_dbfs); }},
        DUPLEX_MILLIS("audio.vad.min_speech_ms", audio.vad.min_speech_ms, "voiced run needed before SpeechStart"),
        DUPLEX_MILLIS("audio.vad.min_silence_ms", audio.vad.min_silence_ms, "unvoiced run needed before SpeechEnd"),
        DUPLEX_MILLIS("audio.pre_roll_ms", audio.pre_roll_ms, "audio kept before SpeechStart in each segment"),
        DUPLEX_MILLIS("audio.ring_ms", audio.ring_ms, "user audio history retained for segment assembly"),
        Entry{"audio.sv.enabled", "gate segments through speaker verification",
              [](Config& c, std::string_view v) { c.audio.sv_enabled = parse_bool("audio.sv.enabled", v); },
              [](const Config& c) { return std::string(c.audio.sv_enabled ? "true" : "false"); }},
        Entry{"audio.sv.threshold", "minimum cosine similarity to the speaker profile",
              [](Config& c, std::string_view v) { c.audio.sv_threshold = parse_double("audio.sv.threshold", v); },
              [](const Config& c) { return fmt_double(c.audio.sv_threshold); }},
        Entry{"audio.sv.reference_hz", "pitch of the target speaker for the built-in tone embedder",
              [](Config& c, std::string_view v) { c.audio.sv_reference_hz = parse_double("audio.sv.reference_hz", v); },
              [](const Config& c) { return fmt_double(c.audio.sv_reference_hz); }},
        Entry{"context.asr.backend", "mock | remote",
              [](Config& c, std::string_view v) { c.context.asr_backend = one_of("context.asr.backend", v, {"mock", "remote"}); },
              [](const Config& c) { return c.context.asr_backend; }},
        DUPLEX_MILLIS("context.asr.latency_ms", context.asr_latency_ms, "mock recognizer latency"),
        DUPLEX_MILLIS("context.asr.timeout_ms", context.asr_timeout_ms, "remote recognizer timeout"),
        Entry{"context.asr.url", "remote recognizer endpoint",
              [](Config& c, std::string_view v) { c.context.asr_url = trim(v); },
              [](const Config& c) { return c.context.asr_url; }},
        Entry{"context.max_segments", "most recent transcripts included in a decision",
              [](Config& c, std::string_view v) { c.context.max_segments = parse_number<std::size_t>("context.max_segments", v); },
              [](const Config& c) { return std::to_string(c.context.max_segments); }},
        Entry{"decision.backend", "scripted | remote",
              [](Config& c, std::string_view v) { c.decision.backend = one_of("decision.backend", v, {"scripted", "remote"}); },
              [](const Config& c) { return c.decision.backend; }},
        DUPLEX_MILLIS("decision.timeout_ms", decision.timeout_ms, "decision backend timeout; fallback is Continue"),
        DUPLEX_MILLIS("decision.window_ms", decision.window_ms, "trailing user audio sent with each decision"),
        Entry{"decision.url", "remote decision endpoint",
              [](Config& c, std::string_view v) { c.decision.url = trim(v); },
              [](const Config& c) { return c.decision.url; }},
        DUPLEX_MILLIS("decision.scripted.latency_ms", decision.scripted.latency_ms, "scripted oracle latency"),
        DUPLEX_MILLIS("decision.scripted.jitter_ms", decision.scripted.jitter_ms, "uniform +/- latency jitter (seeded)"),
        Entry{"decision.scripted.error_rate", "probability that a scripted decision fails",
              [](Config& c, std::string_view v) { c.decision.scripted.error_rate = parse_double("decision.scripted.error_rate", v); },
              [](const Config& c) { return fmt_double(c.decision.scripted.error_rate); }},
        Entry{"decision.scripted.seed", "seed for jitter and failure injection",
              [](Config& c, std::string_view v) { c.decision.scripted.seed = parse_number<std::uint64_t>("decision.scripted.seed", v); },
              [](const Config& c) { return std::to_string(c.decision.scripted.seed); }},
        Entry{"decision.scripted.mode", "perfect | adversarial (labels flipped)",
              [](Config& c, std::string_view v) {
                  c.decision.scripted.adversarial = one_of("decision.scripted.mode", v, {"perfect", "adversarial"}) == "adversarial";
              },
              [](const Config& c) { return std::string(c.decision.scripted.adversarial ? "adversarial" : "perfect"); }},
        Entry{"decision.scripted.default_listen", "label for unscripted Listen segments: complete | incomplete | none",
              [](Config& c, std::string_view v) {
                  c.decision.scripted.default_listen = parse_optional_label("decision.scripted.default_listen", v, DialogueState::Listen);
              },
              [](const Config& c) { return label_or_none(c.decision.scripted.default_listen); }},
        Entry{"decision.scripted.default_speak", "label for unscripted Speak segments: backchannel | interruption | none",
              [](Config& c, std::string_view v) {
                  c.decision.scripted.default_speak = parse_optional_label("decision.scripted.default_speak", v, DialogueState::Speak);
              },
              [](const Config& c) { return label_or_none(c.decision.scripted.default_speak); }},
        Entry{"decision.scripted.reply", "reply text when the script has none",
              [](Config& c, std::string_view v) { c.decision.scripted.default_reply = trim(v); },
              [](const Config& c) { return c.decision.scripted.default_reply; }},
        Entry{"tts.backend", "mock | remote",
              [](Config& c, std::string_view v) { c.tts.backend = one_of("tts.backend", v, {"mock", "remote"}); },
              [](const Config& c) { return c.tts.backend; }},
        DUPLEX_MILLIS("tts.ms_per_char", tts.ms_per_char, "mock synthesis duration per character"),
        DUPLEX_MILLIS("tts.first_chunk_latency_ms", tts.first_chunk_latency_ms, "mock delay before the first audio chunk"),
        DUPLEX_MILLIS("tts.timeout_ms", tts.timeout_ms, "remote synthesis timeout"),
        Entry{"tts.url", "remote synthesis endpoint",
              [](Config& c, std::string_view v) { c.tts.url = trim(v); },
              [](const Config& c) { return c.tts.url; }},
        DUPLEX_MILLIS("orchestrator.min_overlap_ms", orchestrator.min_overlap_ms,
                      "user speech during playback must last this long before a Speak decision"),
        DUPLEX_MILLIS("metrics.t_stop_ms", harness.t_stop_ms, "interruption credit window after the user starts"),
        DUPLEX_MILLIS("sim.tail_ms", harness.tail_ms, "silence appended after the last scripted event"),
        Entry{"gateway.port", "WebSocket listen port",
              [](Config& c, std::string_view v) { c.gateway.port = parse_number<int>("gateway.port", v); },
              [](const Config& c) { return std::to_string(c.gateway.port); }},
        DUPLEX_MILLIS("gateway.idle_timeout_ms", gateway.idle_timeout_ms, "close sessions idle this long"),
        DUPLEX_MILLIS("gateway.max_buffer_ms", gateway.max_buffer_ms, "inbound audio buffered before drop-oldest"),
        Entry{"gateway.audio_queue_frames", "outbound agent frames queued before dropping",
              [](Config& c, std::string_view v) {
                  c.gateway.audio_queue_frames = parse_number<std::size_t>("gateway.audio_queue_frames", v);
              },
              [](const Config& c) { return std::to_string(c.gateway.audio_queue_frames); }},
        Entry{"gateway.static_dir", "directory served at / (web client build)",
              [](Config& c, std::string_view v) { c.gateway.static_dir = trim(v); },
              [](const Config& c) { return c.gateway.static_dir; }},
    };
    return table;
}

#undef DUPLEX_MILLIS

const Entry& find(std::string_view key) {
    for (const auto& e : entries()) {
        if (key == e.key) return e;
    }
    throw ConfigError("unknown config key: " + std::string(key));
}

}  // namespace

void Config::set(std::string_view key, std::string_view value) {
    find(trim(key)).set(*this, value);
}

std::string Config::get(std::string_view key) const {
    return find(trim(key)).get(*this);
}

void Config::validate() const {
    const auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(what);
    };
    require(audio.vad.min_speech_ms > 0 && audio.vad.min_speech_ms % kFrameMs == 0,
            "audio.vad.min_speech_ms must be a positive multiple of 20");
    require(audio.vad.min_silence_ms > 0 && audio.vad.min_silence_ms % kFrameMs == 0,
            "audio.vad.min_silence_ms must be a positive multiple of 20");
    require(audio.pre_roll_ms >= 0, "audio.pre_roll_ms must be >= 0");
    require(audio.ring_ms >= audio.pre_roll_ms + kFrameMs, "audio.ring_ms must exceed audio.pre_roll_ms");
    require(audio.sv_threshold >= 0.0 && audio.sv_threshold <= 1.0, "audio.sv.threshold must lie in [0, 1]");
    require(audio.sv_reference_hz > 0.0, "audio.sv.reference_hz must be positive");
    require(context.asr_latency_ms >= 0, "context.asr.latency_ms must be >= 0");
    require(context.asr_timeout_ms > 0, "context.asr.timeout_ms must be positive");
    require(context.max_segments > 0, "context.max_segments must be positive");
    require(decision.timeout_ms > 0, "decision.timeout_ms must be positive");
    require(decision.window_ms >= 0, "decision.window_ms must be >= 0");
    require(decision.scripted.latency_ms >= 0, "decision.scripted.latency_ms must be >= 0");
    require(decision.scripted.jitter_ms >= 0, "decision.scripted.jitter_ms must be >= 0");
    require(decision.scripted.error_rate >= 0.0 && decision.scripted.error_rate <= 1.0,
            "decision.scripted.error_rate must lie in [0, 1]");
    require(decision.backend != "remote" || !decision.url.empty(), "decision.url is required for the remote backend");
    require(context.asr_backend != "remote" || !context.asr_url.empty(), "context.asr.url is required for remote asr");
    require(tts.backend != "remote" || !tts.url.empty(), "tts.url is required for remote tts");
    require(tts.ms_per_char > 0, "tts.ms_per_char must be positive");
    require(tts.first_chunk_latency_ms >= 0, "tts.first_chunk_latency_ms must be >= 0");
    require(orchestrator.min_overlap_ms > 0, "orchestrator.min_overlap_ms must be positive");
    require(harness.t_stop_ms > 0, "metrics.t_stop_ms must be positive");
    require(harness.tail_ms >= 0, "sim.tail_ms must be >= 0");
    require(gateway.port >= 0 && gateway.port < 65536, "gateway.port out of range");
    require(gateway.idle_timeout_ms > 0, "gateway.idle_timeout_ms must be positive");
    require(gateway.max_buffer_ms >= kFrameMs, "gateway.max_buffer_ms must hold at least one frame");
    require(gateway.audio_queue_frames > 0, "gateway.audio_queue_frames must be positive");
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = [] {
        std::vector<ConfigKey> out;
        for (const auto& e : entries()) out.push_back({e.key, e.description});
        return out;
    }();
    return keys;
}

Config parse_config(std::string_view text, Config base) {
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        try {
            base.set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    base.validate();
    return base;
}

Config load_config(const std::filesystem::path& path, Config base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), std::move(base));
}

std::string dump_config(const Config& config) {
    std::ostringstream out;
    for (const auto& e : entries()) {
        out << "# " << e.description << '\n' << e.key << " = " << e.get(config) << '\n';
    }
    return out.str();
}

std::map<std::string, std::string> config_values(const Config& config) {
    std::map<std::string, std::string> out;
    for (const auto& e : entries()) out[e.key] = e.get(config);
    return out;
}

}  // namespace duplex
