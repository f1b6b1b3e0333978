#include "doctest.h"
#include "duplex/gateway.hpp"
#include "duplex/harness.hpp"
#include "json.hpp"
#include "scenario_util.hpp"

using namespace duplex;
using namespace duplex::gateway;
using json = nlohmann::json;
using testutil::ev;

namespace {

Config live_config() {
    Config cfg;
    cfg.set("decision.scripted.default_listen", "complete");
    cfg.set("decision.scripted.default_speak", "interruption");
    return cfg;
}

std::string bytes_of(const AudioFrame& f) {
    const auto b = frame_to_bytes(f);
    return std::string(b.begin(), b.end());
}

struct Harness {
    Millis now = 0;
    LiveSession session;
    std::vector<WireMessage> out;

    explicit Harness(Config cfg) : session("s1", std::move(cfg), [this] { return now; }) {}

    void drain() {
        while (auto m = session.next_output()) out.push_back(std::move(*m));
    }
    // Streams frames in real time, one per 20 ms, then idles for `tail_ms`.
    void stream(const std::vector<AudioFrame>& frames, Millis tail_ms, bool read = true) {
        for (const auto& f : frames) {
            now = f.t_end();
            session.on_audio(bytes_of(f));
            if (read) drain();
        }
        const Millis until = now + tail_ms;
        while (now < until) {
            now += 10;
            session.tick();
            if (read) drain();
        }
    }
    std::vector<json> controls() const {
        std::vector<json> v;
        for (const auto& m : out) {
            if (!m.binary) v.push_back(json::parse(m.payload));
        }
        return v;
    }
    std::vector<std::string> sequence() const {
        std::vector<std::string> v;
        for (const auto& m : out) {
            if (m.binary) {
                v.push_back("audio");
                continue;
            }
            const auto j = json::parse(m.payload);
            const auto type = j.at("type").get<std::string>();
            v.push_back(type == "transition" ? j.at("kind").get<std::string>() : type);
        }
        return v;
    }
};

std::size_t index_of(const std::vector<std::string>& seq, const std::string& item, std::size_t from = 0) {
    for (std::size_t i = from; i < seq.size(); ++i) {
        if (seq[i] == item) return i;
    }
    return seq.size();
}

}  // namespace

TEST_CASE("hello validation") {
    const Config base;
    CHECK(accept_hello(R"({"type":"hello","sample_rate":16000})", base).ok);
    const auto rate = accept_hello(R"({"type":"hello","sample_rate":44100})", base);
    CHECK_FALSE(rate.ok);
    CHECK(rate.error_code == "unsupported_rate");
    CHECK(accept_hello("not json", base).error_code == "protocol");
    CHECK(accept_hello(R"({"type":"ping"})", base).error_code == "protocol");
    CHECK(accept_hello(R"({"type":"hello"})", base).error_code == "protocol");

    const auto tuned = accept_hello(R"({"type":"hello","sample_rate":16000,"config":{"decision.scripted.latency_ms":120}})", base);
    REQUIRE(tuned.ok);
    CHECK(tuned.config.decision.scripted.latency_ms == 120);
    CHECK(accept_hello(R"({"type":"hello","sample_rate":16000,"config":{"no.such.key":1}})", base).error_code ==
          "bad_config");
    CHECK(accept_hello(R"({"type":"hello","sample_rate":16000,"config":{"audio.vad.min_silence_ms":-5}})", base)
              .error_code == "bad_config");

    const auto sv = accept_hello(R"({"type":"hello","sample_rate":16000,"sv_profile":{"threshold":0.7}})", base);
    REQUIRE(sv.ok);
    CHECK(sv.config.audio.sv_enabled);
    CHECK(sv.config.audio.sv_threshold == 0.7);
}

TEST_CASE("frame size is enforced") {
    Harness h(live_config());
    h.drain();
    h.out.clear();
    h.now = 20;
    h.session.on_audio(std::string(640, '\0'));
    h.drain();
    CHECK(h.controls().empty());
    h.session.on_audio(std::string(641, '\0'));
    h.drain();
    const auto c = h.controls();
    REQUIRE(c.size() == 1);
    CHECK(c[0]["type"] == "error");
    CHECK(c[0]["code"] == "bad_frame");
    CHECK(h.session.stats().frames_in == 1);
}

TEST_CASE("ready carries the session id and config") {
    Harness h(live_config());
    const auto j = json::parse(h.session.ready().payload);
    CHECK(j["type"] == "ready");
    CHECK(j["session_id"] == "s1");
    CHECK(j["config"]["decision.scripted.default_listen"] == "complete");
}

TEST_CASE("reply then barge-in arrive in protocol order") {
    Harness h(live_config());
    const auto s = testutil::script({ev(200, 1000, TruthLabel::Complete), ev(2400, 400, TruthLabel::Interruption)});
    h.stream(synthesize_user_audio(s, 3000), 200);
    const auto seq = h.sequence();

    const auto l2s = index_of(seq, "l2s");
    REQUIRE(l2s < seq.size());
    const auto start = index_of(seq, "tts_start", l2s);
    const auto audio = index_of(seq, "audio");
    CHECK(start < audio);
    CHECK(audio < seq.size());
    CHECK(index_of(seq, "audio") > l2s);

    const auto cancel = index_of(seq, "tts_cancel");
    const auto s2l = index_of(seq, "s2l");
    REQUIRE(cancel < seq.size());
    CHECK(cancel < s2l);
    CHECK(s2l < seq.size());

    // Wire transitions mirror the engine trace.
    std::vector<std::string> wire;
    for (const auto& j : h.controls()) {
        if (j["type"] == "transition") wire.push_back(j["kind"]);
    }
    CHECK(wire == testutil::transition_codes(h.session.engine().trace()));

    // Every control message is typed and stamped, and the clock never runs backwards.
    Millis prev = 0;
    for (const auto& j : h.controls()) {
        CHECK(j.contains("type"));
        REQUIRE(j.contains("t_ms"));
        CHECK(j["t_ms"].get<Millis>() >= prev);
        prev = j["t_ms"];
    }

    // No agent audio after the cancel notice for that utterance.
    std::size_t audio_after = 0;
    const auto next_start = index_of(seq, "tts_start", cancel);
    for (std::size_t i = cancel; i < std::min(next_start, seq.size()); ++i) audio_after += seq[i] == "audio";
    CHECK(audio_after == 0);
}

TEST_CASE("a burst overruns the buffer once") {
    Config cfg = live_config();
    Harness h(cfg);
    h.drain();
    h.out.clear();
    h.now = 20;
    AudioFrame silent;
    for (int i = 0; i < 300; ++i) h.session.on_audio(bytes_of(silent));
    h.drain();
    std::size_t overruns = 0;
    for (const auto& j : h.controls()) {
        if (j["type"] == "overrun") {
            ++overruns;
            CHECK(j["buffered_ms"] == cfg.gateway.max_buffer_ms);
        }
    }
    CHECK(overruns == 1);
        // The first frame is already due on arrival and goes straight to the engine.
    CHECK(h.session.stats().frames_dropped == 300 - 1 - cfg.gateway.max_buffer_ms / 20);
}

TEST_CASE("a slow reader loses the oldest agent frames") {
    Config cfg = live_config();
    cfg.gateway.audio_queue_frames = 5;
    Harness h(cfg);
    const auto s = testutil::script({ev(200, 1000, TruthLabel::Complete)});
    h.stream(synthesize_user_audio(s, 4000), 200, false);
    CHECK(h.session.queued_agent_frames() == 5);
    CHECK(h.session.stats().agent_frames_dropped > 0);
    h.drain();
    CHECK(h.session.queued_agent_frames() == 0);
}

TEST_CASE("text messages, idle expiry and bye") {
    Config cfg = live_config();
    cfg.gateway.idle_timeout_ms = 1000;
    Harness h(cfg);
    h.drain();
    h.out.clear();
    CHECK(h.session.on_text(R"({"type":"ping"})"));
    CHECK(h.session.on_text(R"({"type":"dance"})"));
    CHECK(h.session.on_text("{{"));
    CHECK_FALSE(h.session.on_text(R"({"type":"bye"})"));
    h.drain();
    const auto c = h.controls();
    REQUIRE(c.size() == 3);
    CHECK(c[0]["type"] == "pong");
    CHECK(c[1]["code"] == "bad_message");
    CHECK(c[2]["code"] == "bad_message");

    CHECK_FALSE(h.session.idle_expired());
    h.now = 1000;
    CHECK(h.session.idle_expired());

    h.session.close("idle");
    h.session.close("client");
    h.drain();
    const auto all = h.controls();
    std::size_t byes = 0;
    for (const auto& j : all) byes += j["type"] == "bye";
    CHECK(byes == 1);
    CHECK(all.back()["reason"] == "idle");
    CHECK(all.back()["stats"].contains("units"));
    CHECK(h.session.closed());
    h.session.on_audio(std::string(640, '\0'));
    CHECK_FALSE(h.session.has_output());
}
