#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "duplex/audio.hpp"
#include "oracles.hpp"

using namespace duplex;

namespace {

AudioFrame constant_frame(std::int16_t value, Millis t) {
    AudioFrame f;
    f.samples.fill(value);
    f.t_start = t;
    return f;
}

AudioFrame tone_frame(double hz, double amplitude, Millis t) {
    AudioFrame f;
    f.t_start = t;
    for (int k = 0; k < kFrameSamples; ++k) {
        const double n = static_cast<double>(t) * 16.0 + k;
        f.samples[k] = static_cast<std::int16_t>(std::lround(amplitude * std::sin(2 * std::numbers::pi * hz * n / 16000.0)));
    }
    return f;
}

// Amplitude whose constant-level frame sits at `db` dBFS.
std::int16_t level(double db) {
    return static_cast<std::int16_t>(std::lround(32768.0 * std::pow(10.0, db / 20.0)));
}

std::vector<VadEvent> run_vad(EnergyVad& vad, const std::vector<AudioFrame>& frames) {
    std::vector<VadEvent> out;
    for (const auto& f : frames) {
        if (auto e = vad.update(f)) out.push_back(*e);
    }
    return out;
}

class FixedEmbedder final : public SpeakerEmbedder {
public:
    explicit FixedEmbedder(std::vector<float> v) : v_(std::move(v)) {}
    std::vector<float> embed(const SpeechSegment&) override { return v_; }

private:
    std::vector<float> v_;
};

class BrokenEmbedder final : public SpeakerEmbedder {
public:
    std::vector<float> embed(const SpeechSegment&) override { throw std::runtime_error("model not loaded"); }
};

SpeechSegment tone_segment(double hz) {
    SpeechSegment s;
    for (Millis t = 0; t < 400; t += 20) s.frames.push_back(tone_frame(hz, 20000, t));
    s.t_end = 400;
    return s;
}

}  // namespace

TEST_CASE("rms_dbfs reference levels") {
    CHECK(rms_dbfs(constant_frame(0, 0)) == kSilenceFloorDbfs);
    CHECK(rms_dbfs(constant_frame(static_cast<std::int16_t>(32768.0 * std::pow(10.0, -35.0 / 20.0)), 0)) ==
          doctest::Approx(-35.0).epsilon(0.0003));
    AudioFrame square;
    for (int k = 0; k < kFrameSamples; ++k) square.samples[k] = (k / 8) % 2 ? 32767 : -32767;
    CHECK(std::abs(rms_dbfs(square)) < 0.01);
}

TEST_CASE("frame payloads must be exactly 640 bytes") {
    std::vector<std::uint8_t> ok(640, 0), bad(641, 0);
    ok[0] = 0x34;
    ok[1] = 0x12;
    const auto f = frame_from_bytes(ok, 40);
    CHECK(f.samples[0] == 0x1234);
    CHECK(f.t_start == 40);
    CHECK(frame_to_bytes(f) == ok);
    CHECK_THROWS_AS(frame_from_bytes(bad, 0), ContractViolation);
    std::vector<std::int16_t> short_frame(319);
    CHECK_THROWS_AS(make_frame(short_frame, 0), ContractViolation);
}

TEST_CASE("frames_from_samples pads the tail frame") {
    std::vector<std::int16_t> samples(700, 5);
    const auto frames = frames_from_samples(samples, 100);
    REQUIRE(frames.size() == 3);
    CHECK(frames[2].t_start == 140);
    CHECK(frames[2].samples[59] == 5);
    CHECK(frames[2].samples[60] == 0);
}

TEST_CASE("VAD stays quiet on silence") {
    EnergyVad vad;
    for (Millis t = 0; t < 10000; t += 20) CHECK_FALSE(vad.update(constant_frame(0, t)));
    CHECK_FALSE(vad.in_speech());
}

TEST_CASE("one second of tone gives SpeechStart 1000 and SpeechEnd 2000") {
    std::vector<AudioFrame> frames;
    std::vector<double> levels;
    for (Millis t = 0; t < 4000; t += 20) {
        frames.push_back(t >= 1000 && t < 2000 ? tone_frame(440, 32767, t) : constant_frame(0, t));
        levels.push_back(rms_dbfs(frames.back()));
    }
    EnergyVad vad;
    const auto events = run_vad(vad, frames);
    REQUIRE(events.size() == 2);
    CHECK(events[0] == VadEvent{VadEventKind::SpeechStart, 1000});
    CHECK(events[1] == VadEvent{VadEventKind::SpeechEnd, 2000});
    const auto expected = oracle::vad_events(levels, 0, -35.0, 100, 500);
    REQUIRE(expected.size() == 2);
    CHECK(expected[0] == oracle::VadMark{true, 1000});
    CHECK(expected[1] == oracle::VadMark{false, 2000});
}

TEST_CASE("a 20 ms gap inside speech adds no events") {
    std::vector<AudioFrame> frames;
    for (Millis t = 0; t < 4000; t += 20) {
        const bool on = t >= 1000 && t < 2000 && t != 1500;
        frames.push_back(on ? tone_frame(440, 32767, t) : constant_frame(0, t));
    }
    EnergyVad vad;
    const auto events = run_vad(vad, frames);
    REQUIRE(events.size() == 2);
    CHECK(events[1].t == 2000);
}

TEST_CASE("VAD matches the window oracle and alternates on random level sequences") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        VadConfig cfg;
        cfg.min_speech_ms = std::uniform_int_distribution<Millis>(1, 12)(rng) * 20;
        cfg.min_silence_ms = std::uniform_int_distribution<Millis>(1, 30)(rng) * 20;
        std::vector<AudioFrame> frames;
        std::vector<double> levels;
        bool on = false;
        for (Millis t = 0; t < 20000; t += 20) {
            if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.08) on = !on;
            const double db = on ? std::uniform_real_distribution<double>(-34, -1)(rng)
                                 : std::uniform_real_distribution<double>(-80, -36)(rng);
            frames.push_back(constant_frame(level(db), t));
            levels.push_back(rms_dbfs(frames.back()));
        }
        EnergyVad vad(cfg);
        const auto events = run_vad(vad, frames);
        const auto expected = oracle::vad_events(levels, 0, cfg.threshold_dbfs, cfg.min_speech_ms, cfg.min_silence_ms);
        REQUIRE(events.size() == expected.size());
        for (std::size_t i = 0; i < events.size(); ++i) {
            CHECK((events[i].kind == VadEventKind::SpeechStart) == (i % 2 == 0));
            CHECK((events[i].kind == VadEventKind::SpeechStart) == expected[i].start);
            CHECK(events[i].t == expected[i].t);
            if (i % 2 == 1) CHECK(events[i].t > events[i - 1].t);
        }
        EnergyVad again(cfg);
        CHECK(run_vad(again, frames) == events);
    }
}

TEST_CASE("VAD refuses agent frames") {
    EnergyVad vad;
    auto f = constant_frame(0, 0);
    f.source = Source::Agent;
    CHECK_THROWS_AS(vad.update(f), ContractViolation);
}

TEST_CASE("assemble_segment cuts pre-roll plus speech") {
    FrameRing ring(60000);
    for (Millis t = 0; t < 3000; t += 20) ring.push(constant_frame(1, t));
    const auto a = assemble_segment(ring, {VadEventKind::SpeechStart, 1000}, 2000, 200, 0);
    CHECK(a.segment.t_start == 800);
    CHECK(a.segment.t_end == 2000);
    CHECK(a.segment.frames.size() == 60);
    CHECK(a.segment.duration_ms() == 20 * static_cast<Millis>(a.segment.frames.size()));
    CHECK_FALSE(a.warning);

    const auto early = assemble_segment(ring, {VadEventKind::SpeechStart, 100}, 400, 200, 1);
    CHECK(early.segment.t_start == 0);
    CHECK(early.segment.frames.size() == 20);
    CHECK_FALSE(early.warning);
}

TEST_CASE("assemble_segment warns when the ring lost the pre-roll") {
    FrameRing ring(1000);
    for (Millis t = 0; t < 3000; t += 20) ring.push(constant_frame(1, t));
    const auto a = assemble_segment(ring, {VadEventKind::SpeechStart, 2000}, 2500, 200, 0);
    CHECK(a.segment.t_start == 2000);
    CHECK(a.warning);
}

TEST_CASE("sv_gate without a profile accepts and leaves no score") {
    const auto r = sv_gate(tone_segment(440), std::nullopt, nullptr);
    CHECK(r.segment.accepted);
    CHECK_FALSE(r.segment.sv_score);
}

TEST_CASE("sv_gate compares the embedding with the profile") {
    std::vector<float> e0(16, 0.0f), e1(16, 0.0f);
    e0[0] = 1.0f;
    e1[1] = 1.0f;
    const SpeakerProfile profile(e0, 0.5);

    FixedEmbedder same(e0);
    auto r = sv_gate(tone_segment(440), profile, &same);
    CHECK(r.segment.accepted);
    CHECK(*r.segment.sv_score == doctest::Approx(1.0));

    FixedEmbedder other(e1);
    r = sv_gate(tone_segment(440), profile, &other);
    CHECK_FALSE(r.segment.accepted);
    CHECK(*r.segment.sv_score == doctest::Approx(0.0));

    BrokenEmbedder broken;
    r = sv_gate(tone_segment(440), profile, &broken);
    CHECK(r.segment.accepted);
    CHECK_FALSE(r.segment.sv_score);
    CHECK(r.warning);
}

TEST_CASE("raising the threshold never turns a rejection into an acceptance") {
    ToneEmbedder embedder;
    for (double hz : {180.0, 220.0, 300.0, 400.0, 440.0, 520.0, 880.0}) {
        bool rejected_before = false;
        for (double th = 0.0; th <= 1.0; th += 0.05) {
            const auto r = sv_gate(tone_segment(hz), embedder.profile(th), &embedder);
            if (rejected_before) CHECK_FALSE(r.segment.accepted);
            rejected_before = rejected_before || !r.segment.accepted;
        }
    }
}

TEST_CASE("tone embedder separates the target pitch from the other voice") {
    ToneEmbedder embedder(440.0);
    const auto profile = embedder.profile(0.5);
    CHECK(sv_gate(tone_segment(440), profile, &embedder).segment.accepted);
    CHECK_FALSE(sv_gate(tone_segment(220), profile, &embedder).segment.accepted);
    CHECK(ToneEmbedder::dominant_frequency(tone_segment(440)) == doctest::Approx(440).epsilon(0.02));
}

TEST_CASE("profiles must be unit vectors with a threshold in [0, 1]") {
    CHECK_THROWS_AS(SpeakerProfile(std::vector<float>{2.0f, 0.0f}, 0.5), ContractViolation);
    CHECK_THROWS_AS(SpeakerProfile(std::vector<float>{1.0f, 0.0f}, 1.5), ContractViolation);
}

TEST_CASE("wav round trip and format checks") {
    const auto dir = std::filesystem::temp_directory_path() / "duplex_audio_test";
    std::filesystem::create_directories(dir);
    std::vector<std::int16_t> samples(1000);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = static_cast<std::int16_t>(i * 7 - 3000);
    write_wav(dir / "a.wav", samples);
    CHECK(read_wav(dir / "a.wav") == samples);

    // Same file with the sample rate patched to 44100.
    std::fstream f(dir / "a.wav", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(24);
    const std::uint32_t rate = 44100;
    f.write(reinterpret_cast<const char*>(&rate), 4);
    f.close();
    CHECK_THROWS_AS(read_wav(dir / "a.wav"), std::runtime_error);

    std::ofstream raw(dir / "a.pcm", std::ios::binary);
    raw.write(reinterpret_cast<const char*>(samples.data()), static_cast<std::streamsize>(samples.size() * 2));
    raw.close();
    CHECK(read_pcm16(dir / "a.pcm") == samples);
    std::filesystem::remove_all(dir);
}
