#include "duplex/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "json.hpp"

#include "duplex/remote.hpp"

namespace duplex {

std::size_t character_count(std::string_view text) noexcept {
    return static_cast<std::size_t>(
        std::count_if(text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

SynthesisHandle synthesize(TtsBackend& backend, std::string_view text, std::int64_t utterance_id) {
    if (text.empty()) throw ContractViolation("cannot synthesize empty text");
    return backend.synthesize(text, utterance_id);
}

MockTts::MockTts(Millis ms_per_char, Millis first_chunk_latency_ms)
    : ms_per_char_(ms_per_char), first_chunk_latency_ms_(first_chunk_latency_ms) {
    if (ms_per_char_ <= 0) throw ContractViolation("tts.ms_per_char must be positive");
    if (first_chunk_latency_ms_ < 0) throw ContractViolation("tts.first_chunk_latency_ms must be >= 0");
}

SynthesisHandle MockTts::synthesize(std::string_view text, std::int64_t utterance_id) {
    if (text.empty()) throw ContractViolation("cannot synthesize empty text");
    if (failing_) throw SynthesisError("mock tts configured to fail");
    SynthesisHandle handle;
    handle.utterance_id = utterance_id;
    handle.text = std::string(text);
    handle.total_duration_ms = ms_per_char_ * static_cast<Millis>(character_count(text));
    handle.first_chunk_latency_ms = first_chunk_latency_ms_;
    return handle;
}

RemoteTts::RemoteTts(std::string url, Millis timeout_ms) : url_(std::move(url)), timeout_ms_(timeout_ms) {}

SynthesisHandle RemoteTts::synthesize(std::string_view text, std::int64_t utterance_id) {
    const auto started = std::chrono::steady_clock::now();
    std::optional<Millis> first_chunk;
    std::string bytes;
    nlohmann::json body;
    body["text"] = std::string(text);
    const auto reply = remote::post_json_streaming(url_, body.dump(), timeout_ms_, [&](std::string_view chunk) {
        if (!first_chunk) {
            first_chunk = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                                 started)
                              .count();
        }
        bytes.append(chunk);
    });
    if (!reply.ok) throw SynthesisError("remote tts failed: " + reply.error);
    if (bytes.size() < 2) throw SynthesisError("remote tts returned no audio");

    auto pcm = std::make_shared<std::vector<std::int16_t>>(bytes.size() / 2);
    for (std::size_t i = 0; i < pcm->size(); ++i) {
        const auto lo = static_cast<unsigned char>(bytes[2 * i]);
        const auto hi = static_cast<unsigned char>(bytes[2 * i + 1]);
        (*pcm)[i] = static_cast<std::int16_t>(lo | (hi << 8));
    }
    SynthesisHandle handle;
    handle.utterance_id = utterance_id;
    handle.text = std::string(text);
    handle.total_duration_ms = static_cast<Millis>(pcm->size()) * 1000 / kSampleRate;
    handle.first_chunk_latency_ms = first_chunk.value_or(0);
    handle.pcm = std::move(pcm);
    return handle;
}

AudioFrame render_frame(const SynthesisHandle& handle, std::int64_t index, Millis t_start) {
    AudioFrame frame;
    frame.t_start = t_start;
    frame.source = Source::Agent;
    const auto total_samples = handle.pcm ? static_cast<std::int64_t>(handle.pcm->size())
                                          : handle.total_duration_ms * kSampleRate / 1000;
    const std::int64_t base = index * kFrameSamples;
    for (std::int64_t i = 0; i < kFrameSamples && base + i < total_samples; ++i) {
        const auto n = base + i;
        if (handle.pcm) {
            frame.samples[static_cast<std::size_t>(i)] = (*handle.pcm)[static_cast<std::size_t>(n)];
        } else {
            const double phase = 2.0 * std::numbers::pi * 220.0 * static_cast<double>(n) / kSampleRate;
            frame.samples[static_cast<std::size_t>(i)] = static_cast<std::int16_t>(std::lround(8000.0 * std::sin(phase)));
        }
    }
    return frame;
}

std::string_view to_string(PlaybackStatus status) noexcept {
    switch (status) {
        case PlaybackStatus::Playing: return "playing";
        case PlaybackStatus::Completed: return "completed";
        case PlaybackStatus::Cancelled: return "cancelled";
    }
    return "?";
}

PlaybackSession start_playback(const SynthesisHandle& handle, Millis now) {
    PlaybackSession s;
    s.utterance_id = handle.utterance_id;
    s.started_at = now;
    s.first_chunk_latency_ms = handle.first_chunk_latency_ms;
    s.total_duration_ms = handle.total_duration_ms;
    return s;
}

Millis progress(const PlaybackSession& session, Millis now) noexcept {
    if (session.status != PlaybackStatus::Playing) return session.emitted_ms;
    return std::min(std::max<Millis>(0, now - session.first_frame_at()), session.total_duration_ms);
}

PlaybackSession cancel(PlaybackSession session, Millis now) noexcept {
    if (session.status != PlaybackStatus::Playing) return session;
    session.emitted_ms = progress(session, now);
    session.status = PlaybackStatus::Cancelled;
    session.cancelled_at = now;
    return session;
}

PlaybackSession complete(PlaybackSession session) noexcept {
    if (session.status != PlaybackStatus::Playing) return session;
    session.emitted_ms = session.total_duration_ms;
    session.status = PlaybackStatus::Completed;
    return session;
}

const PlaybackSession& Player::start(const SynthesisHandle& handle, Millis now) {
    if (playing()) {
        throw ContractViolation("utterance " + std::to_string(current_->utterance_id) +
                                " is still playing; cannot start " + std::to_string(handle.utterance_id));
    }
    current_ = start_playback(handle, now);
    handle_ = handle;
    return *current_;
}

std::optional<PlaybackSession> Player::cancel(Millis now) {
    if (!playing()) return std::nullopt;
    current_ = duplex::cancel(*current_, now);
    return current_;
}

std::optional<PlaybackSession> Player::complete() {
    if (!playing()) return std::nullopt;
    current_ = duplex::complete(*current_);
    return current_;
}

bool Player::may_emit(std::int64_t utterance_id) const noexcept {
    if (!current_ || current_->utterance_id != utterance_id) return false;
    return current_->status == PlaybackStatus::Playing;
}

}  // namespace duplex
