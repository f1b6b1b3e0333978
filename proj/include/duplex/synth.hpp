#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "duplex/audio.hpp"
#include "duplex/core.hpp"

namespace duplex {

class SynthesisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SynthesisHandle {
    std::int64_t utterance_id = 0;
    std::string text;
    Millis total_duration_ms = 0;
    Millis first_chunk_latency_ms = 0;
    Millis chunk_ms = kFrameMs;
    /// Rendered audio from a real synthesizer; empty for the mock, whose
    /// frames are generated on demand.
    std::shared_ptr<const std::vector<std::int16_t>> pcm;

    std::int64_t frame_count() const noexcept { return (total_duration_ms + chunk_ms - 1) / chunk_ms; }
};

class TtsBackend {
public:
    virtual ~TtsBackend() = default;
    /// Throws SynthesisError on backend failure.
    virtual SynthesisHandle synthesize(std::string_view text, std::int64_t utterance_id) = 0;
    virtual bool blocking() const noexcept { return false; }
};

/// Throws ContractViolation for empty text, otherwise forwards to the backend.
SynthesisHandle synthesize(TtsBackend& backend, std::string_view text, std::int64_t utterance_id);

/// UTF-8 code points.
std::size_t character_count(std::string_view text) noexcept;

/// Timing-only synthesizer: 220 Hz tone, duration linear in character count.
class MockTts final : public TtsBackend {
public:
    explicit MockTts(Millis ms_per_char = 50, Millis first_chunk_latency_ms = 150);

    SynthesisHandle synthesize(std::string_view text, std::int64_t utterance_id) override;

    void set_failing(bool failing) noexcept { failing_ = failing; }

private:
    Millis ms_per_char_;
    Millis first_chunk_latency_ms_;
    bool failing_ = false;
};

/// HTTP adapter: POST {"text"} and read a chunked PCM16LE 16 kHz body. The
/// first-chunk latency is measured.
class RemoteTts final : public TtsBackend {
public:
    RemoteTts(std::string url, Millis timeout_ms = 5000);

    SynthesisHandle synthesize(std::string_view text, std::int64_t utterance_id) override;
    bool blocking() const noexcept override { return true; }

private:
    std::string url_;
    Millis timeout_ms_;
};

/// Agent frame `index` of the utterance, stamped at `t_start`.
AudioFrame render_frame(const SynthesisHandle& handle, std::int64_t index, Millis t_start);

enum class PlaybackStatus { Playing, Completed, Cancelled };

std::string_view to_string(PlaybackStatus status) noexcept;

struct PlaybackSession {
    std::int64_t utterance_id = 0;
    Millis started_at = 0;
    Millis first_chunk_latency_ms = 0;
    Millis total_duration_ms = 0;
    Millis emitted_ms = 0;
    PlaybackStatus status = PlaybackStatus::Playing;
    std::optional<Millis> cancelled_at;

    Millis first_frame_at() const noexcept { return started_at + first_chunk_latency_ms; }
    Millis completes_at() const noexcept { return first_frame_at() + total_duration_ms; }
};

PlaybackSession start_playback(const SynthesisHandle& handle, Millis now);

/// min(max(0, now - started_at - first_chunk_latency), total); frozen once the
/// session is no longer playing.
Millis progress(const PlaybackSession& session, Millis now) noexcept;

/// Playing -> Cancelled at `now`; no-op for any other status.
PlaybackSession cancel(PlaybackSession session, Millis now) noexcept;

/// Playing -> Completed; no-op otherwise.
PlaybackSession complete(PlaybackSession session) noexcept;

/// At most one playing utterance per dialogue session.
class Player {
public:
    /// Throws ContractViolation while another utterance is playing.
    const PlaybackSession& start(const SynthesisHandle& handle, Millis now);
    /// Both return the finished session, or nullopt when nothing was playing.
    std::optional<PlaybackSession> cancel(Millis now);
    std::optional<PlaybackSession> complete();

    bool playing() const noexcept { return current_ && current_->status == PlaybackStatus::Playing; }
    const std::optional<PlaybackSession>& current() const noexcept { return current_; }
    const SynthesisHandle* handle() const noexcept { return handle_ ? &*handle_ : nullptr; }

    /// True while `utterance_id` is the playing utterance.
    bool may_emit(std::int64_t utterance_id) const noexcept;

private:
    std::optional<PlaybackSession> current_;
    std::optional<SynthesisHandle> handle_;
};

}  // namespace duplex
