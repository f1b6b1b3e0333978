#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "duplex/audio.hpp"
#include "duplex/core.hpp"

namespace duplex {

struct TranscriptEntry {
    std::int64_t segment_id = 0;
    std::string text;
    std::int64_t submitted_cycle = 0;
    Millis completed_at = 0;
    std::int64_t visible_from_cycle = 1;

    bool operator==(const TranscriptEntry&) const = default;
};

enum class JobStatus { Pending, Done, Failed };

struct AsrJob {
    std::int64_t segment_id = 0;
    Millis enqueued_at = 0;
    Millis latency_ms = 0;
    JobStatus status = JobStatus::Pending;
    std::int64_t submitted_cycle = 0;
};

struct AsrResult {
    bool ok = true;
    std::string text;
    double confidence = 1.0;
    Millis latency_ms = 0;
    std::string error;
};

class AsrBackend {
public:
    virtual ~AsrBackend() = default;
    virtual AsrResult transcribe(const SpeechSegment& segment) = 0;
    /// True when transcribe() does real I/O and should not run on the
    /// session thread in wall-clock mode.
    virtual bool blocking() const noexcept { return false; }
};

/// Scripted stand-in for a speech recognizer: looks the segment up and
/// returns its text after a fixed latency. Unknown segments yield "".
class MockAsr final : public AsrBackend {
public:
    using Lookup = std::function<std::optional<std::string>(const SpeechSegment&)>;

    explicit MockAsr(Lookup lookup = {}, Millis latency_ms = 300, bool available = true);

    AsrResult transcribe(const SpeechSegment& segment) override;
    void set_available(bool available) noexcept { available_ = available; }

private:
    Lookup lookup_;
    Millis latency_ms_;
    bool available_;
};

/// HTTP adapter: POST {"sample_rate", "audio_b64"} to `url`, expects
/// {"text", "confidence"}. Timeouts and transport errors come back as a
/// failed result.
class RemoteAsr final : public AsrBackend {
public:
    RemoteAsr(std::string url, Millis timeout_ms = 2000);

    AsrResult transcribe(const SpeechSegment& segment) override;
    bool blocking() const noexcept override { return true; }

private:
    std::string url_;
    Millis timeout_ms_;
};

/// Transcript store that enforces next-cycle visibility. One writer (the ASR
/// completion path) and one reader (the decision path) may use it
/// concurrently; snapshots are point-in-time copies.
class TranscriptCache {
public:
    /// Registers a pending job. A transcript submitted during cycle c only
    /// becomes visible from cycle c + 1.
    AsrJob submit(std::int64_t segment_id, std::int64_t current_cycle, Millis now);

    /// Marks the job Done. completed_at = enqueued_at + latency_ms.
    void complete(std::int64_t segment_id, std::string text, Millis latency_ms);
    void fail(std::int64_t segment_id);

    /// Done entries with completed_at <= now and visible_from_cycle <= cycle,
    /// ordered by segment_id, limited to the most recent `max_segments`.
    std::vector<TranscriptEntry> snapshot(std::int64_t cycle, Millis now, std::size_t max_segments = 10) const;

    std::optional<AsrJob> job(std::int64_t segment_id) const;
    std::size_t size() const;

private:
    struct Slot {
        AsrJob job;
        TranscriptEntry entry;
    };

    mutable std::mutex mutex_;
    std::map<std::int64_t, Slot> slots_;
};

}  // namespace duplex
