#include "duplex/context.hpp"

#include <chrono>

#include "json.hpp"

#include "duplex/remote.hpp"

namespace duplex {

MockAsr::MockAsr(Lookup lookup, Millis latency_ms, bool available)
    : lookup_(std::move(lookup)), latency_ms_(latency_ms), available_(available) {}

AsrResult MockAsr::transcribe(const SpeechSegment& segment) {
    AsrResult result;
    result.latency_ms = latency_ms_;
    if (!available_) {
        result.ok = false;
        result.error = "asr backend unavailable";
        return result;
    }
    if (lookup_) {
        if (auto text = lookup_(segment)) result.text = std::move(*text);
    }
    return result;
}

RemoteAsr::RemoteAsr(std::string url, Millis timeout_ms) : url_(std::move(url)), timeout_ms_(timeout_ms) {}

AsrResult RemoteAsr::transcribe(const SpeechSegment& segment) {
    const auto started = std::chrono::steady_clock::now();
    AsrResult result;
    nlohmann::json body;
    body["sample_rate"] = kSampleRate;
    body["audio_b64"] = remote::encode_audio(segment.frames);
    const auto reply = remote::post_json(url_, body.dump(), timeout_ms_);
    result.latency_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    if (!reply.ok) {
        result.ok = false;
        result.error = reply.error;
        return result;
    }
    try {
        const auto j = nlohmann::json::parse(reply.body);
        result.text = j.at("text").get<std::string>();
        result.confidence = j.value("confidence", 1.0);
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = std::string("malformed asr reply: ") + e.what();
    }
    return result;
}

AsrJob TranscriptCache::submit(std::int64_t segment_id, std::int64_t current_cycle, Millis now) {
    std::lock_guard lock(mutex_);
    Slot slot;
    slot.job = AsrJob{segment_id, now, 0, JobStatus::Pending, current_cycle};
    slot.entry.segment_id = segment_id;
    slot.entry.submitted_cycle = current_cycle;
    slot.entry.visible_from_cycle = current_cycle + 1;
    slots_[segment_id] = slot;
    return slot.job;
}

void TranscriptCache::complete(std::int64_t segment_id, std::string text, Millis latency_ms) {
    std::lock_guard lock(mutex_);
    auto it = slots_.find(segment_id);
    if (it == slots_.end()) throw ContractViolation("completing unknown asr job " + std::to_string(segment_id));
    auto& slot = it->second;
    slot.job.status = JobStatus::Done;
    slot.job.latency_ms = latency_ms;
    slot.entry.text = std::move(text);
    slot.entry.completed_at = slot.job.enqueued_at + latency_ms;
}

void TranscriptCache::fail(std::int64_t segment_id) {
    std::lock_guard lock(mutex_);
    auto it = slots_.find(segment_id);
    if (it == slots_.end()) throw ContractViolation("failing unknown asr job " + std::to_string(segment_id));
    it->second.job.status = JobStatus::Failed;
}

std::vector<TranscriptEntry> TranscriptCache::snapshot(std::int64_t cycle, Millis now, std::size_t max_segments) const {
    std::vector<TranscriptEntry> out;
    std::lock_guard lock(mutex_);
    for (const auto& [id, slot] : slots_) {
        if (slot.job.status != JobStatus::Done) continue;
        if (slot.entry.completed_at > now || slot.entry.visible_from_cycle > cycle) continue;
        out.push_back(slot.entry);
    }
    if (out.size() > max_segments) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(max_segments));
    return out;
}

std::optional<AsrJob> TranscriptCache::job(std::int64_t segment_id) const {
    std::lock_guard lock(mutex_);
    auto it = slots_.find(segment_id);
    if (it == slots_.end()) return std::nullopt;
    return it->second.job;
}

std::size_t TranscriptCache::size() const {
    std::lock_guard lock(mutex_);
    return slots_.size();
}

}  // namespace duplex
