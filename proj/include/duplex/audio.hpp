#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "duplex/core.hpp"

namespace duplex {

inline constexpr int kSampleRate = 16000;
inline constexpr int kFrameSamples = 320;
inline constexpr Millis kFrameMs = 20;
inline constexpr std::size_t kFrameBytes = kFrameSamples * sizeof(std::int16_t);
inline constexpr double kSilenceFloorDbfs = -120.0;

enum class Source { User, Agent };

/// 20 ms of 16 kHz mono PCM16.
struct AudioFrame {
    std::array<std::int16_t, kFrameSamples> samples{};
    Millis t_start = 0;
    Source source = Source::User;

    Millis t_end() const noexcept { return t_start + kFrameMs; }
    bool operator==(const AudioFrame&) const = default;
};

/// Throws ContractViolation unless exactly 320 samples are given.
AudioFrame make_frame(std::span<const std::int16_t> samples, Millis t_start, Source source = Source::User);

/// Decodes one 640-byte little-endian payload. Throws ContractViolation on
/// any other size.
AudioFrame frame_from_bytes(std::span<const std::uint8_t> bytes, Millis t_start,
                            Source source = Source::User);
std::vector<std::uint8_t> frame_to_bytes(const AudioFrame& frame);

/// Splits a sample stream into consecutive frames starting at t0; the last
/// frame is zero-padded.
std::vector<AudioFrame> frames_from_samples(std::span<const std::int16_t> samples, Millis t0,
                                            Source source = Source::User);

/// 20*log10(rms/32768) over the frame, floored at -120 dBFS.
double rms_dbfs(std::span<const std::int16_t> samples) noexcept;
inline double rms_dbfs(const AudioFrame& frame) noexcept { return rms_dbfs(frame.samples); }

enum class VadEventKind { SpeechStart, SpeechEnd };

struct VadEvent {
    VadEventKind kind = VadEventKind::SpeechStart;
    Millis t = 0;

    bool operator==(const VadEvent&) const = default;
};

struct VadConfig {
    double threshold_dbfs = -35.0;
    Millis min_speech_ms = 100;
    Millis min_silence_ms = 500;
};

/// Frame-level speech detector. Implementations emit strictly alternating
/// SpeechStart/SpeechEnd events; an external VAD adapter plugs in here.
class VoiceActivityDetector {
public:
    virtual ~VoiceActivityDetector() = default;
    virtual std::optional<VadEvent> update(const AudioFrame& frame) = 0;
    virtual bool in_speech() const noexcept = 0;
    /// Timestamp of the SpeechStart that opened the current run.
    virtual std::optional<Millis> speech_started_at() const noexcept = 0;
    virtual void reset() = 0;
};

/// Reference energy detector with hysteresis.
///
/// A frame is voiced when its level exceeds the threshold. SpeechStart fires
/// once min_speech_ms of consecutive voiced frames have been seen and is
/// stamped at the first of them; SpeechEnd fires after min_silence_ms of
/// consecutive unvoiced frames and is stamped at the first unvoiced frame.
class EnergyVad final : public VoiceActivityDetector {
public:
    explicit EnergyVad(VadConfig config = {});

    std::optional<VadEvent> update(const AudioFrame& frame) override;
    bool in_speech() const noexcept override { return in_speech_; }
    std::optional<Millis> speech_started_at() const noexcept override;
    void reset() override;

    const VadConfig& config() const noexcept { return config_; }

private:
    VadConfig config_;
    bool in_speech_ = false;
    Millis run_ms_ = 0;
    Millis run_start_ = 0;
    Millis speech_start_ = 0;
};

struct SpeechSegment {
    std::int64_t segment_id = 0;
    std::vector<AudioFrame> frames;
    Millis t_start = 0;
    Millis t_end = 0;
    /// VAD boundaries of the speech run this segment was cut from.
    Millis speech_start = 0;
    Millis speech_end = 0;
    std::optional<double> sv_score;
    bool accepted = true;
    /// True for a partial segment cut while the speaker is still talking.
    bool partial = false;

    Millis duration_ms() const noexcept { return t_end - t_start; }
};

/// Fixed-capacity history of user frames.
class FrameRing {
public:
    explicit FrameRing(Millis capacity_ms);

    /// Frames must arrive in increasing time order.
    void push(const AudioFrame& frame);

    std::optional<Millis> oldest() const noexcept;
    std::optional<Millis> newest() const noexcept;
    /// Timestamp of the first frame ever pushed.
    std::optional<Millis> first_seen() const noexcept { return first_seen_; }
    std::size_t size() const noexcept { return frames_.size(); }

    /// Frames whose t_start lies in [from, to).
    std::vector<AudioFrame> range(Millis from, Millis to) const;

private:
    std::size_t capacity_;
    std::deque<AudioFrame> frames_;
    std::optional<Millis> first_seen_;
};

struct AssembledSegment {
    SpeechSegment segment;
    /// Set when the ring no longer held the full pre-roll.
    std::optional<std::string> warning;
};

/// Cuts [start.t - pre_roll_ms, end_t) out of the ring, clamped to the first
/// frame the session saw. `end_t` is the SpeechEnd time for a final segment or
/// the current time for a partial one. On underrun the segment starts at the
/// oldest retained frame and a warning is returned.
AssembledSegment assemble_segment(const FrameRing& ring, const VadEvent& start, Millis end_t,
                                  Millis pre_roll_ms, std::int64_t segment_id, bool partial = false);

/// Speaker profile; the embedding must have unit Euclidean norm.
class SpeakerProfile {
public:
    SpeakerProfile(std::vector<float> embedding, double threshold);

    const std::vector<float>& embedding() const noexcept { return embedding_; }
    double threshold() const noexcept { return threshold_; }

private:
    std::vector<float> embedding_;
    double threshold_;
};

class SpeakerEmbedder {
public:
    virtual ~SpeakerEmbedder() = default;
    /// Unit-norm embedding; may throw on failure.
    virtual std::vector<float> embed(const SpeechSegment& segment) = 0;
};

/// Deterministic stand-in for a neural speaker model: estimates the dominant
/// frequency from zero crossings over voiced frames and rotates a unit vector
/// by pi/2 per octave of distance from the reference pitch.
class ToneEmbedder final : public SpeakerEmbedder {
public:
    explicit ToneEmbedder(double reference_hz = 440.0, std::size_t dims = 16);

    std::vector<float> embed(const SpeechSegment& segment) override;
    std::vector<float> embed_frequency(double hz) const;
    SpeakerProfile profile(double threshold) const;

    static double dominant_frequency(const SpeechSegment& segment, double threshold_dbfs = -35.0);

private:
    double reference_hz_;
    std::size_t dims_;
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct GateResult {
    SpeechSegment segment;
    std::optional<std::string> warning;
};

/// Speaker-verification gate. Without a profile every segment is accepted.
/// Embedder failures fail open: accepted, no score, warning set.
GateResult sv_gate(SpeechSegment segment, const std::optional<SpeakerProfile>& profile,
                   SpeakerEmbedder* embedder);

/// Reads headerless PCM16LE mono 16 kHz audio.
std::vector<std::int16_t> read_pcm16(const std::filesystem::path& path);

/// Reads a RIFF/WAVE file; only PCM16 mono 16 kHz is accepted. Throws
/// std::runtime_error for anything else.
std::vector<std::int16_t> read_wav(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> samples);

}  // namespace duplex
