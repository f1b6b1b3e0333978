#include "duplex/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace duplex {

AudioFrame make_frame(std::span<const std::int16_t> samples, Millis t_start, Source source) {
    if (samples.size() != kFrameSamples) {
        throw ContractViolation("audio frame must hold " + std::to_string(kFrameSamples) +
                                " samples, got " + std::to_string(samples.size()));
    }
    AudioFrame frame;
    std::copy(samples.begin(), samples.end(), frame.samples.begin());
    frame.t_start = t_start;
    frame.source = source;
    return frame;
}

AudioFrame frame_from_bytes(std::span<const std::uint8_t> bytes, Millis t_start, Source source) {
    if (bytes.size() != kFrameBytes) {
        throw ContractViolation("audio payload must be " + std::to_string(kFrameBytes) + " bytes, got " +
                                std::to_string(bytes.size()));
    }
    AudioFrame frame;
    for (std::size_t i = 0; i < kFrameSamples; ++i) {
        const auto lo = static_cast<std::uint16_t>(bytes[2 * i]);
        const auto hi = static_cast<std::uint16_t>(bytes[2 * i + 1]);
        frame.samples[i] = static_cast<std::int16_t>(lo | (hi << 8));
    }
    frame.t_start = t_start;
    frame.source = source;
    return frame;
}

std::vector<std::uint8_t> frame_to_bytes(const AudioFrame& frame) {
    std::vector<std::uint8_t> out(kFrameBytes);
    for (std::size_t i = 0; i < kFrameSamples; ++i) {
        const auto v = static_cast<std::uint16_t>(frame.samples[i]);
        out[2 * i] = static_cast<std::uint8_t>(v & 0xff);
        out[2 * i + 1] = static_cast<std::uint8_t>(v >> 8);
    }
    return out;
}

std::vector<AudioFrame> frames_from_samples(std::span<const std::int16_t> samples, Millis t0, Source source) {
    std::vector<AudioFrame> frames;
    frames.reserve((samples.size() + kFrameSamples - 1) / kFrameSamples);
    for (std::size_t offset = 0; offset < samples.size(); offset += kFrameSamples) {
        AudioFrame frame;
        const auto n = std::min<std::size_t>(kFrameSamples, samples.size() - offset);
        std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(offset), n, frame.samples.begin());
        frame.t_start = t0 + static_cast<Millis>(frames.size()) * kFrameMs;
        frame.source = source;
        frames.push_back(frame);
    }
    return frames;
}

double rms_dbfs(std::span<const std::int16_t> samples) noexcept {
    if (samples.empty()) return kSilenceFloorDbfs;
    double sum = 0.0;
    for (const auto s : samples) sum += static_cast<double>(s) * static_cast<double>(s);
    const double rms = std::sqrt(sum / static_cast<double>(samples.size()));
    if (rms <= 0.0) return kSilenceFloorDbfs;
    return std::max(kSilenceFloorDbfs, 20.0 * std::log10(rms / 32768.0));
}

EnergyVad::EnergyVad(VadConfig config) : config_(config) {
    if (config_.min_speech_ms <= 0 || config_.min_silence_ms <= 0) {
        throw ContractViolation("VAD hysteresis windows must be positive");
    }
}

std::optional<Millis> EnergyVad::speech_started_at() const noexcept {
    if (!in_speech_) return std::nullopt;
    return speech_start_;
}

void EnergyVad::reset() {
    in_speech_ = false;
    run_ms_ = 0;
    run_start_ = 0;
    speech_start_ = 0;
}

std::optional<VadEvent> EnergyVad::update(const AudioFrame& frame) {
    if (frame.source != Source::User) {
        throw ContractViolation("VAD only consumes user frames");
    }
    const bool voiced = rms_dbfs(frame) > config_.threshold_dbfs;
    // run_ms_ counts consecutive frames that disagree with the current state.
    if (voiced != in_speech_) {
        if (run_ms_ == 0) run_start_ = frame.t_start;
        run_ms_ += kFrameMs;
    } else {
        run_ms_ = 0;
    }

    if (!in_speech_ && run_ms_ >= config_.min_speech_ms) {
        in_speech_ = true;
        run_ms_ = 0;
        speech_start_ = run_start_;
        return VadEvent{VadEventKind::SpeechStart, run_start_};
    }
    if (in_speech_ && run_ms_ >= config_.min_silence_ms) {
        in_speech_ = false;
        run_ms_ = 0;
        return VadEvent{VadEventKind::SpeechEnd, run_start_};
    }
    return std::nullopt;
}

FrameRing::FrameRing(Millis capacity_ms)
    : capacity_(static_cast<std::size_t>(std::max<Millis>(kFrameMs, capacity_ms) / kFrameMs)) {}

void FrameRing::push(const AudioFrame& frame) {
    if (!frames_.empty() && frame.t_start <= frames_.back().t_start) {
        throw ContractViolation("frames must be pushed in increasing time order");
    }
    if (!first_seen_) first_seen_ = frame.t_start;
    frames_.push_back(frame);
    while (frames_.size() > capacity_) frames_.pop_front();
}

std::optional<Millis> FrameRing::oldest() const noexcept {
    if (frames_.empty()) return std::nullopt;
    return frames_.front().t_start;
}

std::optional<Millis> FrameRing::newest() const noexcept {
    if (frames_.empty()) return std::nullopt;
    return frames_.back().t_start;
}

std::vector<AudioFrame> FrameRing::range(Millis from, Millis to) const {
    std::vector<AudioFrame> out;
    auto it = std::lower_bound(frames_.begin(), frames_.end(), from,
                               [](const AudioFrame& f, Millis t) { return f.t_start < t; });
    for (; it != frames_.end() && it->t_start < to; ++it) out.push_back(*it);
    return out;
}

AssembledSegment assemble_segment(const FrameRing& ring, const VadEvent& start, Millis end_t,
                                  Millis pre_roll_ms, std::int64_t segment_id, bool partial) {
    if (start.kind != VadEventKind::SpeechStart) {
        throw ContractViolation("segment assembly needs a SpeechStart event");
    }
    if (end_t <= start.t) {
        throw ContractViolation("segment end must follow its start");
    }
    AssembledSegment out;
    Millis from = start.t - pre_roll_ms;
    if (const auto first = ring.first_seen()) from = std::max(from, *first);
    from = std::max<Millis>(from, 0);
    if (const auto oldest = ring.oldest(); oldest && *oldest > from) {
        out.warning = "ring underrun: wanted frames from t=" + std::to_string(from) + ", oldest retained is t=" +
                      std::to_string(*oldest);
        from = *oldest;
    }

    auto& seg = out.segment;
    seg.segment_id = segment_id;
    seg.frames = ring.range(from, end_t);
    seg.t_start = seg.frames.empty() ? from : seg.frames.front().t_start;
    seg.t_end = seg.t_start + static_cast<Millis>(seg.frames.size()) * kFrameMs;
    seg.speech_start = start.t;
    seg.speech_end = end_t;
    seg.partial = partial;
    return out;
}

namespace {

double norm(std::span<const float> v) {
    double sum = 0.0;
    for (const auto x : v) sum += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sum);
}

}  // namespace

SpeakerProfile::SpeakerProfile(std::vector<float> embedding, double threshold)
    : embedding_(std::move(embedding)), threshold_(threshold) {
    if (embedding_.empty() || std::abs(norm(embedding_) - 1.0) > 1e-3) {
        throw ContractViolation("speaker profile embedding must have unit norm");
    }
    if (threshold_ < 0.0 || threshold_ > 1.0) {
        throw ContractViolation("speaker profile threshold must lie in [0, 1]");
    }
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw ContractViolation("embedding dimensions differ");
    }
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return dot / (na * nb);
}

ToneEmbedder::ToneEmbedder(double reference_hz, std::size_t dims) : reference_hz_(reference_hz), dims_(dims) {
    if (dims_ < 2) throw ContractViolation("embedding needs at least two dimensions");
}

double ToneEmbedder::dominant_frequency(const SpeechSegment& segment, double threshold_dbfs) {
    std::size_t crossings = 0;
    std::size_t samples = 0;
    for (const auto& frame : segment.frames) {
        if (rms_dbfs(frame) <= threshold_dbfs) continue;
        for (std::size_t i = 1; i < frame.samples.size(); ++i) {
            if ((frame.samples[i - 1] < 0) != (frame.samples[i] < 0)) ++crossings;
        }
        samples += frame.samples.size();
    }
    if (samples == 0) return 0.0;
    return static_cast<double>(crossings) * kSampleRate / (2.0 * static_cast<double>(samples));
}

std::vector<float> ToneEmbedder::embed_frequency(double hz) const {
    double angle = std::numbers::pi / 2.0;
    if (hz > 0.0) {
        angle = std::numbers::pi / 2.0 * std::min(1.0, std::abs(std::log2(hz / reference_hz_)));
    }
    std::vector<float> v(dims_, 0.0f);
    v[0] = static_cast<float>(std::cos(angle));
    v[1] = static_cast<float>(std::sin(angle));
    return v;
}

std::vector<float> ToneEmbedder::embed(const SpeechSegment& segment) {
    return embed_frequency(dominant_frequency(segment));
}

SpeakerProfile ToneEmbedder::profile(double threshold) const {
    return SpeakerProfile(embed_frequency(reference_hz_), threshold);
}

GateResult sv_gate(SpeechSegment segment, const std::optional<SpeakerProfile>& profile, SpeakerEmbedder* embedder) {
    GateResult out;
    if (!profile) {
        segment.sv_score.reset();
        segment.accepted = true;
        out.segment = std::move(segment);
        return out;
    }
    try {
        if (embedder == nullptr) throw std::runtime_error("no speaker embedder configured");
        const auto embedding = embedder->embed(segment);
        const double score = cosine_similarity(embedding, profile->embedding());
        segment.sv_score = std::clamp(score, 0.0, 1.0);
        segment.accepted = score >= profile->threshold();
    } catch (const std::exception& e) {
        segment.sv_score.reset();
        segment.accepted = true;
        out.warning = std::string("speaker verification failed, accepting segment: ") + e.what();
    }
    out.segment = std::move(segment);
    return out;
}

namespace {

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t le32(const char* p) {
    const auto* u = reinterpret_cast<const unsigned char*>(p);
    return u[0] | (u[1] << 8) | (u[2] << 16) | (static_cast<std::uint32_t>(u[3]) << 24);
}

std::uint16_t le16(const char* p) {
    const auto* u = reinterpret_cast<const unsigned char*>(p);
    return static_cast<std::uint16_t>(u[0] | (u[1] << 8));
}

std::vector<std::int16_t> decode_pcm(const char* data, std::size_t bytes) {
    std::vector<std::int16_t> out(bytes / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int16_t>(le16(data + 2 * i));
    return out;
}

}  // namespace

std::vector<std::int16_t> read_pcm16(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() % 2 != 0) throw std::runtime_error(path.string() + ": odd byte count for PCM16");
    return decode_pcm(bytes.data(), bytes.size());
}

std::vector<std::int16_t> read_wav(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw std::runtime_error(path.string() + ": not a RIFF/WAVE file");
    }
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::string id(bytes.data() + pos, 4);
        const std::size_t size = le32(bytes.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size() && id != "data") {
            throw std::runtime_error(path.string() + ": truncated chunk " + id);
        }
        if (id == "fmt ") {
            if (size < 16) throw std::runtime_error(path.string() + ": short fmt chunk");
            const auto format = le16(bytes.data() + body);
            const auto channels = le16(bytes.data() + body + 2);
            const auto rate = le32(bytes.data() + body + 4);
            const auto bits = le16(bytes.data() + body + 14);
            if (format != 1 || channels != 1 || rate != kSampleRate || bits != 16) {
                throw std::runtime_error(path.string() + ": only PCM16 mono 16 kHz WAV is supported");
            }
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt) throw std::runtime_error(path.string() + ": data chunk before fmt");
            const std::size_t n = std::min(size, bytes.size() - body) & ~std::size_t{1};
            return decode_pcm(bytes.data() + body, n);
        }
        pos = body + size + (size & 1);
    }
    throw std::runtime_error(path.string() + ": no data chunk");
}

void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    auto put32 = [&](std::uint32_t v) {
        const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                           static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
        out.write(b, 4);
    };
    auto put16 = [&](std::uint16_t v) {
        const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
        out.write(b, 2);
    };
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    out.write("RIFF", 4);
    put32(36 + data_bytes);
    out.write("WAVEfmt ", 8);
    put32(16);
    put16(1);
    put16(1);
    put32(kSampleRate);
    put32(kSampleRate * 2);
    put16(2);
    put16(16);
    out.write("data", 4);
    put32(data_bytes);
    for (const auto s : samples) put16(static_cast<std::uint16_t>(s));
}

}  // namespace duplex
