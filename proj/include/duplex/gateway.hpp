#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "duplex/clock.hpp"
#include "duplex/config.hpp"
#include "duplex/orchestrator.hpp"

namespace duplex::gateway {

/// One message on the socket. Text payloads are JSON objects.
struct WireMessage {
    bool binary = false;
    std::string payload;
};

struct Hello {
    bool ok = false;
    Config config;
    std::string error_code;
    std::string error_message;
};

/// Validates the first client message. Accepts
/// {type:"hello", sample_rate:16000, sv_profile?:{reference_hz?, threshold?}, config?:{key: value}}.
Hello accept_hello(std::string_view text, const Config& base);

std::string error_message(std::string_view code, std::string_view detail, Millis t_ms);

struct SessionStats {
    std::int64_t units = 0;
    std::int64_t decisions = 0;
    std::int64_t cancellations = 0;
    std::int64_t frames_in = 0;
    std::int64_t frames_dropped = 0;
    std::int64_t agent_frames_dropped = 0;
};

/// Transport-independent half of a live session: paces inbound frames onto a
/// wall-clock engine and turns engine activity into wire messages. Not
/// thread-safe; the owner calls it from one strand.
class LiveSession final : public EngineObserver {
public:
    LiveSession(std::string session_id, Config config, Clock::TimeSource time_source = {});

    const std::string& id() const noexcept { return id_; }
    Millis now() const { return clock_.now(); }

    /// The ready message for this session.
    WireMessage ready() const;

    /// One binary payload from the client. Frames are stamped on arrival and
    /// queued until their end time has passed on the session clock.
    void on_audio(std::string_view bytes);
    /// One text payload after the handshake. Returns false when the client
    /// asked to end the session.
    bool on_text(std::string_view text);

    /// Ingests due frames and fires due engine work.
    void tick();

    bool idle_expired() const;
    /// Drains the engine and queues the bye message. Later calls do nothing.
    void close(std::string_view reason);
    bool closed() const noexcept { return closed_; }

    bool has_output() const noexcept { return !outbox_.empty(); }
    std::optional<WireMessage> next_output();
    std::size_t queued_agent_frames() const noexcept { return queued_agent_frames_; }

    SessionStats stats() const;
    const Engine& engine() const noexcept { return *engine_; }

    void on_event(const trace::Event& event) override;
    void on_agent_frame(const AudioFrame& frame, std::int64_t utterance_id) override;

private:
    void push_control(std::string json_text);

    std::string id_;
    Config config_;
    Clock clock_;
    std::unique_ptr<Engine> engine_;
    std::deque<AudioFrame> inbound_;
    Millis next_frame_t_ = 0;
    Millis last_inbound_ = 0;
    bool overrun_reported_ = false;
    std::deque<WireMessage> outbox_;
    std::size_t queued_agent_frames_ = 0;
    std::int64_t frames_in_ = 0;
    std::int64_t frames_dropped_ = 0;
    std::int64_t agent_frames_dropped_ = 0;
    bool closed_ = false;
};

struct ServerOptions {
    std::string address = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8765;
    unsigned threads = 2;
    Millis tick_ms = 10;
};

/// WebSocket and HTTP front end. Every socket gets its own LiveSession on
/// its own strand. GET /health reports the live session count; other GETs
/// are served from gateway.static_dir.
class Server {
public:
    Server(Config config, ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts the worker threads. Throws on bind failure.
    void start();
    int port() const noexcept { return port_; }
    std::size_t session_count() const;
    /// Sends bye "shutdown" to every session, then stops. Idempotent.
    void stop();

    struct Impl;

private:
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace duplex::gateway
