#include "duplex/gateway.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "json.hpp"

namespace duplex::gateway {

using json = nlohmann::ordered_json;

namespace {

json message(std::string_view type, Millis t_ms) {
    json j;
    j["type"] = type;
    j["t_ms"] = t_ms;
    return j;
}

Clock::TimeSource session_time() {
    const auto origin = std::chrono::steady_clock::now();
    return [origin] {
        return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - origin).count();
    };
}

}  // namespace

std::string error_message(std::string_view code, std::string_view detail, Millis t_ms) {
    auto j = message("error", t_ms);
    j["code"] = code;
    j["message"] = detail;
    return j.dump();
}

Hello accept_hello(std::string_view text, const Config& base) {
    Hello hello;
    const auto fail = [&](std::string code, std::string detail) {
        hello.ok = false;
        hello.error_code = std::move(code);
        hello.error_message = std::move(detail);
        return hello;
    };
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception&) {
        return fail("protocol", "first message must be a JSON hello");
    }
    if (!j.is_object() || j.value("type", std::string()) != "hello") {
        return fail("protocol", "first message must be a hello");
    }
    if (!j.contains("sample_rate") || !j.at("sample_rate").is_number_integer()) {
        return fail("protocol", "hello needs an integer sample_rate");
    }
    if (j.at("sample_rate").get<std::int64_t>() != kSampleRate) {
        return fail("unsupported_rate", "only 16000 Hz audio is accepted");
    }
    hello.config = base;
    try {
        if (j.contains("config")) {
            for (const auto& [key, value] : j.at("config").items()) {
                hello.config.set(key, value.is_string() ? value.get<std::string>() : value.dump());
            }
        }
        if (j.contains("sv_profile") && !j.at("sv_profile").is_null()) {
            const auto& sv = j.at("sv_profile");
            hello.config.audio.sv_enabled = true;
            if (sv.contains("reference_hz")) hello.config.audio.sv_reference_hz = sv.at("reference_hz").get<double>();
            if (sv.contains("threshold")) hello.config.audio.sv_threshold = sv.at("threshold").get<double>();
        }
        hello.config.validate();
    } catch (const std::exception& e) {
        return fail("bad_config", e.what());
    }
    hello.ok = true;
    return hello;
}

// ---------------------------------------------------------------------------
// LiveSession

LiveSession::LiveSession(std::string session_id, Config config, Clock::TimeSource time_source)
    : id_(std::move(session_id)),
      config_(std::move(config)),
      clock_(ClockMode::Wall, time_source ? std::move(time_source) : session_time()) {
    engine_ = std::make_unique<Engine>(config_, make_backends(config_), clock_, id_, this);
    last_inbound_ = clock_.now();
    auto state = message("state", clock_.now());
    state["state"] = to_string(engine_->state());
    state["unit"] = engine_->dialogue().unit_index();
    push_control(state.dump());
}

WireMessage LiveSession::ready() const {
    auto j = message("ready", clock_.now());
    j["session_id"] = id_;
    j["config"] = config_values(config_);
    return WireMessage{false, j.dump()};
}

void LiveSession::push_control(std::string json_text) {
    outbox_.push_back(WireMessage{false, std::move(json_text)});
}

void LiveSession::on_audio(std::string_view bytes) {
    if (closed_) return;
    const Millis now = clock_.now();
    last_inbound_ = now;
    if (bytes.size() != kFrameBytes) {
        push_control(error_message("bad_frame", "audio frames must be " + std::to_string(kFrameBytes) + " bytes, got " +
                                                    std::to_string(bytes.size()),
                                   now));
        return;
    }
    const Millis arrived = std::max<Millis>(0, (now - kFrameMs) / kFrameMs * kFrameMs);
    const Millis t = std::max(next_frame_t_, arrived);
    next_frame_t_ = t + kFrameMs;
    const auto* data = reinterpret_cast<const std::uint8_t*>(bytes.data());
    inbound_.push_back(frame_from_bytes(std::span<const std::uint8_t>(data, bytes.size()), t));
    ++frames_in_;

    const auto capacity = static_cast<std::size_t>(std::max<Millis>(1, config_.gateway.max_buffer_ms / kFrameMs));
    std::int64_t dropped = 0;
    while (inbound_.size() > capacity) {
        inbound_.pop_front();
        ++dropped;
    }
    frames_dropped_ += dropped;
    if (dropped > 0 && !overrun_reported_) {
        overrun_reported_ = true;
        auto j = message("overrun", now);
        j["buffered_ms"] = static_cast<Millis>(inbound_.size()) * kFrameMs;
        j["dropped_frames"] = frames_dropped_;
        push_control(j.dump());
    }
    tick();
}

bool LiveSession::on_text(std::string_view text) {
    const Millis now = clock_.now();
    last_inbound_ = now;
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception&) {
        push_control(error_message("bad_message", "text messages must be JSON objects", now));
        return true;
    }
    const auto type = j.is_object() ? j.value("type", std::string()) : std::string();
    if (type == "bye") return false;
    if (type == "ping") {
        push_control(message("pong", now).dump());
    } else {
        push_control(error_message("bad_message", "unknown message type '" + type + "'", now));
    }
    return true;
}

void LiveSession::tick() {
    if (closed_) return;
    clock_.pump();
    while (!inbound_.empty() && inbound_.front().t_end() <= clock_.now()) {
        engine_->ingest(inbound_.front());
        inbound_.pop_front();
        clock_.pump();
    }
    const auto capacity = static_cast<std::size_t>(std::max<Millis>(1, config_.gateway.max_buffer_ms / kFrameMs));
    if (inbound_.size() < capacity) overrun_reported_ = false;
}

bool LiveSession::idle_expired() const {
    return clock_.now() - last_inbound_ >= config_.gateway.idle_timeout_ms;
}

void LiveSession::close(std::string_view reason) {
    if (closed_) return;
    engine_->finish();
    clock_.pump();
    closed_ = true;
    inbound_.clear();
    const auto s = stats();
    auto j = message("bye", clock_.now());
    j["reason"] = reason;
    j["stats"] = {{"units", s.units},
                  {"decisions", s.decisions},
                  {"cancellations", s.cancellations},
                  {"frames_in", s.frames_in},
                  {"frames_dropped", s.frames_dropped},
                  {"agent_frames_dropped", s.agent_frames_dropped}};
    push_control(j.dump());
}

std::optional<WireMessage> LiveSession::next_output() {
    if (outbox_.empty()) return std::nullopt;
    auto m = std::move(outbox_.front());
    outbox_.pop_front();
    if (m.binary) --queued_agent_frames_;
    return m;
}

SessionStats LiveSession::stats() const {
    const auto e = engine_->stats();
    return SessionStats{e.units, e.decisions, e.cancellations, frames_in_, frames_dropped_, agent_frames_dropped_};
}

void LiveSession::on_event(const trace::Event& event) {
    if (closed_) return;
    const Millis t = event.t;
    std::visit(
        [&](const auto& r) {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, trace::Transition>) {
                auto j = message("transition", t);
                j["kind"] = to_string(r.kind);
                j["unit"] = engine_->dialogue().unit_index();
                j["cause"] = trace::to_string(r.cause);
                push_control(j.dump());
                auto s = message("state", t);
                s["state"] = to_string(engine_->state());
                s["unit"] = engine_->dialogue().unit_index();
                push_control(s.dump());
            } else if constexpr (std::is_same_v<T, trace::Vad>) {
                auto j = message("vad", t);
                j["event"] = r.event.kind == VadEventKind::SpeechStart ? "speech_start" : "speech_end";
                j["event_t"] = r.event.t;
                push_control(j.dump());
            } else if constexpr (std::is_same_v<T, trace::AsrComplete>) {
                if (!r.ok) return;
                auto j = message("transcript", t);
                j["segment_id"] = r.segment_id;
                j["text"] = r.text;
                push_control(j.dump());
            } else if constexpr (std::is_same_v<T, trace::DecisionOutcome>) {
                auto j = message("decision", t);
                j["cycle"] = r.cycle;
                j["state"] = to_string(r.state);
                j["label"] = to_string(r.label);
                j["action"] = to_string(r.action);
                j["fallback"] = r.fallback;
                push_control(j.dump());
            } else if constexpr (std::is_same_v<T, trace::PlaybackStart>) {
                auto j = message("tts_start", t);
                j["utterance_id"] = r.utterance_id;
                j["text"] = r.text;
                j["duration_ms"] = r.total_duration_ms;
                push_control(j.dump());
            } else if constexpr (std::is_same_v<T, trace::PlaybackCancel>) {
                auto j = message("tts_cancel", t);
                j["utterance_id"] = r.utterance_id;
                push_control(j.dump());
            } else if constexpr (std::is_same_v<T, trace::PlaybackComplete>) {
                auto j = message("tts_end", t);
                j["utterance_id"] = r.utterance_id;
                push_control(j.dump());
            } else if constexpr (std::is_same_v<T, trace::Degradation>) {
                auto j = message("degradation", t);
                j["source"] = r.source;
                j["detail"] = r.detail;
                push_control(j.dump());
            }
        },
        event.record);
}

void LiveSession::on_agent_frame(const AudioFrame& frame, std::int64_t) {
    if (closed_) return;
    if (queued_agent_frames_ >= std::max<std::size_t>(1, config_.gateway.audio_queue_frames)) {
        const auto oldest = std::find_if(outbox_.begin(), outbox_.end(), [](const WireMessage& m) { return m.binary; });
        outbox_.erase(oldest);
        --queued_agent_frames_;
        ++agent_frames_dropped_;
    }
    const auto bytes = frame_to_bytes(frame);
    outbox_.push_back(WireMessage{true, std::string(bytes.begin(), bytes.end())});
    ++queued_agent_frames_;
}

// ---------------------------------------------------------------------------
// Server

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

class WsSession;

struct Server::Impl {
    Config config;
    ServerOptions options;
    net::io_context ioc;
    tcp::acceptor acceptor{ioc};
    std::vector<std::thread> threads;
    mutable std::mutex mutex;
    std::map<std::string, std::weak_ptr<WsSession>> sessions;
    std::atomic<std::uint64_t> next_id{0};
    std::atomic<bool> stopping{false};
    std::mutex stop_mutex;
    bool stopped = false;

    void accept();
    void add(const std::string& id, std::weak_ptr<WsSession> session) {
        std::lock_guard lock(mutex);
        sessions[id] = std::move(session);
    }
    void remove(const std::string& id) {
        std::lock_guard lock(mutex);
        sessions.erase(id);
    }
    std::size_t count() const {
        std::lock_guard lock(mutex);
        return sessions.size();
    }
};

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, Server::Impl* server)
        : ws_(std::move(socket)), timer_(ws_.get_executor()), server_(server) {}

    void run(http::request<http::string_body> request) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.read_message_max(1 << 20);
        ws_.async_accept(request, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

    void shutdown() {
        net::post(ws_.get_executor(), [self = shared_from_this()] { self->begin_close("shutdown"); });
    }

private:
    void on_accept(beast::error_code ec) {
        if (ec) return finish();
        arm_timer();
        read();
    }

    void read() {
        ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            if (core_) core_->close("client");
            return finish();
        }
        const auto payload = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        const bool binary = ws_.got_binary();
        if (closing_) return read();

        if (!core_) {
            if (binary) {
                fatal("protocol", "audio received before hello");
            } else if (auto hello = accept_hello(payload, server_->config); !hello.ok) {
                fatal(hello.error_code, hello.error_message);
            } else {
                const auto id = "s" + std::to_string(++server_->next_id);
                try {
                    core_ = std::make_unique<LiveSession>(id, std::move(hello.config));
                } catch (const std::exception& e) {
                    fatal("bad_config", e.what());
                }
                if (core_) {
                    direct_.push_back(core_->ready());
                    server_->add(id, weak_from_this());
                    registered_ = true;
                }
            }
        } else if (binary) {
            core_->on_audio(payload);
        } else if (!core_->on_text(payload)) {
            begin_close("client");
        }
        flush();
        read();
    }

    void fatal(const std::string& code, const std::string& detail) {
        direct_.push_back(WireMessage{false, error_message(code, detail, 0)});
        closing_ = true;
    }

    void begin_close(std::string_view reason) {
        if (closing_) return;
        closing_ = true;
        if (core_) core_->close(reason);
        flush();
    }

    void arm_timer() {
        timer_.expires_after(std::chrono::milliseconds(server_->options.tick_ms));
        timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
            if (ec || self->done_) return;
            self->on_tick();
        });
    }

    void on_tick() {
        if (core_ && !core_->closed()) {
            core_->tick();
            if (core_->idle_expired()) begin_close("idle");
        }
        flush();
        arm_timer();
    }

    void flush() {
        if (writing_ || done_) return;
        std::optional<WireMessage> next;
        if (!direct_.empty()) {
            next = std::move(direct_.front());
            direct_.pop_front();
        } else if (core_) {
            next = core_->next_output();
        }
        if (!next) {
            if (closing_ && !close_sent_) {
                close_sent_ = true;
                ws_.async_close(websocket::close_code::normal,
                                [self = shared_from_this()](beast::error_code) { self->finish(); });
            }
            return;
        }
        writing_ = true;
        current_ = std::move(*next);
        ws_.binary(current_.binary);
        ws_.async_write(net::buffer(current_.payload), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            self->writing_ = false;
            if (ec) {
                if (self->core_) self->core_->close("client");
                return self->finish();
            }
            self->flush();
        });
    }

    void finish() {
        if (done_) return;
        done_ = true;
        timer_.cancel();
        if (registered_) server_->remove(core_->id());
    }

    websocket::stream<beast::tcp_stream> ws_;
    net::steady_timer timer_;
    Server::Impl* server_;
    beast::flat_buffer buffer_;
    std::unique_ptr<LiveSession> core_;
    std::deque<WireMessage> direct_;
    WireMessage current_;
    bool writing_ = false;
    bool closing_ = false;
    bool close_sent_ = false;
    bool registered_ = false;
    bool done_ = false;
};

namespace {

std::string content_type(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".html") return "text/html";
    if (ext == ".js" || ext == ".mjs") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".wasm") return "application/wasm";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(tcp::socket&& socket, Server::Impl* server)
        : stream_(std::move(socket)), server_(server) {}

    void run() {
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, request_,
                         beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
    }

private:
    void on_read(beast::error_code ec, std::size_t) {
        if (ec) return;
        if (websocket::is_upgrade(request_)) {
            stream_.expires_never();
            std::make_shared<WsSession>(stream_.release_socket(), server_)->run(std::move(request_));
            return;
        }
        respond();
    }

    void respond() {
        auto res = std::make_shared<http::response<http::string_body>>();
        res->version(request_.version());
        res->keep_alive(false);
        const std::string target(request_.target());
        if (request_.method() != http::verb::get) {
            res->result(http::status::method_not_allowed);
        } else if (target == "/health") {
            res->result(http::status::ok);
            res->set(http::field::content_type, "application/json");
            res->body() = json{{"status", "ok"}, {"sessions", server_->count()}}.dump();
        } else {
            serve_static(*res, target);
        }
        res->prepare_payload();
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
            beast::error_code ignored;
            self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        });
    }

    void serve_static(http::response<http::string_body>& res, std::string target) {
        res.result(http::status::not_found);
        const auto& root = server_->config.gateway.static_dir;
        if (root.empty()) return;
        target = target.substr(0, target.find('?'));
        if (target.empty() || target.back() == '/') target += "index.html";
        if (target.find("..") != std::string::npos) return;
        const auto path = std::filesystem::path(root) / target.substr(1);
        std::ifstream in(path, std::ios::binary);
        if (!in) return;
        std::ostringstream body;
        body << in.rdbuf();
        res.result(http::status::ok);
        res.set(http::field::content_type, content_type(path));
        res.body() = body.str();
    }

    beast::tcp_stream stream_;
    Server::Impl* server_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
};

}  // namespace

void Server::Impl::accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (stopping) return;
        if (!ec) std::make_shared<HttpConnection>(std::move(socket), this)->run();
        accept();
    });
}

Server::Server(Config config, ServerOptions options) : impl_(std::make_unique<Impl>()) {
    config.validate();
    impl_->config = std::move(config);
    impl_->options = std::move(options);
}

Server::~Server() {
    stop();
}

void Server::start() {
    const auto address = net::ip::make_address(impl_->options.address);
    const tcp::endpoint endpoint(address, static_cast<unsigned short>(impl_->options.port));
    auto& acceptor = impl_->acceptor;
    acceptor.open(endpoint.protocol());
    acceptor.set_option(net::socket_base::reuse_address(true));
    acceptor.bind(endpoint);
    acceptor.listen(net::socket_base::max_listen_connections);
    port_ = acceptor.local_endpoint().port();
    impl_->accept();
    for (unsigned i = 0; i < std::max(1u, impl_->options.threads); ++i) {
        impl_->threads.emplace_back([impl = impl_.get()] { impl->ioc.run(); });
    }
}

std::size_t Server::session_count() const {
    return impl_->count();
}

void Server::stop() {
    std::lock_guard guard(impl_->stop_mutex);
    if (impl_->stopped) return;
    impl_->stopped = true;
    impl_->stopping = true;
    net::post(impl_->ioc, [impl = impl_.get()] {
        beast::error_code ignored;
        impl->acceptor.close(ignored);
    });
    std::vector<std::shared_ptr<WsSession>> live;
    {
        std::lock_guard lock(impl_->mutex);
        for (const auto& [id, weak] : impl_->sessions) {
            if (auto s = weak.lock()) live.push_back(std::move(s));
        }
    }
    for (const auto& s : live) s->shutdown();
    live.clear();
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
    while (impl_->count() > 0 && std::chrono::steady_clock::now() < deadline) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    impl_->ioc.stop();
    for (auto& t : impl_->threads) {
        if (t.joinable()) t.join();
    }
}

}  // namespace duplex::gateway
