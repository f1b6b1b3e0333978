#include "duplex/remote.hpp"

#include <boost/beast/core/detail/base64.hpp>

#include "httplib.h"

namespace duplex::remote {

namespace {

struct Target {
    std::string origin;
    std::string path;
};

Target split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw std::invalid_argument("URL needs a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

httplib::Client make_client(const Target& target, Millis timeout_ms) {
    httplib::Client client(target.origin);
    const auto sec = static_cast<time_t>(timeout_ms / 1000);
    const auto usec = static_cast<time_t>((timeout_ms % 1000) * 1000);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
    return client;
}

Reply finish(const httplib::Result& res) {
    Reply reply;
    if (!res) {
        reply.error = "transport error: " + httplib::to_string(res.error());
        return reply;
    }
    reply.status = res->status;
    reply.body = res->body;
    reply.ok = res->status >= 200 && res->status < 300;
    if (!reply.ok) reply.error = "http status " + std::to_string(res->status);
    return reply;
}

}  // namespace

Reply post_json(const std::string& url, const std::string& body, Millis timeout_ms) {
    try {
        const auto target = split_url(url);
        auto client = make_client(target, timeout_ms);
        return finish(client.Post(target.path, body, "application/json"));
    } catch (const std::exception& e) {
        return Reply{false, 0, {}, e.what()};
    }
}

Reply post_json_streaming(const std::string& url, const std::string& body, Millis timeout_ms,
                          const std::function<void(std::string_view)>& on_chunk) {
    try {
        const auto target = split_url(url);
        auto client = make_client(target, timeout_ms);
        httplib::Request req;
        req.method = "POST";
        req.path = target.path;
        req.body = body;
        req.set_header("Content-Type", "application/json");
        req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
            on_chunk(std::string_view(data, len));
            return true;
        };
        auto res = client.send(req);
        auto reply = finish(res);
        reply.body.clear();
        return reply;
    } catch (const std::exception& e) {
        return Reply{false, 0, {}, e.what()};
    }
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    namespace b64 = boost::beast::detail::base64;
    std::string out(b64::encoded_size(bytes.size()), '\0');
    out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    namespace b64 = boost::beast::detail::base64;
    std::vector<std::uint8_t> out(b64::decoded_size(text.size()));
    const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
    if (read != text.size()) throw std::invalid_argument("invalid base64 payload");
    out.resize(written);
    return out;
}

std::string encode_audio(std::span<const AudioFrame> frames) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(frames.size() * kFrameBytes);
    for (const auto& frame : frames) {
        const auto b = frame_to_bytes(frame);
        bytes.insert(bytes.end(), b.begin(), b.end());
    }
    return base64_encode(bytes);
}

}  // namespace duplex::remote
