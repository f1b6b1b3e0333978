#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "duplex/audio.hpp"

/// HTTP plumbing shared by the remote ASR, decision and TTS adapters.
namespace duplex::remote {

struct Reply {
    bool ok = false;
    int status = 0;
    std::string body;
    std::string error;
};

/// POSTs a JSON body to an absolute http:// URL. Any transport failure,
/// timeout or non-2xx status yields ok = false.
Reply post_json(const std::string& url, const std::string& body, Millis timeout_ms);

/// Streaming variant: `on_chunk` sees each body chunk as it arrives.
Reply post_json_streaming(const std::string& url, const std::string& body, Millis timeout_ms,
                          const std::function<void(std::string_view)>& on_chunk);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Base64 of the frames' samples as PCM16LE.
std::string encode_audio(std::span<const AudioFrame> frames);

}  // namespace duplex::remote
