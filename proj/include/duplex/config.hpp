#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "duplex/audio.hpp"
#include "duplex/decision.hpp"

namespace duplex {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AudioConfig {
    VadConfig vad;
    Millis pre_roll_ms = 200;
    Millis ring_ms = 60000;
    bool sv_enabled = false;
    double sv_threshold = 0.5;
    double sv_reference_hz = 440.0;
};

struct ContextConfig {
    std::string asr_backend = "mock";
    Millis asr_latency_ms = 300;
    Millis asr_timeout_ms = 2000;
    std::string asr_url;
    std::size_t max_segments = 10;
};

struct DecisionConfig {
    std::string backend = "scripted";
    Millis timeout_ms = 1500;
    Millis window_ms = 8000;
    ScriptedOracleConfig scripted;
    std::string url;
};

struct TtsConfig {
    std::string backend = "mock";
    Millis ms_per_char = 50;
    Millis first_chunk_latency_ms = 150;
    Millis timeout_ms = 5000;
    std::string url;
};

struct OrchestratorConfig {
    Millis min_overlap_ms = 150;
};

struct HarnessConfig {
    Millis t_stop_ms = 1000;
    Millis tail_ms = 3000;
};

struct GatewayConfig {
    int port = 8765;
    Millis idle_timeout_ms = 120000;
    Millis max_buffer_ms = 5000;
    std::size_t audio_queue_frames = 50;
    std::string static_dir;
};

struct Config {
    AudioConfig audio;
    ContextConfig context;
    DecisionConfig decision;
    TtsConfig tts;
    OrchestratorConfig orchestrator;
    HarnessConfig harness;
    GatewayConfig gateway;

    /// Sets one dotted key. Throws ConfigError for unknown keys or bad values.
    void set(std::string_view key, std::string_view value);
    std::string get(std::string_view key) const;
    /// Throws ConfigError when values are out of range.
    void validate() const;
};

struct ConfigKey {
    std::string key;
    std::string description;
};

/// Every recognised key with its meaning, in file order.
const std::vector<ConfigKey>& config_keys();

/// `key = value` lines; `#` starts a comment.
Config parse_config(std::string_view text, Config base = {});
Config load_config(const std::filesystem::path& path, Config base = {});
/// All keys with current values, one per line, with description comments.
std::string dump_config(const Config& config);
std::map<std::string, std::string> config_values(const Config& config);

}  // namespace duplex
