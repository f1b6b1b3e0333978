#include <sstream>

#include "doctest.h"
#include "duplex/harness.hpp"
#include "duplex/trace.hpp"

using namespace duplex;

TEST_CASE("jsonl round-trips generated traces") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Config cfg;
        cfg.audio.sv_enabled = seed % 2 == 0;
        cfg.decision.scripted.error_rate = seed % 4 == 0 ? 0.5 : 0.0;
        const auto trace = simulate(generate_scenario(seed, cfg), cfg);
        const auto text = to_jsonl(trace);
        CHECK(parse_jsonl(text) == trace);
        std::ostringstream out;
        write_jsonl(out, trace);
        CHECK(out.str() == text);
    }
}

TEST_CASE("bad jsonl names the line") {
    const Config cfg;
    auto text = to_jsonl(simulate(generate_scenario(3, cfg), cfg));
    const auto second = text.find('\n') + 1;
    const auto third = text.find('\n', second) + 1;
    text.insert(third, "{not json}\n");
    try {
        parse_jsonl(text);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS(parse_jsonl("{\"type\":\"session\",\"session_id\":\"x\"}\n{\"type\":\"mystery\",\"t\":0}\n"));
}

TEST_CASE("replayed units match the engine") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Config cfg;
        const auto s = generate_scenario(seed, cfg);
        Clock clock;
        Engine engine(cfg, make_backends(cfg, script_hooks(s)), clock, s.name);
        const auto frames = synthesize_user_audio(s, cfg.harness.tail_ms);
        for (const auto& f : frames) clock.schedule(f.t_end(), [&engine, &f] { engine.ingest(f); });
        clock.run_until_idle();
        engine.finish();
        CHECK(replay_units(engine.trace()) == engine.dialogue());
        CHECK(engine.stats().units == engine.dialogue().unit_index());
    }
}
