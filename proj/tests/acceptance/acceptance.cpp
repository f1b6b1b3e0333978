// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "duplex/gateway.hpp"
#include "duplex/harness.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "ws_client.hpp"

using namespace duplex;
using json = nlohmann::json;

namespace {

using Clock_ = std::chrono::steady_clock;

double seconds_since(Clock_::time_point start) {
    return std::chrono::duration<double>(Clock_::now() - start).count();
}

struct Verdict {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) detail = why;
        pass = false;
    }
};

template <class T>
std::vector<std::pair<Millis, T>> records(const SessionTrace& trace) {
    std::vector<std::pair<Millis, T>> out;
    for (const auto& e : trace.events) {
        if (const auto* r = std::get_if<T>(&e.record)) out.emplace_back(e.t, *r);
    }
    return out;
}

std::vector<std::string> codes_of(const SessionTrace& trace) {
    std::vector<std::string> out;
    for (const auto& [t, r] : records<trace::Transition>(trace)) out.emplace_back(to_string(r.kind));
    return out;
}

Millis ceil20(Millis v) {
    return (v + 19) / 20 * 20;
}

// ---------------------------------------------------------------------------

Verdict state_machine() {
    Verdict v;
    std::size_t rows = 0;
    for (const auto& row : oracle::fig1_table()) {
        const auto state = parse_state(row.state);
        const auto action = parse_action(row.action);
        if (!state || !action) {
            v.fail("unparseable table row");
            continue;
        }
        const auto step = apply_action(*state, *action);
        if (to_string(step.state) != row.next || to_string(step.kind) != row.code) {
            v.fail("(" + row.state + ", " + row.action + ") gives " + std::string(to_string(step.kind)));
        }
        ++rows;
    }
    if (rows != 4) v.fail("table has " + std::to_string(rows) + " rows");

    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 1000; ++trial) {
        Dialogue d;
        std::vector<std::string> codes;
        const int n = std::uniform_int_distribution<int>(0, 200)(rng);
        Millis now = 0;
        for (int i = 0; i < n; ++i) {
            const auto action = rng() % 2 ? Action::Switch : Action::Continue;
            const auto step = apply_action(d.state(), action);
            now += std::uniform_int_distribution<Millis>(0, 100)(rng);
            d.advance(now, step.kind);
            codes.emplace_back(to_string(step.kind));
        }
        const auto s2l = std::count(codes.begin(), codes.end(), "s2l");
        const auto ref = oracle::replay(codes);
        if (d.unit_index() != s2l || !ref || ref->unit != s2l || ref->state != to_string(d.state())) {
            v.fail("sequence " + std::to_string(trial) + ": unit_index " + std::to_string(d.unit_index()) +
                   " vs s2l count " + std::to_string(s2l));
        }
    }
    if (v.pass) v.detail = "4 table rows, 1000 random sequences";
    return v;
}

Verdict causality() {
    Verdict v;
    std::mt19937_64 rng(7);
    std::int64_t violations = 0;
    std::int64_t checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        TranscriptCache cache;
        std::map<std::int64_t, std::int64_t> submitted_in;
        std::map<std::int64_t, Millis> done_at;
        std::int64_t cycle = 0, next_id = 0;
        Millis now = 0;
        for (int step = 0; step < 100; ++step) {
            now += std::uniform_int_distribution<Millis>(0, 60)(rng);
            switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
                case 0:
                    cache.submit(next_id, cycle, now);
                    submitted_in[next_id++] = cycle;
                    break;
                case 1:
                    if (next_id > 0) {
                        const auto id = std::uniform_int_distribution<std::int64_t>(0, next_id - 1)(rng);
                        if (cache.job(id)->status == JobStatus::Pending) {
                            const auto latency = std::uniform_int_distribution<Millis>(0, 500)(rng);
                            cache.complete(id, "t", latency);
                            done_at[id] = cache.job(id)->enqueued_at + latency;
                        }
                    }
                    break;
                case 2:
                    ++cycle;
                    break;
                default:
                    for (const auto& e : cache.snapshot(cycle, now, 1000)) {
                        ++checked;
                        if (cycle <= submitted_in.at(e.segment_id) || done_at.at(e.segment_id) > now) ++violations;
                    }
            }
        }
    }
    // The same property end to end: a request never counts a transcript
    // submitted in its own cycle or not yet delivered.
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Config cfg;
        cfg.context.asr_latency_ms = 100 + static_cast<Millis>(seed % 5) * 150;
        cfg.decision.scripted.latency_ms = 100 + static_cast<Millis>(seed % 4) * 100;
        const auto s = generate_scenario(seed, cfg);
        const auto trace = simulate(s, cfg);
        std::map<std::int64_t, std::int64_t> submit_cycle;
        std::set<std::int64_t> delivered;
        for (const auto& e : trace.events) {
            if (const auto* a = std::get_if<trace::AsrSubmit>(&e.record)) submit_cycle[a->segment_id] = a->cycle;
            if (const auto* a = std::get_if<trace::AsrComplete>(&e.record); a && a->ok) delivered.insert(a->segment_id);
            if (const auto* r = std::get_if<trace::DecisionRequest>(&e.record)) {
                std::int64_t eligible = 0;
                for (auto id : delivered) eligible += submit_cycle.at(id) < r->cycle;
                ++checked;
                if (r->transcripts > std::min<std::int64_t>(eligible, cfg.context.max_segments)) ++violations;
            }
        }
    }
    if (violations > 0) v.fail(std::to_string(violations) + " violations");
    v.detail = v.pass ? "500 interleavings + 50 sessions, " + std::to_string(checked) + " snapshots, 0 violations"
                      : v.detail;
    return v;
}

Verdict barge_in() {
    Verdict v;
    std::mt19937_64 rng(3);
    auto pick = [&](Millis lo, Millis hi) { return std::uniform_int_distribution<Millis>(lo / 20, hi / 20)(rng) * 20; };
    Millis worst_margin = 0;
    for (int i = 0; i < 200; ++i) {
        Config cfg;
        const Millis latency = pick(100, 600);
        cfg.decision.scripted.latency_ms = latency;
        const Millis d = pick(400, 1500);
        const std::size_t chars = 40 + rng() % 60;
        const Millis first = 1000 + d + cfg.audio.vad.min_silence_ms + latency + cfg.tts.first_chunk_latency_ms;
        const Millis playback = static_cast<Millis>(chars) * cfg.tts.ms_per_char;
        const Millis start = pick(first + 100, first + playback - latency - 400);
        ScenarioScript s;
        s.name = "barge" + std::to_string(i);
        s.events.push_back(ScenarioEvent{1000, d, TruthLabel::Complete, Expected::Respond, "", std::string(chars, 'a')});
        s.events.push_back(ScenarioEvent{start, 600, TruthLabel::Interruption, Expected::CancelAndListen, "", "ok"});
        const auto trace = simulate(s, cfg);

        const Millis trigger = start + ceil20(cfg.orchestrator.min_overlap_ms);
        const auto cancels = records<trace::PlaybackCancel>(trace);
        if (cancels.empty()) {
            v.fail("scenario " + std::to_string(i) + ": no cancel");
            continue;
        }
        const auto [tc, cancel] = cancels.front();
        const Millis margin = tc - trigger - latency;
        worst_margin = std::max(worst_margin, margin);
        if (tc < trigger || margin > 20) {
            v.fail("scenario " + std::to_string(i) + ": cancel " + std::to_string(tc - trigger) + " ms after trigger");
        }
        for (const auto& [t, f] : records<trace::AgentFrame>(trace)) {
            if (f.utterance_id == cancel.utterance_id && t >= tc) {
                v.fail("scenario " + std::to_string(i) + ": agent frame after cancel");
            }
        }
    }
    if (v.pass) v.detail = "200 scenarios, cancel - trigger - latency <= " + std::to_string(worst_margin) + " ms";
    return v;
}

std::optional<double> frd_for(Millis silence, Millis decision, Millis first_chunk) {
    Config cfg;
    cfg.audio.vad.min_silence_ms = silence;
    cfg.decision.scripted.latency_ms = decision;
    cfg.tts.first_chunk_latency_ms = first_chunk;
    ScenarioScript s;
    s.name = "latency";
    s.events.push_back(ScenarioEvent{1000, 1200, TruthLabel::Complete, Expected::Respond, "", "hello there"});
    return compute_metrics(simulate(s, cfg), s).first_response_delay_s;
}

Verdict latency() {
    Verdict v;
    const auto base = frd_for(500, 300, 150);
    if (!base || std::abs(*base - 0.950) > 0.001) {
        v.fail("default FRD " + (base ? std::to_string(*base) : std::string("absent")));
    }
    int cells = 0;
    for (Millis silence : {300, 500, 800}) {
        for (Millis decision : {100, 300, 700}) {
            for (Millis first : {50, 150, 400}) {
                const auto frd = frd_for(silence, decision, first);
                const double expected = static_cast<double>(silence + decision + first) / 1000.0;
                if (!frd || std::abs(*frd - expected) > 0.001) {
                    v.fail("cell (" + std::to_string(silence) + ", " + std::to_string(decision) + ", " +
                           std::to_string(first) + ")");
                } else {
                    ++cells;
                }
            }
        }
    }
    std::ostringstream d;
    d.precision(3);
    d << std::fixed << "FRD " << base.value_or(0.0) << " s, " << cells << "/27 grid cells equal the sum";
    if (v.pass) v.detail = d.str();
    return v;
}

Verdict metrics_equivalence() {
    Verdict v;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        Config cfg;
        cfg.decision.scripted.latency_ms = 100 + static_cast<Millis>(seed % 7) * 60;
        cfg.decision.scripted.jitter_ms = seed % 3 == 0 ? 240 : 0;
        cfg.decision.scripted.error_rate = seed % 4 == 0 ? 0.3 : 0.0;
        cfg.decision.scripted.adversarial = seed % 9 == 0;
        cfg.audio.sv_enabled = seed % 2 == 0;
        const auto s = generate_scenario(seed, cfg);
        const auto trace = simulate(s, cfg);
        const Millis t_stop = seed % 5 == 0 ? 400 : 1000;
        const auto r = compute_metrics(trace, s, t_stop);
        const auto o = oracle::oracle_metrics(to_jsonl(trace), s, t_stop);
        if (r.first_response_delay_s != o.first_response_delay_s || r.total_delay_s != o.total_delay_s ||
            r.interruption_total_score != o.interruption_total_score ||
            r.rejection_total_score != o.rejection_total_score) {
            v.fail("seed " + std::to_string(seed) + " differs");
        }
    }
    if (v.pass) v.detail = "100 scenarios, exact equality";
    return v;
}

std::string fmt(const std::optional<double>& x) {
    if (!x) return "-";
    std::ostringstream o;
    o.precision(1);
    o << std::fixed << *x;
    return o.str();
}

Verdict oracle_bounds() {
    Verdict v;
    std::vector<MetricsReport> perfect, gated, flipped;
    Config with_sv;
    with_sv.audio.sv_enabled = true;
    Config adversarial;
    adversarial.decision.scripted.adversarial = true;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const auto s = generate_scenario(seed, Config{});
        perfect.push_back(compute_metrics(simulate(s, Config{}), s));
        gated.push_back(compute_metrics(simulate(s, with_sv), s));
        flipped.push_back(compute_metrics(simulate(s, adversarial), s));
    }
    const auto p = aggregate(perfect, "perfect oracle");
    const auto g = aggregate(gated, "perfect oracle with SV");
    const auto f = aggregate(flipped, "flipped oracle");
    for (const auto* r : {&p, &g}) {
        if (r->interruption_total_score != 100.0 || r->rejection_total_score != 100.0) {
            v.fail(r->name + " scored " + fmt(r->interruption_total_score) + " / " + fmt(r->rejection_total_score));
        }
    }
    if (f.interruption_total_score != 0.0 || f.rejection_total_score != 0.0) {
        v.fail("flipped oracle scored " + fmt(f.interruption_total_score) + " / " + fmt(f.rejection_total_score));
    }
    std::vector<MetricsReport> both{p, g, f};
    const auto md = report_to_markdown(both);
    for (const auto& row : published_reference_rows()) {
        if (md.find(row.name) == std::string::npos) v.fail("report lacks " + row.name);
    }
    std::cout << "  | System | First Response Delay | Interruption Total Score | Rejection Total Score | Total Delay |\n";
    for (const auto& row : published_reference_rows()) {
        std::cout << "  | " << row.name << " | " << row.first_response_delay << " | " << row.interruption_total_score
                  << " | " << row.rejection_total_score << " | " << row.total_delay << " |\n";
    }
    for (const auto& r : both) {
        std::cout << "  | " << r.name << " | "
                  << (r.first_response_delay_s ? std::to_string(*r.first_response_delay_s).substr(0, 5) + "s" : "-")
                  << " | " << fmt(r.interruption_total_score) << " | " << fmt(r.rejection_total_score) << " | "
                  << (r.total_delay_s ? std::to_string(*r.total_delay_s).substr(0, 5) + "s" : "-") << " |\n";
    }
    if (v.pass) {
        v.detail = "perfect " + fmt(p.interruption_total_score) + "/" + fmt(p.rejection_total_score) + ", flipped " +
                   fmt(f.interruption_total_score) + "/" + fmt(f.rejection_total_score);
    }
    return v;
}

ScenarioScript minute_long(std::uint64_t seed) {
    auto s = generate_scenario(seed, Config{}, GeneratorOptions{14, true});
    s.name = "minute";
    return s;
}

Millis span_of(const ScenarioScript& s) {
    return s.events.empty() ? 0 : s.events.back().end_ms();
}

Verdict total_failure() {
    Verdict v;
    Config cfg;
    cfg.decision.scripted.error_rate = 1.0;
    ScenarioScript s;
    s.name = "failing";
    for (Millis t = 1000; t + 1500 + 1000 <= 60000; t += 5000) {
        s.events.push_back(ScenarioEvent{t, 1500, TruthLabel::Complete, Expected::Respond, "", "hello"});
    }
    cfg.harness.tail_ms = 60000 - span_of(s);
    try {
        const auto trace = simulate(s, cfg);
        std::int64_t switches = 0;
        for (const auto& c : codes_of(trace)) switches += c == "l2s" || c == "s2l";
        const auto decisions = records<trace::DecisionOutcome>(trace).size();
        bool aborted = false;
        for (const auto& [t, d] : records<trace::Degradation>(trace)) aborted |= d.source == "engine";
        if (switches != 0) v.fail(std::to_string(switches) + " switch transitions");
        if (aborted) v.fail("session aborted");
        if (decisions == 0) v.fail("no decisions were attempted");
        if (v.pass) {
            v.detail = std::to_string((span_of(s) + cfg.harness.tail_ms) / 1000) + " s, " + std::to_string(decisions) +
                       " fallback decisions, 0 switches";
        }
    } catch (const std::exception& e) {
        v.fail(std::string("threw: ") + e.what());
    }
    return v;
}

Verdict throughput() {
    Verdict v;
    const Config cfg;
    // Stretch a generated script so its audio spans at least a minute.
    auto s = minute_long(11);
    while (span_of(s) + cfg.harness.tail_ms < 60000) {
        const Millis shift = span_of(s) + 2000;
        auto more = minute_long(12 + s.events.size());
        for (auto& e : more.events) {
            e.t_ms += shift;
            s.events.push_back(e);
        }
    }
    while (span_of(s) + cfg.harness.tail_ms > 60000) s.events.pop_back();
    const Millis audio_ms = std::max<Millis>(60000, span_of(s) + cfg.harness.tail_ms);
    Config timed = cfg;
    timed.harness.tail_ms = audio_ms - span_of(s);
    const auto t0 = Clock_::now();
    simulate(s, timed);
    const double one = seconds_since(t0);
    if (one >= 1.0) v.fail("60 s scenario took " + std::to_string(one) + " s");

    const auto dir = std::filesystem::temp_directory_path() / ("duplex_accept_bench_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        auto g = generate_scenario(seed, cfg);
        g.name = "bench_" + std::to_string(seed);
        std::ofstream(dir / (g.name + ".json")) << scenario_to_json(g);
    }
    const auto t1 = Clock_::now();
    const auto bench = run_bench(dir, cfg);
    const double all = seconds_since(t1);
    std::filesystem::remove_all(dir);
    if (bench.reports.size() != 200) v.fail("bench ran " + std::to_string(bench.reports.size()) + " scenarios");
    if (all >= 60.0) v.fail("bench took " + std::to_string(all) + " s");
    std::ostringstream d;
    d.precision(3);
    d << std::fixed << audio_ms / 1000 << " s scenario in " << one << " s, 200-scenario bench in " << all << " s";
    if (v.pass) v.detail = d.str();
    return v;
}

struct LiveLog {
    std::string session_id;
    std::vector<std::string> seq;
    std::vector<std::string> tts_texts;
    std::vector<std::string> error_codes;
    std::int64_t errors_before_audio = 0;
};

LiveLog live_client(int port, const std::string& tag) {
    LiveLog log;
    wsclient::Client c(port);
    c.text(json{{"type", "hello"},
                {"sample_rate", 16000},
                {"config",
                 {{"decision.scripted.default_listen", "complete"},
                  {"decision.scripted.default_speak", "interruption"},
                  {"decision.scripted.latency_ms", 100},
                  {"audio.vad.min_silence_ms", 200},
                  {"decision.scripted.reply", "answer for " + tag + " and some more words"}}}});
    const auto ready = c.read_json();
    if (!ready || (*ready)["type"] != "ready") return log;
    log.session_id = (*ready)["session_id"];

    c.binary(std::string(640, '\0'));
    c.binary(std::string(641, '\0'));
    ScenarioScript s;
    s.events.push_back(ScenarioEvent{0, 600, TruthLabel::Complete, Expected::Respond, "", ""});
    s.events.push_back(ScenarioEvent{1400, 400, TruthLabel::Interruption, Expected::CancelAndListen, "", ""});
    for (auto f : synthesize_user_audio(s, 1600)) {
        f.t_start += 20;
        c.binary(wsclient::frame_bytes(f));
    }
    int starts = 0, ends = 0;
    bool bye_sent = false;
    while (auto m = c.read()) {
        if (m->first) {
            log.seq.push_back("audio");
            continue;
        }
        const auto j = json::parse(m->second);
        const std::string type = j["type"];
        log.seq.push_back(type == "transition" ? j["kind"].get<std::string>() : type);
        if (type == "error") log.error_codes.push_back(j["code"]);
        if (type == "tts_start") {
            ++starts;
            log.tts_texts.push_back(j["text"]);
        }
        if (type == "tts_end") ++ends;
        if (!bye_sent && starts == 2 && ends == 1) {
            c.text(json{{"type", "bye"}});
            bye_sent = true;
        }
    }
    return log;
}

std::size_t find_in(const std::vector<std::string>& seq, const std::string& item, std::size_t from = 0) {
    for (std::size_t i = from; i < seq.size(); ++i) {
        if (seq[i] == item) return i;
    }
    return seq.size();
}

Verdict gateway_loopback() {
    Verdict v;
    gateway::ServerOptions options;
    options.port = 0;
    gateway::Server server(Config{}, options);
    server.start();
    std::vector<std::future<LiveLog>> futures;
    for (int i = 0; i < 8; ++i) {
        futures.push_back(std::async(std::launch::async, live_client, server.port(), "c" + std::to_string(i)));
    }
    std::set<std::string> ids;
    int k = 0;
    for (auto& fut : futures) {
        const auto log = fut.get();
        const auto who = "client " + std::to_string(k++) + ": ";
        ids.insert(log.session_id);
        if (log.error_codes != std::vector<std::string>{"bad_frame"}) {
            v.fail(who + "expected exactly one bad_frame error");
        }
        const auto& seq = log.seq;
        const auto l2s = find_in(seq, "l2s");
        const auto start = find_in(seq, "tts_start", l2s);
        const auto audio = find_in(seq, "audio");
        if (!(l2s < start && start < audio && audio < seq.size())) v.fail(who + "l2s, tts_start, audio out of order");
        const auto cancel = find_in(seq, "tts_cancel");
        const auto s2l = find_in(seq, "s2l");
        if (!(cancel < s2l && s2l < seq.size())) v.fail(who + "tts_cancel did not precede s2l");
        const auto restart = find_in(seq, "tts_start", cancel);
        for (std::size_t i = cancel; i < restart && i < seq.size(); ++i) {
            if (seq[i] == "audio") v.fail(who + "audio after tts_cancel");
        }
        if (log.tts_texts.size() != 2) v.fail(who + std::to_string(log.tts_texts.size()) + " replies");
        for (const auto& t : log.tts_texts) {
            if (t != "answer for c" + std::to_string(k - 1) + " and some more words") v.fail(who + "foreign reply");
        }
    }
    if (ids.size() != 8) v.fail("session ids are not distinct");
    server.stop();
    if (v.pass) v.detail = "640 accepted, 641 bad_frame, cancel before s2l, l2s/tts_start/audio, 8 isolated sessions";
    return v;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Verdict()> check;
    };
    const std::vector<Criterion> criteria{
        {"state machine conformance", state_machine},
        {"next-cycle causality", causality},
        {"barge-in cancel bound", barge_in},
        {"latency decomposition", latency},
        {"metrics oracle equivalence", metrics_equivalence},
        {"perfect and flipped oracle scores", oracle_bounds},
        {"total decision failure", total_failure},
        {"simulation throughput", throughput},
        {"gateway loopback", gateway_loopback},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Verdict v;
        try {
            v = c.check();
        } catch (const std::exception& e) {
            v.fail(std::string("threw: ") + e.what());
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << "  " << c.name << "  (" << v.detail << ")" << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
