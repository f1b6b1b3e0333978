#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "duplex/config.hpp"
#include "duplex/gateway.hpp"
#include "duplex/harness.hpp"
#include "duplex/trace.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) {
    g_stop = true;
}

duplex::Config read_config(const std::string& path) {
    return path.empty() ? duplex::Config{} : duplex::load_config(path);
}

duplex::ReportFormat format_from(const std::string& text) {
    const auto f = duplex::parse_report_format(text);
    if (!f) throw CLI::ValidationError("--format", "expected json or md");
    return *f;
}

void print_summary(const duplex::MetricsReport& r, bool met) {
    const auto show = [](const std::optional<double>& v, const char* unit) {
        if (!v) return std::string("-");
        std::ostringstream out;
        out << std::fixed << std::setprecision(3) << *v << unit;
        return out.str();
    };
    std::cout << r.name << ": FRD " << show(r.first_response_delay_s, "s") << ", interruption "
              << show(r.interruption_total_score, "") << ", rejection " << show(r.rejection_total_score, "")
              << ", total delay " << show(r.total_delay_s, "s") << ", expectations "
              << (met ? "met" : "VIOLATED") << "\n";
}

int run_sim(const std::string& scenario_path, const std::string& config_path, const std::string& trace_path,
            const std::string& report_path, const std::string& format) {
    const auto config = read_config(config_path);
    const auto script = duplex::load_scenario(scenario_path);
    const auto started = std::chrono::steady_clock::now();
    const auto trace = duplex::simulate(script, config);
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const auto report = duplex::compute_metrics(trace, script, config.harness.t_stop_ms);
    if (!trace_path.empty()) {
        std::ofstream out(trace_path);
        if (!out) throw std::runtime_error("cannot write trace to " + trace_path);
        duplex::write_jsonl(out, trace);
    }
    const std::vector<duplex::MetricsReport> reports{report};
    if (!report_path.empty()) duplex::emit_report(reports, format_from(format), report_path);
    print_summary(report, report.expectations_met());
    std::cout << "simulated in " << std::fixed << std::setprecision(3) << elapsed << " s\n";
    return report.expectations_met() ? 0 : 1;
}

int run_bench(const std::string& dir, const std::string& config_path, const std::string& report_path,
              const std::string& format, unsigned threads) {
    const auto config = read_config(config_path);
    const auto started = std::chrono::steady_clock::now();
    const auto result = duplex::run_bench(dir, config, threads);
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    auto reports = result.reports;
    reports.push_back(result.aggregate);
    if (!report_path.empty()) duplex::emit_report(reports, format_from(format), report_path);
    for (const auto& r : result.reports) {
        if (!r.expectations_met()) print_summary(r, false);
    }
    print_summary(result.aggregate, result.all_met);
    std::cout << result.scenarios.size() << " scenarios in " << std::fixed << std::setprecision(3) << elapsed << " s\n";
    return result.all_met ? 0 : 1;
}

int run_generate(std::uint64_t seed, std::size_t count, std::size_t events, const std::string& config_path,
                 const std::string& out_dir) {
    const auto config = read_config(config_path);
    std::filesystem::create_directories(out_dir);
    for (std::size_t i = 0; i < count; ++i) {
        duplex::GeneratorOptions options;
        options.events = events;
        const auto script = duplex::generate_scenario(seed + i, config, options);
        std::ofstream out(std::filesystem::path(out_dir) / (script.name + ".json"));
        out << duplex::scenario_to_json(script);
    }
    std::cout << "wrote " << count << " scenarios to " << out_dir << "\n";
    return 0;
}

int run_serve(int port, std::string config_path, const std::string& host, const std::string& static_dir) {
    if (config_path.empty()) {
        if (const char* env = std::getenv("DUPLEX_CONFIG")) config_path = env;
    }
    auto config = read_config(config_path);
    if (port < 0) {
        if (const char* env = std::getenv("DUPLEX_PORT")) {
            port = std::stoi(env);
        } else {
            port = config.gateway.port;
        }
    }
    if (!static_dir.empty()) config.gateway.static_dir = static_dir;

    duplex::gateway::ServerOptions options;
    options.address = host;
    options.port = port;
    options.threads = std::max(2u, std::thread::hardware_concurrency());
    duplex::gateway::Server server(config, options);
    server.start();
    std::cout << "listening on ws://" << host << ":" << server.port() << "/ (health: /health)" << std::endl;

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    std::cout << "shutting down" << std::endl;
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Full-duplex dialogue engine: simulation, benchmarking and live gateway"};
    app.require_subcommand(1);

    std::string scenario, config_path, trace_path, report_path, format = "md", dir, host = "127.0.0.1", static_dir;
    std::string out_dir = "scenarios/generated";
    unsigned threads = 0;
    int port = -1;
    std::uint64_t seed = 1;
    std::size_t count = 200, events = 10;

    auto* sim = app.add_subcommand("sim", "Simulate one scenario on the virtual clock");
    sim->add_option("--scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
    sim->add_option("--config", config_path, "Config file (key = value)")->check(CLI::ExistingFile);
    sim->add_option("--trace", trace_path, "Write the session trace as JSON lines");
    sim->add_option("--report", report_path, "Write the metrics report");
    sim->add_option("--format", format, "Report format: json or md");

    auto* bench = app.add_subcommand("bench", "Simulate every scenario in a directory");
    bench->add_option("--scenario-dir", dir, "Directory of scenario JSON files")->required()->check(CLI::ExistingDirectory);
    bench->add_option("--config", config_path, "Config file (key = value)")->check(CLI::ExistingFile);
    bench->add_option("--report", report_path, "Write the metrics report");
    bench->add_option("--format", format, "Report format: json or md");
    bench->add_option("--threads", threads, "Worker threads (0 = all cores)");

    auto* gen = app.add_subcommand("generate", "Write random scenarios");
    gen->add_option("--seed", seed, "First seed");
    gen->add_option("--count", count, "Number of scenarios");
    gen->add_option("--events", events, "Events per scenario");
    gen->add_option("--config", config_path, "Config the timings are planned against")->check(CLI::ExistingFile);
    gen->add_option("--out", out_dir, "Output directory");

    auto* serve = app.add_subcommand("serve", "Run the WebSocket gateway");
    serve->add_option("--port", port, "Listen port (env DUPLEX_PORT, then gateway.port)");
    serve->add_option("--config", config_path, "Config file (env DUPLEX_CONFIG)");
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--static-dir", static_dir, "Directory served over HTTP (overrides gateway.static_dir)");

    auto* dump = app.add_subcommand("config", "Print every config key with its value");
    dump->add_option("--config", config_path, "Config file to merge over the defaults")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*sim) return run_sim(scenario, config_path, trace_path, report_path, format);
        if (*bench) return run_bench(dir, config_path, report_path, format, threads);
        if (*gen) return run_generate(seed, count, events, config_path, out_dir);
        if (*serve) return run_serve(port, config_path, host, static_dir);
        if (*dump) {
            std::cout << duplex::dump_config(read_config(config_path));
            return 0;
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
