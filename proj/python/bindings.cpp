#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <map>
#include <string>

#include "duplex/harness.hpp"

namespace py = pybind11;
using namespace duplex;

namespace {

Config make_config(const std::map<std::string, std::string>& overrides) {
    Config cfg;
    for (const auto& [key, value] : overrides) cfg.set(key, value);
    cfg.validate();
    return cfg;
}

std::string report_json(const MetricsReport& r) {
    return report_to_json(std::span(&r, 1));
}

}  // namespace

PYBIND11_MODULE(_duplex, m) {
    m.doc() = "Unit-based full-duplex dialogue engine";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ScenarioError>(m, "ScenarioError", PyExc_ValueError);
    py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);

    m.def("config_values", [](const std::map<std::string, std::string>& overrides) {
        return config_values(make_config(overrides));
    }, py::arg("overrides") = std::map<std::string, std::string>{});

    m.def("apply_action", [](const std::string& state, const std::string& action) {
        const auto s = parse_state(state);
        const auto a = parse_action(action);
        if (!s || !a) throw py::value_error("unknown state or action");
        const auto step = apply_action(*s, *a);
        return std::pair{std::string(to_string(step.state)), std::string(to_string(step.kind))};
    }, py::arg("state"), py::arg("action"));

    m.def("generate_scenario", [](std::uint64_t seed, std::size_t events,
                                  const std::map<std::string, std::string>& overrides) {
        return scenario_to_json(generate_scenario(seed, make_config(overrides), GeneratorOptions{events, true}));
    }, py::arg("seed"), py::arg("events") = 10, py::arg("overrides") = std::map<std::string, std::string>{});

    m.def("simulate", [](const std::string& scenario, const std::map<std::string, std::string>& overrides) {
        const auto script = parse_scenario(scenario);
        const auto cfg = make_config(overrides);
        py::gil_scoped_release release;
        return to_jsonl(simulate(script, cfg));
    }, py::arg("scenario"), py::arg("overrides") = std::map<std::string, std::string>{});

    m.def("compute_metrics", [](const std::string& trace, const std::string& scenario, Millis t_stop_ms) {
        return report_json(compute_metrics(parse_jsonl(trace), parse_scenario(scenario), t_stop_ms));
    }, py::arg("trace"), py::arg("scenario"), py::arg("t_stop_ms") = 1000);

    m.def("unit_count", [](const std::string& trace) { return replay_units(parse_jsonl(trace)).unit_index(); },
          py::arg("trace"));

    m.def("run_bench", [](const std::string& dir, const std::map<std::string, std::string>& overrides,
                          unsigned threads) {
        const auto cfg = make_config(overrides);
        BenchResult result;
        {
            py::gil_scoped_release release;
            result = run_bench(std::filesystem::path(dir), cfg, threads);
        }
        auto all = result.reports;
        all.push_back(result.aggregate);
        return py::make_tuple(report_to_json(all), result.all_met);
    }, py::arg("directory"), py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("threads") = 0);

    m.def("report_markdown", [](const std::string& reports) { return report_to_markdown(reports_from_json(reports)); },
          py::arg("reports"));
}
