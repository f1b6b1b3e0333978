"""Python bindings for the duplex dialogue engine.

Scenarios and traces travel as JSON text; the helpers here decode them.
"""

import json

from ._duplex import (
    ConfigError,
    ContractViolation,
    ScenarioError,
    apply_action,
    report_markdown,
    unit_count,
)
from . import _duplex


def _overrides(config):
    return {k: str(v).lower() if isinstance(v, bool) else str(v) for k, v in (config or {}).items()}


def config_values(config=None):
    """Every config key with its value after applying `config` overrides."""
    return _duplex.config_values(_overrides(config))


def generate_scenario(seed, events=10, config=None):
    return json.loads(_duplex.generate_scenario(seed, events, _overrides(config)))


def simulate(scenario, config=None):
    """Runs a scenario (dict or JSON text) and returns the trace as JSON lines."""
    text = scenario if isinstance(scenario, str) else json.dumps(scenario)
    return _duplex.simulate(text, _overrides(config))


def trace_records(trace):
    return [json.loads(line) for line in trace.splitlines() if line]


def compute_metrics(trace, scenario, t_stop_ms=1000):
    text = scenario if isinstance(scenario, str) else json.dumps(scenario)
    return json.loads(_duplex.compute_metrics(trace, text, t_stop_ms))["reports"][0]


def run_bench(directory, config=None, threads=0):
    """Returns (per-scenario reports followed by the aggregate, all expectations met)."""
    reports, met = _duplex.run_bench(str(directory), _overrides(config), threads)
    return json.loads(reports)["reports"], met


__all__ = [
    "ConfigError",
    "ContractViolation",
    "ScenarioError",
    "apply_action",
    "compute_metrics",
    "config_values",
    "generate_scenario",
    "report_markdown",
    "run_bench",
    "simulate",
    "trace_records",
    "unit_count",
]
