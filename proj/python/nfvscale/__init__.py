import json

from ._core import (
    Config,
    ConfigError,
    PredictorError,
    Predictors,
    Trace,
    TraceError,
    default_config_text,
    load_config,
    load_predictors,
    trace_stats,
    train,
    workload,
)
from ._core import run_json as _run_json

__all__ = [
    "Config", "ConfigError", "PredictorError", "Predictors", "Trace", "TraceError",
    "default_config_text", "load_config", "load_predictors", "resolved", "run",
    "trace_stats", "train", "workload",
]


def resolved(config):
    return json.loads(config.resolved_json)


def run(config, trace, mode="full", slo_us=None, predictors=None):
    """Simulate one (slo, mode) cell; returns the summary record as a dict."""
    if predictors is None:
        predictors = Predictors()
    return json.loads(_run_json(config, trace, mode, slo_us, predictors))
