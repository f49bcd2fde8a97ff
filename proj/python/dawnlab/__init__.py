"""Python access to the residual soft actor-critic lab."""

import json

from . import _core
from ._core import (
    ConfigError,
    Env,
    mean_ci,
    parse_seeds,
    plot_summary,
    project_categorical,
    quantile_fractions,
    quantile_huber_loss,
    registered_envs,
    suite_names,
)

__all__ = [
    "ConfigError",
    "Env",
    "default_config",
    "mean_ci",
    "parse_seeds",
    "plot_summary",
    "project_categorical",
    "quantile_fractions",
    "quantile_huber_loss",
    "registered_envs",
    "run",
    "suite",
    "suite_names",
    "validate_config",
]


def default_config(profile="desk"):
    """Run configuration with the given profile applied, as a dict."""
    return json.loads(_core.default_config_json(profile))


def validate_config(config):
    """Fills unset fields and validates; raises ConfigError on bad values."""
    return json.loads(_core.validate_config_json(json.dumps(config)))


def suite(name, profile="desk"):
    """A shipped suite (or suite/config JSON path) resolved to a dict."""
    return json.loads(_core.suite_json(name, profile))


def run(config, out_dir=""):
    """Trains one run. Returns metrics as (step, metric, value) tuples plus run status."""
    return _core.run_json(json.dumps(config), str(out_dir))
