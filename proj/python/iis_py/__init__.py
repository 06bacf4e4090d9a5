"""Inverse iterative simulation for contaminant source identification."""

import json

from ._iis import (
    ConfigError,
    NumericalError,
    ShapeError,
    es_update,
    generate_case,
    kalman_gain,
    kl_basis,
    log_likelihoods,
    preset_json,
    report,
    run,
    run_iis_linear,
    simulate,
    stopping_check,
)


def preset(name):
    """Preset configuration as a dict; pass it back through ``json.dumps``."""
    return json.loads(preset_json(name))


__all__ = [
    "ConfigError",
    "NumericalError",
    "ShapeError",
    "es_update",
    "generate_case",
    "kalman_gain",
    "kl_basis",
    "log_likelihoods",
    "preset",
    "preset_json",
    "report",
    "run",
    "run_iis_linear",
    "simulate",
    "stopping_check",
]
