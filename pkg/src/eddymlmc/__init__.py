"""Multilevel Monte Carlo for a stochastic 2D eddy-current problem."""

from .model import (
    MU0,
    ConfigurationError,
    ModelParams,
    ParameterDistributions,
    ParamSample,
    apply_sample,
    default_params,
    draw_sample,
    nominal_params,
)

__all__ = [
    "MU0",
    "ConfigurationError",
    "ModelParams",
    "ParameterDistributions",
    "ParamSample",
    "apply_sample",
    "default_params",
    "draw_sample",
    "nominal_params",
]

__version__ = "0.1.0"
