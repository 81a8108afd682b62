"""Optimal stopping of a GBM against its running maximum with reward (F(S)/X - 1)^+."""

from .boundary import BoundaryCurve, Controls, curve_family, solve_with_asymptote
from .core import ModelParams, build_params
from .errors import (
    AssumptionViolated,
    ConfigError,
    DomainError,
    InvalidParam,
    MaxstopError,
    ShootingFailure,
)
from .value import ValueSurface, eval_w, vi_report

__all__ = [
    "AssumptionViolated",
    "BoundaryCurve",
    "ConfigError",
    "Controls",
    "DomainError",
    "InvalidParam",
    "MaxstopError",
    "ModelParams",
    "ShootingFailure",
    "ValueSurface",
    "build_params",
    "curve_family",
    "eval_w",
    "solve_with_asymptote",
    "vi_report",
]
