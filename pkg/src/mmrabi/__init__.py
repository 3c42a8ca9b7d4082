"""Emitter coupled to a multi-mode cavity: analytic, exact and MPS engines.

Units: hbar = omega_c = 1, cavity length 1, emitter at x = 0.
"""
from .errors import (ConfigError, ConvergenceError, MMRabiError, ParameterError, PrecisionError,
                     ResourceError, TruncationBudgetError)
from .model import UNITS, EmitterKind, ModelParams, build_terms, light_speed, validate_cutoffs

__version__ = "0.1.0"

__all__ = [
    "UNITS", "EmitterKind", "ModelParams", "build_terms", "light_speed", "validate_cutoffs",
    "MMRabiError", "ParameterError", "ConfigError", "ResourceError", "ConvergenceError",
    "TruncationBudgetError", "PrecisionError",
]
