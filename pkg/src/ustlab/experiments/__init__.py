"""Sweeps, exponent fits, oracle batteries and the command-line interface."""

from .config import ConfigError, ResourceGuardError, SweepConfig
from .fit import FitResult, fit_exponents
from .oracles import oracle_check
from .sweep import run_sweep

__all__ = [
    "ConfigError",
    "FitResult",
    "ResourceGuardError",
    "SweepConfig",
    "fit_exponents",
    "oracle_check",
    "run_sweep",
]
