"""Error types raised by fusionkd services.

The CLI maps each family to an exit status (see ``fusionkd.main``).
"""

from __future__ import annotations


class FusionKDError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 3


class ConfigError(FusionKDError, ValueError):
    """A configuration value is missing, unknown or out of range."""

    exit_code = 1


class DataError(FusionKDError, ValueError):
    """Input data is malformed or inconsistent with the run."""

    exit_code = 2


class NumericError(FusionKDError, ArithmeticError):
    """A computation produced or received a non-finite value."""

    exit_code = 3
