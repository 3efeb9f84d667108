"""Error hierarchy for the pricing game solvers and the experiment harness."""

from typing import Any, Dict, Optional


class GameError(Exception):
    """Base class for every error raised by the stackelberg app."""


class DimensionMismatchError(GameError, ValueError):
    """Array shapes disagree with the scenario dimensions."""


class FollowerDivergenceError(GameError):
    """The follower objective became non-finite.

    `diagnostics` holds a summary of the iterate at the failing step.
    """

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoReflectionDemandError(GameError):
    """Every shrinkage norm is zero, so no price attracts any module."""


class SweepAbortedError(GameError):
    """Too many Monte-Carlo trials failed at one sweep point."""


class OutputError(GameError):
    """A result file could not be written."""


class ConfigError(GameError):
    """A configuration file is missing or malformed."""
