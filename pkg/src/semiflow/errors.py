"""Exception hierarchy shared by the solvers, checkers and the CLI."""

from __future__ import annotations


class SemiflowError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(SemiflowError, ValueError):
    """States that do not share a grid, norm or boundary convention."""


class SolverError(SemiflowError, RuntimeError):
    """An inner solver (Newton, CG, Picard) failed to reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), history=None):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual
        self.history = list(history or [])


class BlowUpError(SemiflowError, RuntimeError):
    """The state norm crossed the configured ceiling; the partial path is kept."""

    def __init__(self, message: str, trajectory=None, time: float = float("nan")):
        super().__init__(message)
        self.trajectory = trajectory
        self.time = time


class ScenarioError(SemiflowError, ValueError):
    """Malformed or inconsistent scenario file."""
