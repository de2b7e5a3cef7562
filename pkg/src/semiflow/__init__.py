"""Resolvent-based solvers and invariance checks for u' = -A u + f(u)."""

from .core import (
    CallableOracle, Picard, ResolventOracle, Trajectory, benilan_residual, bracket,
    crandall_liggett, implicit_euler_step, integral_inequality_residual, shifted, solve_integral,
    yosida,
)
from .errors import BlowUpError, GeometryError, ScenarioError, SemiflowError, SolverError
from .grid import Boundary, Geometry, GridFunction, Norm

__version__ = "0.1.0"

__all__ = [
    "BlowUpError", "Boundary", "CallableOracle", "Geometry", "GeometryError", "GridFunction",
    "Norm", "Picard", "ResolventOracle", "ScenarioError", "SemiflowError", "SolverError",
    "Trajectory", "benilan_residual", "bracket", "crandall_liggett", "implicit_euler_step",
    "integral_inequality_residual", "shifted", "solve_integral", "yosida",
]
