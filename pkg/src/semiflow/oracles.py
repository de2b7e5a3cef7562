"""Reference solutions kept independent of the main solvers.

Closed forms (heat spectral sums), a classical RK4 march, the epsilon-lifted
maximal-solution construction for scalar ODEs, a forward-Euler p-Laplace march
on a finer grid, and a coordinate-descent minimiser of the p-Laplace resolvent
energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import Trajectory
from .errors import GeometryError
from .grid import Boundary, Geometry, GridFunction, Norm


# --------------------------------------------------------------------------
# heat equation
# --------------------------------------------------------------------------

def heat_lambda1(length: float) -> float:
    """First Dirichlet eigenvalue ``(pi / l)^2`` of ``-d^2/dx^2`` on ``[0, l]``."""
    return (math.pi / length) ** 2


def heat_spectral(x0_coeffs: Sequence[tuple[int, float]], length: float, t: float,
                  geometry: Geometry, norm_tag=Norm.SUP) -> GridFunction:
    """``sum_k c_k exp(-(k pi / l)^2 t) sin(k pi x / l)`` sampled on a 1D grid."""
    if geometry.dim != 1:
        raise GeometryError("heat_spectral samples a 1D grid")
    x = geometry.axis(0)
    vals = np.zeros_like(x)
    for k, c in x0_coeffs:
        vals += c * math.exp(-(k * math.pi / length) ** 2 * t) * np.sin(k * math.pi * x / length)
    vals[[0, -1]] = 0.0
    return GridFunction(vals, geometry, Boundary.DIRICHLET_ZERO, norm_tag)


# --------------------------------------------------------------------------
# scalar ODEs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ScalarTrajectory:
    times: np.ndarray
    values: np.ndarray
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("times and values must be matching 1D sequences")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def final(self) -> float:
        return float(self.values[-1])


def rk4_scalar(rhs: Callable[[float], float], x0: float, T: float, steps: int,
               ceiling: float = 1e12) -> ScalarTrajectory:
    """Classical RK4 for the autonomous ODE ``x' = rhs(x)``.

    Stops early (``truncated=True``) once the value leaves ``[-ceiling, ceiling]``
    or stops being finite.
    """
    h = T / steps
    xs = [float(x0)]
    x = float(x0)
    for _ in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not math.isfinite(x) or abs(x) > ceiling:
            return ScalarTrajectory(h * np.arange(len(xs)), xs, truncated=True)
        xs.append(x)
    return ScalarTrajectory(h * np.arange(steps + 1), xs)


def perron_max_solution(omega: Callable, x0: float, T: float,
                        eps_schedule: Sequence[float] = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5),
                        steps: int = 2000, startup_substeps: int = 4096) -> ScalarTrajectory:
    """Maximal solution of ``x' = omega(x)``, ``x(0) = x0`` as a limit of lifted problems.

    Each ``eps`` solves ``y' = omega(y) + eps``, ``y(0) = x0 + eps``.  The lifted
    solutions decrease pointwise as ``eps`` decreases (checked); the last one is
    returned, with the gap to its predecessor in ``meta["richardson_gap"]``.
    The first of the ``steps`` output intervals is integrated with
    ``startup_substeps`` RK4 substeps, since ``omega`` may be non-smooth at 0.
    """
    eps = [float(e) for e in eps_schedule]
    if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_schedule must be positive and strictly decreasing")

    h = T / steps

    def lifted(e):
        rhs = lambda y: float(omega(max(y, 0.0))) + e  # noqa: E731
        head = rk4_scalar(rhs, x0 + e, h, startup_substeps)
        if head.truncated:
            return ScalarTrajectory([0.0], [x0 + e], True)
        if steps == 1:
            return ScalarTrajectory([0.0, h], [x0 + e, head.final])
        tail = rk4_scalar(rhs, head.final, T - h, steps - 1)
        return ScalarTrajectory(h * np.arange(tail.values.size + 1),
                                np.concatenate(([x0 + e], tail.values)), tail.truncated)

    runs = [lifted(e) for e in eps]
    truncated = any(r.truncated for r in runs)
    n = min(r.values.size for r in runs)
    for prev, cur in zip(runs, runs[1:]):
        if np.any(cur.values[:n] > prev.values[:n] + 1e-12 * np.maximum(1.0, np.abs(prev.values[:n]))):
            raise AssertionError("lifted solutions are not monotone in eps")
    last = runs[-1]
    gap = float(np.max(np.abs(runs[-2].values[:n] - last.values[:n]))) if len(runs) > 1 else math.nan
    return ScalarTrajectory(last.times[:n], last.values[:n], truncated,
                            {"eps": eps, "richardson_gap": gap,
                             "finals": [float(r.values[n - 1]) for r in runs]})


@dataclass(frozen=True)
class ComparisonResult:
    ok: bool
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.ok


def comparison_check(u: ScalarTrajectory, omega, x_max: ScalarTrajectory,
                     tol: float = 1e-9) -> ComparisonResult:
    """``u <= x_max + tol`` pointwise on a shared grid; the witness is ``(t, u, x_max)``."""
    if u.times.shape != x_max.times.shape or not np.allclose(u.times, x_max.times, rtol=0, atol=1e-12):
        raise GeometryError("comparison needs a shared time grid")
    excess = u.values - x_max.values
    k = int(np.argmax(excess))
    if excess[k] > tol:
        return ComparisonResult(False, (float(u.times[k]), float(u.values[k]), float(x_max.values[k])))
    return ComparisonResult(True, None)


# --------------------------------------------------------------------------
# p-Laplacian references
# --------------------------------------------------------------------------

def _phi(s, p):
    return np.abs(s) ** (p - 2) * s


def fine_explicit_plaplace(spec, f: Callable, x0: Callable, T: float,
                           out_times: Sequence[float] | None = None, refine: int = 4,
                           min_dt: float = 1e-10) -> Trajectory:
    """Forward-Euler flux-form march of ``u_t = (|u_x|^{p-2} u_x)_x + f(x, u)``.

    Runs on a grid ``refine`` times finer than ``spec``.  The step obeys
    ``dt <= dx^2 / (2 (p-1) max|Du|^{p-2} + 1)`` and is recomputed every step.
    States are returned at ``out_times`` (default ``[0, T]``) restricted to the
    coarse nodes.  If the restriction pushes ``dt`` below ``min_dt`` the march
    stops and the trajectory is flagged in ``step_meta``.
    """
    if refine < 4:
        raise ValueError("the reference grid must be at least 4x finer")
    p = float(spec.p)
    coarse = Geometry.interval(spec.length, spec.interior + 2)
    cells = (spec.interior + 1) * refine
    x = np.linspace(0.0, spec.length, cells + 1)
    dx = x[1] - x[0]
    u = np.asarray(x0(x), dtype=float) * np.ones_like(x)
    u[[0, -1]] = 0.0
    outs = sorted(set([0.0, float(T)] if out_times is None else [0.0] + [float(v) for v in out_times]))

    def coarse_state(vals):
        return GridFunction(vals[::refine].copy(), coarse, Boundary.DIRICHLET_ZERO)

    def forcing(vals):
        fv = np.asarray(f(x, vals), dtype=float) * np.ones_like(x)
        fv[[0, -1]] = 0.0
        return fv

    times, states, forcings, meta = [0.0], [coarse_state(u)], [coarse_state(forcing(u))], [{}]
    t, steps = 0.0, 0
    for target in outs[1:]:
        while t < target - 1e-15:
            du = np.diff(u) / dx
            dt = dx * dx / (2.0 * (p - 1.0) * float(np.max(np.abs(du) ** (p - 2))) + 1.0)
            if dt < min_dt:
                meta[-1] = {**meta[-1], "aborted": True, "dt": dt}
                return Trajectory(times, states, forcings, meta)
            dt = min(dt, target - t)
            flux = _phi(du, p)
            rate = np.zeros_like(u)
            rate[1:-1] = (flux[1:] - flux[:-1]) / dx
            u = u + dt * (rate + forcing(u))
            u[[0, -1]] = 0.0
            t += dt
            steps += 1
        t = target
        times.append(t)
        states.append(coarse_state(u))
        forcings.append(coarse_state(forcing(u)))
        meta.append({"steps": steps})
    return Trajectory(times, states, forcings, meta)


def plaplace_energy(u: np.ndarray, g: np.ndarray, lam: float, p: float, h: float) -> float:
    """``sum h (u - g)^2 / 2 + lam sum h |Du|^p / p`` over interior nodes and all edges."""
    du = np.diff(u) / h
    return float(h * (0.5 * np.sum((u[1:-1] - g[1:-1]) ** 2) + lam / p * np.sum(np.abs(du) ** p)))


def plaplace_energy_min(p: float, length: float, lam: float, g: np.ndarray,
                        tol: float = 1e-12, max_sweeps: int = 100000) -> np.ndarray:
    """Minimise the resolvent energy by exact coordinate descent (Brent per node).

    ``g`` holds all nodes including the two zero boundary values.
    """
    g = np.asarray(g, dtype=float)
    n = g.size
    h = length / (n - 1)
    u = g.copy()
    u[[0, -1]] = 0.0

    def dE(i, ui):
        left = _phi((ui - u[i - 1]) / h, p)
        right = _phi((u[i + 1] - ui) / h, p)
        return h * (ui - g[i]) + lam * (left - right)

    for _ in range(max_sweeps):
        change = 0.0
        for i in range(1, n - 1):
            lo, hi = u[i] - 1.0, u[i] + 1.0
            while dE(i, lo) > 0:
                lo -= 2.0 * (hi - lo)
            while dE(i, hi) < 0:
                hi += 2.0 * (hi - lo)
            new = brentq(lambda s: dE(i, s), lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps)
            change = max(change, abs(new - u[i]))
            u[i] = new
        if change < tol:
            break
    return u


__all__ = [
    "ComparisonResult", "ScalarTrajectory", "comparison_check", "fine_explicit_plaplace",
    "heat_lambda1", "heat_spectral", "perron_max_solution", "plaplace_energy",
    "plaplace_energy_min", "rk4_scalar",
]
