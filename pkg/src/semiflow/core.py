"""Semi-inner products, resolvent time stepping and integral-solution checks.

Everything here is written against :class:`ResolventOracle`, i.e. an operator
known only through its resolvent ``J_lam = (I + lam A)^{-1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BlowUpError, GeometryError, SolverError
from .grid import Boundary, Geometry, GridFunction, Norm, sup_distance, vector_norm

StateMap = Callable[[GridFunction], GridFunction]

ARGMAX_TOL = 1e-12
DEFAULT_CEILING = 1e8


# --------------------------------------------------------------------------
# semi-inner products
# --------------------------------------------------------------------------

def bracket_values(x: np.ndarray, y: np.ndarray, geometry: Geometry,
                   norm_tag: Norm, side: str = "plus") -> float:
    """``[x, y]_+`` or ``[x, y]_-`` for raw value arrays."""
    if side not in ("plus", "minus"):
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")
    sgn = 1.0 if side == "plus" else -1.0
    xnorm = vector_norm(x, geometry, norm_tag)
    if xnorm == 0.0:
        return sgn * vector_norm(y, geometry, norm_tag)
    if Norm(norm_tag) is Norm.L2:
        return float(np.dot(geometry.weights * x, y)) / xnorm
    active = np.abs(x) >= xnorm - ARGMAX_TOL
    candidates = np.sign(x[active]) * y[active]
    return float(candidates.max() if side == "plus" else candidates.min())


def bracket(x: GridFunction, y: GridFunction, side: str = "plus") -> float:
    """Right (``plus``) or left (``minus``) semi-inner product of the state norm.

    This is the one-sided derivative of ``h -> ||x + h y||`` at ``h = 0``:
    ``<x, y>/||x||`` for the discrete L2 norm, and the max (min) of
    ``sign(x_i) y_i`` over the nodes where ``|x_i|`` attains the sup norm.
    """
    x.check_compatible(y)
    return bracket_values(x.values, y.values, x.geometry, x.norm_tag, side)


# --------------------------------------------------------------------------
# operators through their resolvents
# --------------------------------------------------------------------------

class ResolventOracle:
    """An (alpha-)m-accretive operator presented by its resolvent.

    Subclasses implement :meth:`_solve` on raw value arrays and may override
    :meth:`_apply`, :meth:`in_domain` and :meth:`project`.  States handed to
    :meth:`resolve` must live on :attr:`geometry`.
    """

    alpha: float = 0.0
    lambda_max: float = math.inf
    geometry: Geometry
    boundary: Boundary = Boundary.NONE
    norm_tag: Norm = Norm.SUP
    linear: bool = False
    name: str = "operator"

    # -- subclass hooks ----------------------------------------------------
    def _solve(self, lam: float, g: np.ndarray) -> tuple[np.ndarray, dict]:
        raise NotImplementedError

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def has_apply(self) -> bool:
        return type(self)._apply is not ResolventOracle._apply

    # -- public surface ----------------------------------------------------
    def state(self, values) -> GridFunction:
        return GridFunction(values, self.geometry, self.boundary, self.norm_tag)

    def check_lambda(self, lam: float) -> None:
        if not lam >= 0.0:
            raise ValueError(f"resolvent parameter must be nonnegative, got {lam}")
        if lam > self.lambda_max * (1 + 1e-12):
            raise ValueError(f"lambda={lam} exceeds lambda_max={self.lambda_max}")
        if lam * self.alpha >= 1.0:
            raise ValueError(f"lambda*alpha = {lam * self.alpha} must stay below 1")

    def resolve_info(self, lam: float, g: GridFunction) -> tuple[GridFunction, dict]:
        self.check_lambda(lam)
        if g.geometry != self.geometry:
            raise GeometryError(f"{self.name}: state is on a different geometry")
        if lam == 0.0:
            return g, {"iterations": 0, "residual": 0.0}
        values, info = self._solve(lam, g.values)
        return GridFunction(values, self.geometry, self.boundary, g.norm_tag), info

    def resolve(self, lam: float, g: GridFunction) -> GridFunction:
        return self.resolve_info(lam, g)[0]

    def apply(self, x: GridFunction) -> GridFunction:
        """Direct evaluation of ``A x`` (boundary entries follow :meth:`project`)."""
        if not self.has_apply:
            raise NotImplementedError(f"{self.name} has no direct apply")
        return GridFunction(self._apply(x.values), self.geometry, Boundary.NONE, x.norm_tag)

    def in_domain(self, x: GridFunction, tol: float = 1e-12) -> bool:
        return x.geometry == self.geometry

    def project(self, values) -> GridFunction:
        """Nearest state satisfying the boundary convention (used for sampling)."""
        return self.state(np.asarray(values, dtype=float))

    def velocity(self, x: GridFunction, fx: GridFunction) -> GridFunction:
        """``-A x + f(x)`` as the time derivative of a strong solution through ``x``."""
        return fx - self.apply(x).retag(boundary=fx.boundary)


class CallableOracle(ResolventOracle):
    """Wrap plain callables ``resolve(lam, values)`` and optional ``apply(values)``."""

    def __init__(self, geometry: Geometry, resolve, apply=None, alpha: float = 0.0,
                 lambda_max: float = math.inf, norm_tag: Norm = Norm.SUP,
                 boundary: Boundary = Boundary.NONE, linear: bool = False,
                 name: str = "callable"):
        self.geometry = geometry
        self._resolve_fn = resolve
        self._apply_fn = apply
        self.alpha = float(alpha)
        self.lambda_max = float(lambda_max)
        self.norm_tag = Norm(norm_tag)
        self.boundary = Boundary(boundary)
        self.linear = linear
        self.name = name

    def _solve(self, lam, g):
        return np.asarray(self._resolve_fn(lam, g), dtype=float), {"iterations": 0}

    @property
    def has_apply(self) -> bool:
        return self._apply_fn is not None

    def _apply(self, x):
        if self._apply_fn is None:
            raise NotImplementedError
        return np.asarray(self._apply_fn(x), dtype=float)


class ShiftedOracle(ResolventOracle):
    """``B = A + alpha I`` for an alpha-m-accretive ``A``; ``B`` is m-accretive.

    ``J^B_lam(x) = J^A_mu(x / (1 + lam alpha))`` with ``mu = lam / (1 + lam alpha)``.
    """

    def __init__(self, inner: ResolventOracle):
        self.inner = inner
        self.shift = float(inner.alpha)
        self.alpha = 0.0
        self.lambda_max = math.inf
        self.geometry = inner.geometry
        self.boundary = inner.boundary
        self.norm_tag = inner.norm_tag
        self.linear = inner.linear
        self.name = f"shifted({inner.name})"

    def _solve(self, lam, g):
        scale = 1.0 + lam * self.shift
        mu = lam / scale
        return self.inner._solve(mu, g / scale)

    @property
    def has_apply(self) -> bool:
        return self.inner.has_apply

    def _apply(self, x):
        return self.inner._apply(x) + self.shift * x

    def in_domain(self, x, tol=1e-12):
        return self.inner.in_domain(x, tol)

    def project(self, values):
        return self.inner.project(values)


def shifted(op: ResolventOracle) -> ResolventOracle:
    """m-accretive version of ``op`` (identity when ``op.alpha <= 0``)."""
    return ShiftedOracle(op) if op.alpha > 0 else op


def yosida(op: ResolventOracle, lam: float, x: GridFunction) -> GridFunction:
    """Yosida approximation ``(x - J_lam x) / lam``; lies in ``A J_lam x``."""
    if not lam > 0:
        raise ValueError("Yosida approximation needs lam > 0")
    return (x - op.resolve(lam, x).retag(boundary=x.boundary)) * (1.0 / lam)


# --------------------------------------------------------------------------
# time stepping
# --------------------------------------------------------------------------

def implicit_euler_step(op: ResolventOracle, h: float, u_prev: GridFunction,
                        v: GridFunction) -> GridFunction:
    """Unique ``u`` with ``u + h A u = u_prev + h v``."""
    if h > op.lambda_max * (1 + 1e-12):
        raise ValueError(f"step {h} exceeds lambda_max={op.lambda_max}")
    return op.resolve(h, u_prev + h * v)


def crandall_liggett(op: ResolventOracle, x: GridFunction, t: float, n: int) -> GridFunction:
    """``J_{t/n}^n x``, the n-th product-formula approximation of ``S(t) x``."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return x
    lam = t / n
    if lam > op.lambda_max * (1 + 1e-12):
        raise ValueError(f"t/n = {lam} exceeds lambda_max={op.lambda_max}")
    u = x
    for _ in range(n):
        u = op.resolve(lam, u)
    return u


@dataclass(frozen=True)
class Picard:
    """Opt-in fixed-point loop making each step fully implicit in ``f``."""

    max_iter: int = 50
    tol: float = 1e-12


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: tuple
    forcings: tuple
    step_meta: tuple = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "forcings", tuple(self.forcings))
        object.__setattr__(self, "step_meta", tuple(self.step_meta))
        if times.ndim != 1 or times.size == 0:
            raise ValueError("a trajectory needs at least one time")
        if times[0] != 0.0:
            raise ValueError("trajectory times start at 0")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")
        if len(self.states) != times.size or len(self.forcings) != times.size:
            raise ValueError("states/forcings must match the time grid")

    def __len__(self):
        return self.times.size

    @property
    def final(self) -> GridFunction:
        return self.states[-1]

    def values(self) -> np.ndarray:
        return np.stack([s.values for s in self.states])

    def state_at(self, t: float) -> GridFunction:
        k = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[k], t, rel_tol=1e-9, abs_tol=1e-12):
            raise KeyError(f"time {t} is not on the trajectory grid")
        return self.states[k]


def _as_state(value, like: GridFunction) -> GridFunction:
    if isinstance(value, GridFunction):
        return value
    return like.with_values(value)


def solve_integral(op: ResolventOracle, f: StateMap, x0: GridFunction, T: float,
                   steps: int, picard: Picard | None = None,
                   ceiling: float = DEFAULT_CEILING) -> Trajectory:
    """March ``u' in -A u + f(u)`` on a uniform grid of ``steps`` steps.

    Default is semi-implicit: ``u_k = J_h(u_{k-1} + h f(u_{k-1}))``.  With a
    :class:`Picard` setting each step iterates ``f`` at the new state until the
    sup distance between iterates drops below ``picard.tol``; on failure the
    semi-implicit value is kept and the step is flagged in ``step_meta``.

    Quasi-accretive ``op`` (``alpha > 0``) is marched as ``B = A + alpha I``
    with forcing ``alpha u + f(u)``.  :class:`BlowUpError` (carrying the
    partial trajectory) is raised once a state norm exceeds ``ceiling``.
    """
    if steps < 1 or not T > 0:
        raise ValueError("need T > 0 and steps >= 1")
    h = T / steps
    shift = op.alpha if op.alpha > 0 else 0.0
    B = shifted(op)
    if h > B.lambda_max * (1 + 1e-12):
        raise ValueError(f"time step {h} exceeds lambda_max={B.lambda_max}")

    def forcing(u):
        return _as_state(f(u), u)

    def g(u, fu):
        return fu + shift * u if shift else fu

    u = x0
    fu = forcing(u)
    times, states, forcings, meta = [0.0], [u], [fu], []
    for k in range(1, steps + 1):
        rhs = u + h * g(u, fu)
        u_new, info = B.resolve_info(h, rhs)
        step = {"resolve": info}
        if picard is not None:
            cur, converged, dist = u_new, False, math.inf
            for j in range(1, picard.max_iter + 1):
                nxt = B.resolve(h, u + h * g(cur, forcing(cur)))
                dist = sup_distance(nxt, cur)
                cur = nxt
                if dist < picard.tol:
                    converged = True
                    break
            step.update(picard_iterations=j, picard_converged=converged,
                        picard_distance=dist)
            if converged:
                u_new = cur
        u = u_new
        fu = forcing(u)
        times.append(k * h)
        states.append(u)
        forcings.append(fu)
        meta.append(step)
        if u.norm() > ceiling:
            partial = Trajectory(times, states, forcings, [{}] + meta)
            raise BlowUpError(
                f"state norm {u.norm():.3e} exceeded ceiling {ceiling:.1e} at t={k * h:.6g}",
                trajectory=partial, time=k * h)
    return Trajectory(times, states, forcings, [{}] + meta)


# --------------------------------------------------------------------------
# integral-solution certificates
# --------------------------------------------------------------------------

def _cumtrapz(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(t))
    return out


def _max_forward_increase(g: np.ndarray) -> float:
    """``max_{s <= t} g(t) - g(s)`` over a sampled sequence."""
    return float(np.max(g - np.minimum.accumulate(g)))


def _check_same_grid(u1: Trajectory, u2: Trajectory) -> None:
    if u1.times.shape != u2.times.shape or not np.allclose(u1.times, u2.times,
                                                           rtol=0, atol=1e-12):
        raise GeometryError("trajectories are sampled on different time grids")
    u1.states[0].check_compatible(u2.states[0])


def benilan_residual(u1: Trajectory, u2: Trajectory, alpha: float = 0.0) -> float:
    """Largest violation of the Benilan stability inequality over grid pairs.

    Returns ``max_{s<=t} e^{-t a}|u1-u2|(t) - e^{-s a}|u1-u2|(s)
    - int_s^t e^{-z a}|w1-w2| dz`` with trapezoid quadrature; ``s = t`` makes
    the result nonnegative, so "no violation" reads as ``0``.
    """
    _check_same_grid(u1, u2)
    t = u1.times
    damp = np.exp(-alpha * t)
    gap = np.array([(a - b).norm() for a, b in zip(u1.states, u2.states)])
    wgap = np.array([(a - b).norm() for a, b in zip(u1.forcings, u2.forcings)])
    return _max_forward_increase(damp * gap - _cumtrapz(damp * wgap, t))


def integral_inequality_residual(u: Trajectory, graph_pairs: Sequence,
                                 alpha: float = 0.0) -> float:
    """Largest violation of the integral-solution inequality over sampled graph pairs.

    For each ``(y, v)`` with ``v`` in ``A y`` checks
    ``e^{-t a}|u(t)-y| <= e^{-s a}|u(s)-y| + int_s^t e^{-z a}[u(z)-y, w(z)-v]_+ dz``.
    """
    t = u.times
    damp = np.exp(-alpha * t)
    worst = 0.0
    for y, v in graph_pairs:
        u.states[0].check_compatible(y)
        u.forcings[0].check_compatible(v)
        dist = np.array([(s - y).norm() for s in u.states])
        integrand = np.array([bracket(s - y, w - v, "plus")
                              for s, w in zip(u.states, u.forcings)])
        worst = max(worst, _max_forward_increase(damp * dist - _cumtrapz(damp * integrand, t)))
    return worst


__all__ = [
    "ARGMAX_TOL", "DEFAULT_CEILING", "CallableOracle", "Picard", "ResolventOracle",
    "ShiftedOracle", "SolverError", "StateMap", "Trajectory", "benilan_residual",
    "bracket", "bracket_values", "crandall_liggett", "implicit_euler_step",
    "integral_inequality_residual", "shifted", "solve_integral", "yosida",
]
