"""Concrete resolvents: Laplacian, 1D p-Laplacian, transport with birth, clock lift.

All operators use the sup norm as their native norm and act on states that
include boundary nodes.  Discretisations are monotone (M-matrix or monotone
flux), so discrete comparison principles hold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

from .core import ResolventOracle, yosida
from .errors import GeometryError, SolverError
from .grid import Boundary, Geometry, GridFunction, Norm

JACOBIAN_FLOOR = 1e-12


# --------------------------------------------------------------------------
# linear algebra helpers
# --------------------------------------------------------------------------

def thomas(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = diag.size
    c = np.empty(n)
    d = np.empty(n)
    c[0] = upper[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / denom if i < n - 1 else 0.0
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom
    x = np.empty(n)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def conjugate_gradient(matvec, b: np.ndarray, x0: np.ndarray | None = None,
                       tol: float = 1e-13, max_iter: int = 1000):
    """Plain CG for a symmetric positive definite ``matvec``.

    Stops when ``|r|_2 <= tol * |b|_2``.  Returns ``(x, iterations, residual)``.
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - matvec(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    p = r.copy()
    rr = float(r @ r)
    for k in range(1, max_iter + 1):
        if math.sqrt(rr) <= tol * bnorm:
            return x, k - 1, math.sqrt(rr) / bnorm
        Ap = matvec(p)
        step = rr / float(p @ Ap)
        x += step * p
        r -= step * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    res = math.sqrt(rr) / bnorm
    if res <= tol:
        return x, max_iter, res
    raise SolverError("conjugate gradient did not converge", residual=res)


# --------------------------------------------------------------------------
# trivial operators
# --------------------------------------------------------------------------

class ZeroOperator(ResolventOracle):
    """``A = 0``: every resolvent is the identity."""

    linear = True
    name = "zero"

    def __init__(self, geometry: Geometry, boundary=Boundary.NONE, norm_tag=Norm.SUP):
        self.geometry = geometry
        self.boundary = Boundary(boundary)
        self.norm_tag = Norm(norm_tag)

    def _solve(self, lam, g):
        return g.copy(), {"iterations": 0, "residual": 0.0}

    def _apply(self, x):
        return np.zeros_like(x)


class ScalarLinear(ResolventOracle):
    """``A u = c u`` on a coefficient vector; quasi-accretive with ``alpha = max(-c, 0)``."""

    linear = True

    def __init__(self, coeff: float = 1.0, n: int = 1, norm_tag=Norm.SUP):
        self.coeff = float(coeff)
        self.geometry = Geometry.vector(n)
        self.norm_tag = Norm(norm_tag)
        self.alpha = max(-self.coeff, 0.0)
        self.lambda_max = math.inf if self.alpha == 0 else 0.999 / self.alpha
        self.name = f"scalar({self.coeff:g})"

    def _solve(self, lam, g):
        return g / (1.0 + lam * self.coeff), {"iterations": 0, "residual": 0.0}

    def _apply(self, x):
        return self.coeff * x


# --------------------------------------------------------------------------
# Laplacian on an interval or rectangle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LaplaceSpec:
    dim: int
    lengths: tuple
    nodes: tuple
    solver: str = "auto"
    cg_max_iter: int = 2000
    cg_tol: float = 1e-13

    def __post_init__(self):
        if self.solver not in ("auto", "thomas", "cg"):
            raise ValueError(f"unknown linear solver {self.solver!r}")
        if self.solver == "thomas" and self.dim != 1:
            raise ValueError("the Thomas solver is one-dimensional")

    @property
    def geometry(self) -> Geometry:
        return Geometry(self.dim, tuple(self.lengths), tuple(self.nodes))


class LaplaceOperator(ResolventOracle):
    """``A u = -Delta_h u`` (centered differences) with zero Dirichlet data."""

    boundary = Boundary.DIRICHLET_ZERO
    linear = True

    def __init__(self, spec: LaplaceSpec, norm_tag=Norm.SUP):
        self.spec = spec
        self.geometry = spec.geometry
        self.norm_tag = Norm(norm_tag)
        self.solver = spec.solver if spec.solver != "auto" else ("thomas" if spec.dim == 1 else "cg")
        self.inv_h2 = tuple(1.0 / h ** 2 for h in self.geometry.spacing)
        self.name = f"laplace{spec.dim}d"

    @classmethod
    def interval(cls, length: float, nodes: int, **kw) -> "LaplaceOperator":
        return cls(LaplaceSpec(1, (length,), (nodes,)), **kw)

    @classmethod
    def rectangle(cls, lengths, nodes, **kw) -> "LaplaceOperator":
        return cls(LaplaceSpec(2, tuple(lengths), tuple(nodes)), **kw)

    def _neg_laplacian_interior(self, full: np.ndarray) -> np.ndarray:
        if self.geometry.dim == 1:
            return (2 * full[1:-1] - full[:-2] - full[2:]) * self.inv_h2[0]
        out = (2 * full[1:-1, 1:-1] - full[:-2, 1:-1] - full[2:, 1:-1]) * self.inv_h2[0]
        out += (2 * full[1:-1, 1:-1] - full[1:-1, :-2] - full[1:-1, 2:]) * self.inv_h2[1]
        return out

    def _apply(self, x):
        full = x.reshape(self.geometry.shape)
        out = np.zeros(self.geometry.shape)
        out[(slice(1, -1),) * self.geometry.dim] = self._neg_laplacian_interior(full)
        return out.ravel()

    def _solve(self, lam, g):
        shape = self.geometry.shape
        rhs = g.reshape(shape)[(slice(1, -1),) * self.geometry.dim]
        out = np.zeros(shape)
        if self.solver == "thomas":
            m = rhs.size
            k = lam * self.inv_h2[0]
            off = np.full(m, -k)
            out[1:-1] = thomas(off, np.full(m, 1 + 2 * k), off, rhs)
            info = {"iterations": 1, "residual": 0.0}
        else:
            inner_shape = rhs.shape

            def matvec(v):
                full = np.zeros(shape)
                full[(slice(1, -1),) * self.geometry.dim] = v.reshape(inner_shape)
                return (v.reshape(inner_shape) + lam * self._neg_laplacian_interior(full)).ravel()

            sol, iters, res = conjugate_gradient(matvec, rhs.ravel(), rhs.ravel(),
                                                 tol=self.spec.cg_tol,
                                                 max_iter=self.spec.cg_max_iter)
            out[(slice(1, -1),) * self.geometry.dim] = sol.reshape(inner_shape)
            info = {"iterations": iters, "residual": res}
        return out.ravel(), info

    def in_domain(self, x, tol=1e-12):
        return x.geometry == self.geometry and bool(
            np.all(np.abs(x.values[self.geometry.boundary_mask]) <= tol))

    def project(self, values):
        vals = np.array(values, dtype=float).ravel()
        vals[self.geometry.boundary_mask] = 0.0
        return self.state(vals)

    def eigenvalue(self, modes) -> float:
        """Discrete eigenvalue of ``-Delta_h`` for the product sine with the given modes."""
        total = 0.0
        for k, h, length in zip(modes, self.geometry.spacing, self.geometry.lengths):
            total += 2.0 / h ** 2 * (1.0 - math.cos(k * math.pi * h / length))
        return total

    @property
    def lambda1(self) -> float:
        return self.eigenvalue((1,) * self.geometry.dim)


def laplace_resolve(spec: LaplaceSpec, lam: float, g: GridFunction) -> GridFunction:
    return _laplace_for(spec, g.norm_tag).resolve(lam, g)


@lru_cache(maxsize=32)
def _laplace_for(spec: LaplaceSpec, norm_tag: Norm) -> LaplaceOperator:
    return LaplaceOperator(spec, norm_tag)


# --------------------------------------------------------------------------
# 1D p-Laplacian
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NewtonOptions:
    max_iter: int = 100
    abs_tol: float = 1e-10
    damping: bool = True

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")


@dataclass(frozen=True)
class PLaplaceSpec:
    p: float
    length: float
    interior: int
    newton: NewtonOptions = field(default_factory=NewtonOptions)

    def __post_init__(self):
        if not self.p >= 2:
            raise ValueError(f"p-Laplacian needs p >= 2, got {self.p}")
        if not self.length > 0:
            raise ValueError("length must be positive")
        if self.interior < 3:
            raise ValueError("need at least 3 interior nodes")

    @property
    def geometry(self) -> Geometry:
        return Geometry.interval(self.length, self.interior + 2)


class PLaplaceOperator(ResolventOracle):
    """``A u = -(|u'|^{p-2} u')'`` in flux form with zero Dirichlet data.

    The resolvent equation is the gradient of the strictly convex energy
    ``sum h (u_i - g_i)^2 / 2 + lam sum_edges h |D u|^p / p``; it is solved by
    damped Newton on the tridiagonal Jacobian.
    """

    boundary = Boundary.DIRICHLET_ZERO

    def __init__(self, spec: PLaplaceSpec, norm_tag=Norm.SUP):
        self.spec = spec
        self.p = float(spec.p)
        self.geometry = spec.geometry
        self.h = self.geometry.spacing[0]
        self.norm_tag = Norm(norm_tag)
        self.linear = self.p == 2
        self.name = f"plaplace(p={self.p:g})"

    def phi(self, s: np.ndarray) -> np.ndarray:
        return np.abs(s) ** (self.p - 2) * s

    def dphi(self, s: np.ndarray) -> np.ndarray:
        return np.maximum((self.p - 1) * np.abs(s) ** (self.p - 2), JACOBIAN_FLOOR)

    def _flux_divergence(self, full: np.ndarray) -> np.ndarray:
        flux = self.phi(np.diff(full) / self.h)
        return -(flux[1:] - flux[:-1]) / self.h

    def _apply(self, x):
        out = np.zeros_like(x)
        out[1:-1] = self._flux_divergence(x)
        return out

    def residual(self, lam: float, u_int: np.ndarray, g_int: np.ndarray) -> np.ndarray:
        full = np.concatenate(([0.0], u_int, [0.0]))
        return u_int + lam * self._flux_divergence(full) - g_int

    def energy(self, lam: float, u: np.ndarray, g: np.ndarray) -> float:
        """Convex energy whose unique minimiser is ``J_lam g`` (full-grid values)."""
        du = np.diff(u) / self.h
        return float(self.h * (0.5 * np.sum((u[1:-1] - g[1:-1]) ** 2)
                               + lam / self.p * np.sum(np.abs(du) ** self.p)))

    def _solve(self, lam, g):
        opts = self.spec.newton
        h = self.h
        g_int = np.asarray(g, dtype=float)[1:-1]
        u = g_int.copy()
        F = self.residual(lam, u, g_int)
        res = float(np.max(np.abs(F)))
        history = [res]
        it = 0
        while res > opts.abs_tol:
            if it >= opts.max_iter:
                raise SolverError(f"{self.name}: Newton did not converge in {opts.max_iter} steps",
                                  residual=res, history=history)
            it += 1
            full = np.concatenate(([0.0], u, [0.0]))
            a = self.dphi(np.diff(full) / h) * (lam / h ** 2)
            diag = 1.0 + a[1:] + a[:-1]
            lower = -a[:-1]
            upper = -a[1:]
            delta = thomas(lower, diag, upper, -F)
            step = 1.0
            while True:
                trial = u + step * delta
                F_trial = self.residual(lam, trial, g_int)
                res_trial = float(np.max(np.abs(F_trial)))
                if res_trial < res or not opts.damping:
                    break
                step *= 0.5
                if step < 2.0 ** -40:
                    break
            if not res_trial < res:
                # no descent left: accept only if we sit at the roundoff floor
                flux = np.abs(self.phi(np.diff(full) / h)).max(initial=0.0)
                scale = max(np.abs(u).max(initial=0.0), np.abs(g_int).max(initial=0.0),
                            lam / h * flux, 1.0)
                if res <= 1e3 * np.finfo(float).eps * scale:
                    history.append(res)
                    break
                raise SolverError(f"{self.name}: damped Newton stalled", residual=res,
                                  history=history)
            u, F, res = trial, F_trial, res_trial
            history.append(res)
        out = np.zeros(self.geometry.size)
        out[1:-1] = u
        return out, {"iterations": it, "residual": res, "history": history}

    def in_domain(self, x, tol=1e-12):
        return x.geometry == self.geometry and abs(x.values[0]) <= tol and abs(x.values[-1]) <= tol

    def project(self, values):
        vals = np.array(values, dtype=float).ravel()
        vals[[0, -1]] = 0.0
        return self.state(vals)


def plaplace_resolve(spec: PLaplaceSpec, lam: float, g: GridFunction) -> GridFunction:
    return _plaplace_for(spec, g.norm_tag).resolve(lam, g)


@lru_cache(maxsize=32)
def _plaplace_for(spec: PLaplaceSpec, norm_tag: Norm) -> PLaplaceOperator:
    return PLaplaceOperator(spec, norm_tag)


# --------------------------------------------------------------------------
# transport with nonlocal birth condition
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TransportBirthSpec:
    horizon: float
    nodes: int
    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        if beta.size == 1:
            beta = np.full(self.nodes, float(beta[0]))
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if beta.size != self.nodes:
            raise ValueError("birth weights need one value per node")
        if np.any(beta < 0):
            raise ValueError("birth weights must be nonnegative")
        # a quadrature sum of exactly 1 can land one ulp below it
        if self.birth_integral >= 1.0 - 1e-12:
            raise ValueError(f"birth condition violated: integral of beta = {self.birth_integral:.6g} >= 1")

    @property
    def geometry(self) -> Geometry:
        return Geometry.interval(self.horizon, self.nodes)

    @property
    def birth_integral(self) -> float:
        return float(np.dot(self.geometry.weights, self.beta))

    @property
    def beta_l2_squared(self) -> float:
        return float(np.dot(self.geometry.weights, self.beta ** 2))


class TransportBirthOperator(ResolventOracle):
    """``A u = u'`` on ``[0, a]`` with ``u(0) = int beta u`` (implicit upwind).

    Native norm is sup with ``alpha = 0``; :attr:`l2_alpha` is the quasi-accretivity
    constant ``|beta|_2^2 / 2`` of the L2 realisation.
    """

    boundary = Boundary.NONLOCAL_BIRTH
    linear = True

    def __init__(self, spec: TransportBirthSpec, norm_tag=Norm.SUP):
        self.spec = spec
        self.geometry = spec.geometry
        self.norm_tag = Norm(norm_tag)
        self.dx = self.geometry.spacing[0]
        self.wbeta = self.geometry.weights * spec.beta
        self.l2_alpha = 0.5 * spec.beta_l2_squared
        self.name = "transport-birth"

    def closure_denominator(self, lam: float) -> float:
        r = (lam / self.dx) / (1.0 + lam / self.dx)
        e = r ** np.arange(self.geometry.size)
        return 1.0 - float(self.wbeta @ e)

    def _solve(self, lam, g):
        k = lam / self.dx
        r = k / (1.0 + k)
        s = 1.0 / (1.0 + k)
        n = self.geometry.size
        e = r ** np.arange(n)
        G = np.zeros(n)
        G[1:] = lfilter([s], [1.0, -r], g[1:])
        denom = 1.0 - float(self.wbeta @ e)
        if not denom >= 1.0 - self.spec.birth_integral - 1e-12:
            raise SolverError("birth closure denominator below its a-priori bound", residual=denom)
        u0 = float(self.wbeta @ G) / denom
        return u0 * e + G, {"iterations": 1, "residual": 0.0, "denominator": denom}

    def _apply(self, x):
        out = np.empty_like(x)
        out[1:] = np.diff(x) / self.dx
        out[0] = (x[1] - x[0]) / self.dx
        return out

    def birth_value(self, values: np.ndarray) -> float:
        """``u(0)`` forced by the closure given the values at positive ages."""
        return float(self.wbeta[1:] @ values[1:]) / (1.0 - self.wbeta[0])

    def in_domain(self, x, tol=1e-10):
        scale = max(1.0, x.norm())
        return x.geometry == self.geometry and abs(x.values[0] - float(self.wbeta @ x.values)) <= tol * scale

    def project(self, values):
        vals = np.array(values, dtype=float).ravel()
        vals[0] = self.birth_value(vals)
        return self.state(vals)

    def velocity(self, x, fx):
        v = fx.values - self._apply(x.values)
        v = v.copy()
        v[0] = self.birth_value(v)
        return fx.with_values(v)


def transport_birth_resolve(spec: TransportBirthSpec, lam: float, g: GridFunction) -> GridFunction:
    return TransportBirthOperator(spec, g.norm_tag).resolve(lam, g)


# --------------------------------------------------------------------------
# clock-augmented operator (t, x) -> (0, A x)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentedState:
    t: float
    x: GridFunction

    def norm(self) -> float:
        return abs(self.t) + self.x.norm()

    def __add__(self, other: "AugmentedState") -> "AugmentedState":
        return AugmentedState(self.t + other.t, self.x + other.x)

    def __sub__(self, other: "AugmentedState") -> "AugmentedState":
        return AugmentedState(self.t - other.t, self.x - other.x)

    def __mul__(self, c: float) -> "AugmentedState":
        return AugmentedState(c * self.t, c * self.x)

    __rmul__ = __mul__


@dataclass(frozen=True)
class TimeAugmentedSpec:
    inner: ResolventOracle


class TimeAugmentedOperator:
    """``A(t, x) = (0, A x)`` on ``R x X`` with norm ``|t| + |x|``."""

    def __init__(self, inner: ResolventOracle):
        self.inner = inner
        self.alpha = inner.alpha
        self.lambda_max = inner.lambda_max
        self.name = f"clock({inner.name})"

    def resolve(self, lam: float, state: AugmentedState) -> AugmentedState:
        return AugmentedState(state.t, self.inner.resolve(lam, state.x))

    def apply(self, state: AugmentedState) -> AugmentedState:
        return AugmentedState(0.0, self.inner.apply(state.x))


def time_augmented_resolve(spec: TimeAugmentedSpec, lam: float, state) -> AugmentedState:
    if not isinstance(state, AugmentedState):
        state = AugmentedState(*state)
    return TimeAugmentedOperator(spec.inner).resolve(lam, state)


__all__ = [
    "AugmentedState", "LaplaceOperator", "LaplaceSpec", "NewtonOptions", "PLaplaceOperator",
    "PLaplaceSpec", "ScalarLinear", "TimeAugmentedOperator", "TimeAugmentedSpec",
    "TransportBirthOperator", "TransportBirthSpec", "ZeroOperator", "conjugate_gradient",
    "laplace_resolve", "plaplace_resolve", "thomas", "time_augmented_resolve",
    "transport_birth_resolve", "yosida",
]
