"""Constraint functionals, directional-derivative estimates and invariance checkers.

A constraint set is ``K = {V <= 0}`` for a functional ``V``.  Hypotheses of the
invariance theorems are checked on sampled states, conclusions are monitored
along computed trajectories.  Every checker returns a :class:`CertReport`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ResolventOracle, Trajectory, bracket, shifted, solve_integral
from .errors import BlowUpError
from .grid import Boundary, Geometry, GridFunction, Norm
from .operators import AugmentedState, TimeAugmentedOperator

CERTIFIED = "certified"
VIOLATED = "violated"
INCONCLUSIVE = "inconclusive"

DEFAULT_DELTAS = (1e-1, 1e-2, 1e-3, 1e-4)
BUMP_PROFILES = ("node", "plateau", "smooth")
PROBE_EXPONENTS = tuple(range(1, 7))


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    where: object
    lhs: float
    rhs: float
    detail: dict = field(default_factory=dict)

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass
class CertReport:
    """Outcome of one check: verdict, witnesses and sampling metadata.

    A ``violated`` report always carries a witness with ``lhs > rhs + tol``.
    """

    name: str
    verdict: str
    witnesses: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    children: list = field(default_factory=list)
    tol: float = 0.0

    def __post_init__(self):
        if self.verdict not in (CERTIFIED, VIOLATED, INCONCLUSIVE):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == VIOLATED and not self.children:
            if not any(w.lhs > w.rhs + self.tol for w in self.witnesses):
                raise ValueError("a violated report needs a witness with lhs > rhs + tol")

    @property
    def passed(self) -> bool:
        return self.verdict == CERTIFIED

    def __bool__(self) -> bool:
        return self.passed

    def find(self, name: str) -> "CertReport":
        if self.name == name:
            return self
        for child in self.children:
            try:
                return child.find(name)
            except KeyError:
                pass
        raise KeyError(name)

    def lines(self, indent: int = 0) -> list[str]:
        pad = "  " * indent
        out = [f"{pad}{self.name}: {self.verdict}"]
        if self.verdict == VIOLATED and self.witnesses:
            w = max(self.witnesses, key=lambda w: w.lhs - w.rhs)
            out[0] += f" (worst at {w.where}: lhs={w.lhs:.6g} > rhs={w.rhs:.6g})"
        reason = self.meta.get("reason")
        if reason:
            out[0] += f" [{reason}]"
        for child in self.children:
            out.extend(child.lines(indent + 1))
        return out


def combine(name: str, reports: Sequence[CertReport], **meta) -> CertReport:
    verdicts = [r.verdict for r in reports]
    if VIOLATED in verdicts:
        verdict = VIOLATED
    elif INCONCLUSIVE in verdicts or not verdicts:
        verdict = INCONCLUSIVE
    else:
        verdict = CERTIFIED
    return CertReport(name, verdict, meta=dict(meta), children=list(reports))


def _verdict_from(name: str, witnesses: list, tol: float, **meta) -> CertReport:
    bad = [w for w in witnesses if w.lhs > w.rhs + tol]
    if bad:
        return CertReport(name, VIOLATED, bad, meta, tol=tol)
    if not witnesses:
        return CertReport(name, INCONCLUSIVE, [], {**meta, "reason": meta.get("reason", "no samples")})
    return CertReport(name, CERTIFIED, [min(witnesses, key=lambda w: w.slack)], meta, tol=tol)


# --------------------------------------------------------------------------
# constraint functionals and uniqueness functions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConstraintFunctional:
    """``V`` with optional discrete L2 gradient; ``K_V = {V <= 0}``."""

    kind: str
    fn: Callable
    grad_fn: Callable | None = None
    data: object = None
    exit_tol: float = 1e-8

    def __call__(self, state) -> float:
        return float(self.fn(state))

    @property
    def has_grad(self) -> bool:
        return self.grad_fn is not None

    def grad(self, state: GridFunction) -> GridFunction:
        if self.grad_fn is None:
            raise NotImplementedError(f"{self.kind} functional has no gradient")
        return self.grad_fn(state)

    @classmethod
    def quad_lower(cls, m: GridFunction) -> "ConstraintFunctional":
        """``V_m(u) = 1/2 int (u - m)_-^2`` (trapezoid)."""
        w = m.geometry.weights

        def fn(u):
            neg = np.maximum(m.values - u.values, 0.0)
            return 0.5 * float(w @ (neg * neg))

        def grad(u):
            return GridFunction(-np.maximum(m.values - u.values, 0.0), u.geometry,
                                Boundary.NONE, u.norm_tag)

        return cls("quad_lower_obstacle", fn, grad, m, 1e-8)

    @classmethod
    def quad_upper(cls, M: GridFunction) -> "ConstraintFunctional":
        """``V_M(u) = 1/2 int (u - M)_+^2`` (trapezoid)."""
        w = M.geometry.weights

        def fn(u):
            pos = np.maximum(u.values - M.values, 0.0)
            return 0.5 * float(w @ (pos * pos))

        def grad(u):
            return GridFunction(np.maximum(u.values - M.values, 0.0), u.geometry,
                                Boundary.NONE, u.norm_tag)

        return cls("quad_upper_obstacle", fn, grad, M, 1e-8)

    @classmethod
    def sup_distance_lower(cls, m: GridFunction) -> "ConstraintFunctional":
        """``|(u - m)_-|_inf``, the sup-norm distance to ``{u >= m}``."""
        return cls("sup_distance_lower",
                   lambda u: float(np.max(np.maximum(m.values - u.values, 0.0))),
                   None, m, 1e-6)

    @classmethod
    def epigraph(cls, tau: Callable[[GridFunction], float]) -> "ConstraintFunctional":
        """``V(t, x) = tau(x) - t`` on clock-augmented states."""
        return cls("epigraph", lambda s: float(tau(s.x)) - s.t, None, tau, 1e-8)

    @classmethod
    def custom(cls, fn, grad=None, exit_tol: float = 1e-8) -> "ConstraintFunctional":
        return cls("custom", fn, grad, None, exit_tol)


@dataclass(frozen=True, eq=False)
class OmegaFunction:
    """Uniqueness function ``omega >= 0`` with ``omega(0) = 0``."""

    form: str
    fn: Callable
    params: tuple = ()
    monotone: bool = True

    def __call__(self, s):
        return self.fn(s)

    @classmethod
    def linear(cls, C: float) -> "OmegaFunction":
        if C < 0:
            raise ValueError("linear omega needs C >= 0")
        C = float(C)
        return cls("linear", lambda s: C * np.asarray(s, dtype=float), (C,))

    @classmethod
    def power(cls, c: float, a: float) -> "OmegaFunction":
        if c < 0 or a < 1:
            raise ValueError("power omega needs c >= 0 and a >= 1")
        return cls("power", lambda s: c * np.abs(np.asarray(s, dtype=float)) ** a, (c, a))

    @classmethod
    def xlog(cls) -> "OmegaFunction":
        return cls("xlog", lambda s: np.asarray(s, dtype=float) * np.log1p(np.asarray(s, dtype=float)))

    @classmethod
    def custom(cls, fn: Callable, sample_max: float = 1.0, samples: int = 257) -> "OmegaFunction":
        grid = np.linspace(0.0, sample_max, samples)
        vals = np.asarray(fn(grid), dtype=float) * np.ones_like(grid)
        if not np.all(np.isfinite(vals)):
            raise ValueError("omega is not finite on the sampled range")
        if abs(vals[0]) > 1e-14:
            raise ValueError(f"omega(0) = {vals[0]} must vanish")
        if np.any(vals < -1e-14):
            raise ValueError("omega must be nonnegative")
        return cls("custom", fn, (), bool(np.all(np.diff(vals) >= -1e-14)))

    @property
    def constant(self) -> float:
        if self.form != "linear":
            raise AttributeError("only a linear omega has a constant")
        return self.params[0]


# --------------------------------------------------------------------------
# directional derivative along the resolvent flow
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivativeEstimate:
    value: float
    schedule: np.ndarray
    quotients: np.ndarray
    refined: float
    extrapolated: float
    error_bound: float


def default_schedule(op: ResolventOracle, h0: float = 1e-2, levels: int = 9) -> np.ndarray:
    top = min(h0, op.lambda_max * 0.5 if math.isfinite(op.lambda_max) else h0)
    return top * 2.0 ** -np.arange(levels)


def _flow_step(op: ResolventOracle, x: GridFunction, v: GridFunction, h: float) -> GridFunction:
    return op.resolve(h, x.with_values(x.values + h * v.values))


def a_derivative(op: ResolventOracle, V, x: GridFunction, v: GridFunction,
                 h_schedule=None) -> DerivativeEstimate:
    """Liminf surrogate of ``(V(u(h)) - V(x)) / h`` along ``u' = -A u + v``.

    ``u(h)`` is one implicit step ``J_h(x + h v)``.  ``value`` is the minimum
    quotient over the schedule.  The last two levels give the Richardson value
    ``extrapolated = 2 q(h_n) - q(h_{n-1})``; ``error_bound = |q(h_n) - q(h_{n-1})|``
    estimates the first-order error of the finest quotient.  ``refined`` is the
    finest quotient recomputed with two half steps, a check on the scheme itself.
    """
    hs = default_schedule(op) if h_schedule is None else np.asarray(h_schedule, dtype=float)
    if hs.size < 2 or np.any(hs <= 0) or np.any(np.diff(hs) >= 0):
        raise ValueError("h_schedule needs two or more positive, strictly decreasing steps")
    v0 = V(x)
    qs = np.array([(V(_flow_step(op, x, v, h)) - v0) / h for h in hs])
    h = hs[-1]
    half = _flow_step(op, _flow_step(op, x, v, h / 2), v, h / 2)
    q_half = (V(half) - v0) / h
    ratio = hs[-2] / hs[-1]
    extrap = (ratio * qs[-1] - qs[-2]) / (ratio - 1.0)
    return DerivativeEstimate(float(qs.min()), hs, qs, float(q_half), float(extrap),
                              float(abs(qs[-1] - qs[-2])))


def gradient_derivative(op: ResolventOracle, V: ConstraintFunctional, x: GridFunction,
                        v: GridFunction) -> float:
    """``<grad V(x), v - A x>``: the directional derivative for smooth ``V`` and linear ``A``."""
    return V.grad(x).inner(v.with_values(v.values - op.apply(x).values))


# --------------------------------------------------------------------------
# pointwise hypothesis checks
# --------------------------------------------------------------------------

REGIONS = ("outside_K", "inside_K0", "near_boundary")


def _omega_argument(region: str, value: float) -> float | None:
    if region == "outside_K":
        return value if value > 0 else None
    if region == "inside_K0":
        return -value if value < 0 else None
    if region == "near_boundary":
        return abs(value)
    raise ValueError(f"unknown region {region!r}")


def check_pointwise_condition(op: ResolventOracle, f, V: ConstraintFunctional, omega,
                              samples: Sequence[GridFunction], region: str = "outside_K",
                              tol: float = 1e-8, name: str = "pointwise") -> CertReport:
    """Evaluate ``<grad V(x), -A x + f(x)> <= omega(V)`` on sampled states.

    ``region`` selects the samples used and the argument of ``omega``: ``V``
    outside ``K``, ``-V`` in its interior, ``|V|`` near its boundary.  Samples
    outside the region are counted and skipped.
    """
    if region not in REGIONS:
        raise ValueError(f"unknown region {region!r}")
    if not V.has_grad:
        return CertReport(name, INCONCLUSIVE, meta={"reason": "functional has no gradient"})
    if not op.has_apply:
        return CertReport(name, INCONCLUSIVE, meta={"reason": "operator has no direct apply"})
    witnesses, rejected = [], 0
    for k, x in enumerate(samples):
        value = V(x)
        arg = _omega_argument(region, value)
        if arg is None:
            rejected += 1
            continue
        lhs = V.grad(x).inner(op.velocity(x, f(x)))
        witnesses.append(Witness(k, float(lhs), float(omega(arg)), {"V": value}))
    meta = {"region": region, "samples": len(samples), "rejected": rejected}
    report = _verdict_from(name, witnesses, tol, **meta)
    if witnesses:
        report.meta["min_slack"] = min(w.slack for w in witnesses)
    return report


def check_inwardness(op: ResolventOracle, f, V, samples: Sequence[GridFunction],
                     margin: float = 1e-8, offset: float = 0.0,
                     name: str = "inwardness") -> CertReport:
    """Strict condition ``D_A V(x; f(x)) + offset < -margin`` on samples.

    The derivative is the rollout estimate of :func:`a_derivative`; with
    ``offset = -1`` this is the barrier speed condition ``D_A tau < 1``.
    """
    witnesses = []
    for k, x in enumerate(samples):
        est = a_derivative(op, V, x, f(x))
        witnesses.append(Witness(k, est.value + offset, -margin, {"estimate": est.value}))
    return _verdict_from(name, witnesses, 0.0, samples=len(samples), margin=margin)


def check_forcing_dissipativity(f, beta, pairs: Sequence[tuple[GridFunction, GridFunction]],
                                tol: float = 1e-10, name: str = "forcing_dissipativity") -> CertReport:
    """Sampled ``[u - v, f(u) - f(v)]_+ <= beta(|u - v|)`` on state pairs.

    This is a sampled certificate only; pairs at distance zero are skipped.
    """
    witnesses, skipped = [], 0
    for k, (u, v) in enumerate(pairs):
        d = u - v
        dist = d.norm()
        if dist == 0.0:
            skipped += 1
            continue
        lhs = bracket(d, f(u) - f(v), "plus")
        witnesses.append(Witness(k, float(lhs), float(beta(dist)), {"distance": dist}))
    return _verdict_from(name, witnesses, tol, samples=len(pairs), skipped=skipped)


def _bump(geometry: Geometry, profile: str, rng: np.random.Generator) -> np.ndarray:
    shape = geometry.shape
    inner = [n - 2 if geometry.mesh else n for n in shape]
    lo = [1 if geometry.mesh else 0 for _ in shape]
    b = np.zeros(shape)
    if profile == "node":
        idx = tuple(int(rng.integers(l, l + n)) for l, n in zip(lo, inner))
        b[idx] = 1.0
    elif profile in ("plateau", "smooth"):
        slices, axes = [], []
        for l, n, size in zip(lo, inner, shape):
            width = max(1, n // 4)
            start = int(rng.integers(l, l + n - width + 1))
            slices.append(slice(start, start + width))
            t = np.zeros(size)
            if profile == "plateau":
                t[start:start + width] = 1.0
            else:
                s = (np.arange(width) + 1.0) / (width + 1.0)
                t[start:start + width] = np.sin(np.pi * s) ** 2
            axes.append(t)
        b = axes[0] if len(axes) == 1 else np.multiply.outer(axes[0], axes[1])
    else:
        raise ValueError(f"unknown bump profile {profile!r}")
    return np.asarray(b, dtype=float).ravel()


def perturbation_family(op: ResolventOracle, base: GridFunction, sign: float = -1.0,
                        deltas=DEFAULT_DELTAS, profiles=BUMP_PROFILES, per_profile: int = 2,
                        rng: np.random.Generator | None = None) -> list[GridFunction]:
    """States ``base + sign * delta * bump`` projected onto the operator domain.

    ``sign = -1`` pushes below a lower obstacle (outside ``K_m``); ``+1`` pushes
    above an upper one.  Each state carries its ``(delta, profile)`` in the
    order deltas x profiles x repeats.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    out = []
    for delta in deltas:
        for profile in profiles:
            for _ in range(per_profile):
                b = _bump(base.geometry, profile, rng)
                out.append(op.project(base.values + sign * delta * b))
    return out


# --------------------------------------------------------------------------
# trajectory monitor
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MonitorResult:
    times: np.ndarray
    v_series: np.ndarray
    first_exit: float | None
    dini_series: np.ndarray
    exit_tol: float

    @property
    def max_v(self) -> float:
        return float(self.v_series.max())


def monitor(traj: Trajectory, V, exit_tol: float | None = None) -> MonitorResult:
    """``V`` along a trajectory, the first time it exceeds ``exit_tol``, and its forward quotients."""
    tol = getattr(V, "exit_tol", 1e-8) if exit_tol is None else exit_tol
    v = np.array([V(s) for s in traj.states])
    dini = np.diff(v) / np.diff(traj.times)
    above = np.flatnonzero(v > tol)
    first = float(traj.times[above[0]]) if above.size else None
    return MonitorResult(traj.times, v, first, dini, tol)


# --------------------------------------------------------------------------
# slow functions
# --------------------------------------------------------------------------

def certify_slow(beta: Callable, gamma: float, eps_grid=None) -> CertReport:
    """Certify ``x / beta(x) > gamma`` on a grid approaching 0.

    A slow function satisfies ``u <= a M`` whenever ``u <= a + int beta(u)``
    for small ``a``; the certificate reports the constants ``M = 2`` and
    ``tau = gamma / 2`` that come with the ratio bound.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    eps = np.logspace(-12, 0, 121) if eps_grid is None else np.sort(np.asarray(eps_grid, dtype=float))
    if eps.size == 0 or np.any(eps <= 0):
        raise ValueError("eps_grid must hold positive reals")
    vals = np.asarray(beta(eps), dtype=float) * np.ones_like(eps)
    meta = {"M": 2.0, "tau": gamma / 2.0, "grid": (float(eps[0]), float(eps[-1]), eps.size)}
    if np.any(~np.isfinite(vals)) or np.any(vals < 0):
        return CertReport("slow", INCONCLUSIVE, meta={**meta, "reason": "beta not finite/nonnegative"})
    if np.any(np.diff(vals) < -1e-12 * np.maximum(1.0, np.abs(vals[1:]))):
        return CertReport("slow", INCONCLUSIVE, meta={**meta, "reason": "beta not nondecreasing"})
    with np.errstate(divide="ignore"):
        ratio = np.where(vals > 0, eps / np.where(vals > 0, vals, 1.0), np.inf)
    bad = np.flatnonzero(~(ratio > gamma))
    meta["min_ratio"] = float(ratio.min())
    if bad.size:
        # the ratio must exceed gamma strictly; compare against the next float below it
        ws = [Witness(float(eps[i]), gamma, float(np.nextafter(ratio[i], -np.inf))) for i in bad]
        ws.sort(key=lambda w: w.where)
        return CertReport("slow", VIOLATED, ws, meta)
    return CertReport("slow", CERTIFIED, [], meta)


# --------------------------------------------------------------------------
# problem-level condition checks
# --------------------------------------------------------------------------

class PointwiseSource:
    """Nemytskii map ``u -> f(x, u(x))`` on a grid, honouring the boundary convention."""

    def __init__(self, fn: Callable, geometry: Geometry, boundary=Boundary.NONE):
        self.fn = fn
        self.geometry = geometry
        self.boundary = Boundary(boundary)
        self.coords = geometry.coords()

    def raw(self, u: np.ndarray) -> np.ndarray:
        out = np.asarray(self.fn(*self.coords, np.asarray(u, dtype=float)), dtype=float)
        return np.broadcast_to(out, (self.geometry.size,)).copy()

    def __call__(self, state: GridFunction) -> GridFunction:
        vals = self.raw(state.values)
        if state.boundary is Boundary.DIRICHLET_ZERO:
            vals[self.geometry.boundary_mask] = 0.0
        return state.with_values(vals)

    def shifted(self, c: float) -> "PointwiseSource":
        fn = self.fn
        return PointwiseSource(lambda *a: fn(*a) + c, self.geometry, self.boundary)


@dataclass(eq=False)
class ObstacleProblem:
    """``u' = -A u + f(x, u)`` with obstacles ``m <= u <= M`` (either may be absent).

    ``kind`` picks the invariance constant: ``plaplace`` ``2 L``,
    ``reaction_diffusion`` ``2 (L - lambda_1)``, ``age_structured``
    ``|beta|_2^2 + 2 L``, ``custom`` ``2 L``.
    """

    kind: str
    op: ResolventOracle
    source: PointwiseSource
    lower: GridFunction | None = None
    upper: GridFunction | None = None
    tol: float = 1e-10

    def interior(self) -> np.ndarray:
        g = self.op.geometry
        if self.op.boundary is Boundary.DIRICHLET_ZERO:
            return ~g.boundary_mask
        mask = np.ones(g.size, dtype=bool)
        if self.op.boundary is Boundary.NONLOCAL_BIRTH:
            mask[0] = False
        return mask

    def omega_constant(self, L: float) -> float:
        Lp = max(L, 0.0)
        if self.kind == "reaction_diffusion":
            return max(2.0 * (L - self.op.lambda1), 0.0)
        if self.kind == "age_structured":
            return 2.0 * self.op.l2_alpha + 2.0 * Lp
        return 2.0 * Lp


def _nodewise(name: str, lhs: np.ndarray, rhs: np.ndarray, mask: np.ndarray, tol: float,
              **meta) -> CertReport:
    idx = np.flatnonzero(mask)
    bad = idx[lhs[idx] > rhs[idx] + tol]
    meta = {**meta, "nodes": idx.size, "max_excess": float(np.max(lhs[idx] - rhs[idx], initial=-np.inf))}
    if bad.size:
        return CertReport(name, VIOLATED, [Witness(int(i), float(lhs[i]), float(rhs[i])) for i in bad],
                          meta, tol=tol)
    return CertReport(name, CERTIFIED, [], meta, tol=tol)


def probe_limsup(op: ResolventOracle, source: PointwiseSource, obstacle: GridFunction,
                 sign: float, mask: np.ndarray, exponents=PROBE_EXPONENTS,
                 name: str = "limsup") -> CertReport:
    """Finite-difference probe of ``limsup_{s->0} (-A m + f(x, m + s)) / s``.

    ``s = sign * 10^-k``; the largest quotient over nodes and ``k`` is the
    empirical constant ``L`` (``meta["L"]``).  Quotients that still grow by
    more than a factor 2 between the last two probes are reported as diverging.
    """
    am = op._apply(obstacle.values)
    per_k = []
    for k in exponents:
        s = sign * 10.0 ** -k
        q = (-am + source.raw(obstacle.values + s)) / s
        per_k.append(float(np.max(q[mask])))
    per_k = np.array(per_k)
    L = float(per_k.max())
    meta = {"L": L, "per_k": per_k.tolist(), "exponents": list(exponents)}
    last, prev = per_k[-1], per_k[-2] if per_k.size > 1 else per_k[-1]
    if last > 1.0 and last > 2.0 * max(prev, 0.0):
        return CertReport(name, VIOLATED, [Witness(f"s={sign * 10.0 ** -exponents[-1]:g}",
                                                   float(last), 2.0 * max(prev, 0.0))], meta)
    return CertReport(name, CERTIFIED, [], meta)


def verify_problem_conditions(problem: ObstacleProblem) -> CertReport:
    """Structural hypotheses of an obstacle problem, node by node.

    Boundary compatibility and ``m <= M``; the sub/supersolution inequalities
    ``A m <= f(x, m)`` and ``A M >= f(x, M)`` on interior nodes; limsup probes
    giving the empirical constant ``L``; for the age model the birth condition
    ``int beta < 1`` and the closure ``m(0) = int beta m``.
    """
    op, src, tol = problem.op, problem.source, problem.tol
    mask = problem.interior()
    children = []
    bmask = op.geometry.boundary_mask
    if problem.lower is not None and problem.upper is not None:
        children.append(_nodewise("ordered", problem.lower.values, problem.upper.values,
                                  np.ones_like(mask), tol))
    if op.boundary is Boundary.DIRICHLET_ZERO:
        zeros = np.zeros(op.geometry.size)
        if problem.lower is not None:
            children.append(_nodewise("boundary_lower", problem.lower.values, zeros, bmask, tol))
        if problem.upper is not None:
            children.append(_nodewise("boundary_upper", zeros, problem.upper.values, bmask, tol))
    if op.boundary is Boundary.NONLOCAL_BIRTH:
        spec = op.spec
        birth_ok = spec.birth_integral < 1.0 and bool(np.all(spec.beta >= 0))
        children.append(CertReport(
            "birth", CERTIFIED if birth_ok else VIOLATED,
            [] if birth_ok else [Witness("int beta", spec.birth_integral, 1.0)],
            {"integral": spec.birth_integral}))
    Ls = {}
    for label, obst, sign in (("lower", problem.lower, -1.0), ("upper", problem.upper, 1.0)):
        if obst is None:
            continue
        am = op._apply(obst.values)
        fm = src.raw(obst.values)
        if sign < 0:
            children.append(_nodewise("subsolution", am, fm, mask, tol))
        else:
            children.append(_nodewise("supersolution", fm, am, mask, tol))
        if op.boundary is Boundary.NONLOCAL_BIRTH:
            closure = float(op.wbeta @ obst.values)
            children.append(_nodewise(f"closure_{label}", np.array([abs(obst.values[0] - closure)]),
                                      np.zeros(1), np.ones(1, dtype=bool), tol))
        probe = probe_limsup(op, src, obst, sign, mask, name=f"limsup_{label}")
        Ls[label] = probe.meta["L"]
        children.append(probe)
    report = combine("conditions", children)
    report.meta["L"] = Ls
    if Ls:
        report.meta["omega_C"] = {k: problem.omega_constant(v) for k, v in Ls.items()}
    return report


def certify_pointwise(problem: ObstacleProblem, conditions: CertReport | None = None,
                      deltas=DEFAULT_DELTAS, per_profile: int = 2,
                      rng: np.random.Generator | None = None, tol: float = 1e-8) -> CertReport:
    """Pointwise derivative bound ``<grad V, -A u + f(u)> <= C V`` on the delta family.

    ``C`` is the problem's constant built from the probed ``L``.
    """
    conditions = verify_problem_conditions(problem) if conditions is None else conditions
    rng = np.random.default_rng(0) if rng is None else rng
    children = []
    for label, obst, sign, maker in (("lower", problem.lower, -1.0, ConstraintFunctional.quad_lower),
                                     ("upper", problem.upper, 1.0, ConstraintFunctional.quad_upper)):
        if obst is None:
            continue
        C = problem.omega_constant(conditions.meta["L"][label])
        samples = perturbation_family(problem.op, obst, sign, deltas, per_profile=per_profile, rng=rng)
        rep = check_pointwise_condition(problem.op, problem.source, maker(obst),
                                        OmegaFunction.linear(C), samples, "outside_K", tol,
                                        name=f"pointwise_{label}")
        rep.meta.update(C=C, deltas=list(deltas))
        children.append(rep)
    return combine("pointwise", children)


# --------------------------------------------------------------------------
# impulsive barriers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Barrier:
    tau: Callable[[GridFunction], float]
    impulse: Callable[[GridFunction], GridFunction]
    name: str = ""


@dataclass(frozen=True)
class JumpRecord:
    barrier: int
    time: float
    pre: GridFunction
    post: GridFunction
    bisections: int
    bracket: tuple


@dataclass
class ImpulsiveResult:
    trajectory: Trajectory
    jumps: list
    hit_counts: list
    strict: list
    report: CertReport


def check_barrier_order(barriers: Sequence[Barrier], samples: Sequence[GridFunction],
                        tol: float = 0.0) -> CertReport:
    """Conditions ``0 < tau_j < tau_{j+1}`` and ``tau_j(x + I_j x) <= tau_j(x) < tau_{j+1}(x + I_j x)``."""
    ws_order, ws_jump = [], []
    for k, x in enumerate(samples):
        taus = [b.tau(x) for b in barriers]
        ws_order.append(Witness((k, 0), 0.0, taus[0]))
        for j in range(len(barriers) - 1):
            ws_order.append(Witness((k, j + 1), taus[j], taus[j + 1]))
        for j, b in enumerate(barriers):
            y = x + b.impulse(x)
            ws_jump.append(Witness((k, j, "keep"), b.tau(y), taus[j]))
            if j + 1 < len(barriers):
                ws_jump.append(Witness((k, j, "next"), taus[j], barriers[j + 1].tau(y)))

    def judge(name, ws, strict_lt):
        # a strict "<" becomes "<=" against the next float below rhs
        if strict_lt:
            ws = [Witness(w.where, w.lhs, float(np.nextafter(w.rhs, -np.inf))) for w in ws]
        return _verdict_from(name, ws, 0.0 if strict_lt else tol, samples=len(samples))

    order = judge("barrier_order", ws_order, True)
    keep = judge("barrier_jump", [w for w in ws_jump if w.where[2] == "keep"], False)
    nxt = judge("barrier_jump_next", [w for w in ws_jump if w.where[2] == "next"], True)
    return combine("barriers", [order, keep, nxt])


def simulate_impulsive(op: ResolventOracle, f, barriers: Sequence[Barrier], x0: GridFunction,
                       T: float, steps: int, max_bisections: int = 40) -> ImpulsiveResult:
    """March ``u' = -A u + f(u)`` with state-dependent jumps at ``t = tau_j(u)``.

    The clock-augmented system is stepped with the same semi-implicit scheme
    as :func:`solve_integral`.  A hit of barrier ``j`` is a sign change of
    ``V_j = tau_j(u) - t`` from positive to nonpositive; the step fraction is
    bisected, the impulse ``u+ = u + I_j(u)`` is applied and the remainder of
    the step is completed.  Repeated hits are reported, not raised.
    """
    if not barriers:
        traj = solve_integral(op, f, x0, T, steps)
        empty = CertReport("impulsive", CERTIFIED, [], {"barriers": 0})
        return ImpulsiveResult(traj, [], [], [], empty)
    h = T / steps
    shift = op.alpha if op.alpha > 0 else 0.0
    clock = TimeAugmentedOperator(shifted(op))

    def step(t, u, dt):
        fu = f(u)
        w = fu + shift * u if shift else fu
        nxt = clock.resolve(dt, AugmentedState(t, u) + dt * AugmentedState(1.0, w))
        return nxt.x

    def V(j, t, u):
        return barriers[j].tau(u) - t

    nb = len(barriers)
    hits = [0] * nb
    strict = [True] * nb
    jumps = []
    times, states, forcings, meta = [0.0], [x0], [f(x0)], [{}]
    t, u = 0.0, x0
    v_prev = [V(j, t, u) for j in range(nb)]
    for k in range(1, steps + 1):
        t_end = k * h
        while True:
            dt = t_end - t
            cand = step(t, u, dt)
            v_new = [V(j, t_end, cand) for j in range(nb)]
            crossing = [j for j in range(nb) if v_prev[j] > 0 and v_new[j] <= 0]
            # strictness after a jump: V_j must stay negative
            for j in range(nb):
                if hits[j] and v_new[j] >= 0:
                    strict[j] = False
            if not crossing:
                break
            lo, hi, n_bis = 0.0, 1.0, 0
            first = None
            for _ in range(max_bisections):
                mid = 0.5 * (lo + hi)
                um = step(t, u, mid * dt)
                crossed = [j for j in crossing if V(j, t + mid * dt, um) <= 0]
                if crossed:
                    hi = mid
                else:
                    lo = mid
                n_bis += 1
            t_hit = t + hi * dt
            u_hit = step(t, u, hi * dt)
            first = min((j for j in crossing if V(j, t_hit, u_hit) <= 0), default=crossing[0])
            post = u_hit + barriers[first].impulse(u_hit)
            hits[first] += 1
            jumps.append(JumpRecord(first, t_hit, u_hit, post, n_bis, (t + lo * dt, t + hi * dt)))
            t, u = t_hit, post
            v_prev = [V(j, t, u) for j in range(nb)]
            if V(first, t, u) > 0:
                strict[first] = False
            if t_end - t <= 1e-14 * max(1.0, t_end):
                cand = u
                v_new = v_prev
                break
            if t > times[-1]:
                times.append(t)
                states.append(u)
                forcings.append(f(u))
                meta.append({"jump": first})
            else:
                states[-1] = u
                forcings[-1] = f(u)
        u = cand
        t = t_end
        v_prev = v_new
        times.append(t)
        states.append(u)
        forcings.append(f(u))
        meta.append({})
        if u.norm() > 1e8:
            raise BlowUpError(f"state norm exceeded ceiling at t={t:.6g}",
                              trajectory=Trajectory(times, states, forcings, meta), time=t)
    traj = Trajectory(times, states, forcings, meta)
    ws = [Witness(j, float(hits[j]), 1.0) for j in range(nb)]
    bad = [w for w in ws if w.lhs > w.rhs]
    report = CertReport("impulsive", VIOLATED if bad else CERTIFIED, bad if bad else [],
                        {"hit_counts": hits, "strict": strict})
    return ImpulsiveResult(traj, jumps, hits, strict, report)


__all__ = [
    "BUMP_PROFILES", "Barrier", "CERTIFIED", "CertReport", "ConstraintFunctional",
    "DEFAULT_DELTAS", "DerivativeEstimate", "INCONCLUSIVE", "ImpulsiveResult", "JumpRecord",
    "MonitorResult", "ObstacleProblem", "OmegaFunction", "PointwiseSource", "VIOLATED", "Witness",
    "a_derivative", "certify_pointwise", "certify_slow", "check_barrier_order",
    "check_forcing_dissipativity", "check_inwardness",
    "check_pointwise_condition", "combine", "default_schedule", "gradient_derivative", "monitor",
    "perturbation_family", "probe_limsup", "simulate_impulsive", "verify_problem_conditions",
]
