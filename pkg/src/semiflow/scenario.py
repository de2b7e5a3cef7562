"""Scenario files: parsing, assembly of operators and checks, and the run pipeline.

A scenario is an INI file::

    [scenario]
    kind = plaplace_obstacle        ; or reaction_diffusion, age_structured,
                                    ;    impulsive, custom_linear
    name = obstacle
    t_final = 1
    steps = 2000

    [operator]
    p = 3
    lengths = 1
    nodes = 101                     ; total nodes per axis, boundary included

    [data]
    f = "-u + 0.5*u^3"
    lower = "-0.5*sin(pi*x)"
    upper = "0.5*sin(pi*x)"
    u0 = "0.25*sin(2*pi*x)"

Expressions are quoted.  ``f`` may use ``x``, ``y`` (2D) and ``u``; obstacles,
``u0`` and ``beta`` use the space variables only; barrier maps use ``u``.
"""

from __future__ import annotations

import configparser
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Picard, solve_integral
from .errors import ScenarioError
from .expr import Expression
from .grid import Boundary, Geometry, GridFunction
from .invariance import (
    DEFAULT_DELTAS, Barrier, CertReport, ConstraintFunctional, ObstacleProblem,
    OmegaFunction, PointwiseSource, check_barrier_order, check_inwardness,
    check_pointwise_condition, combine, certify_pointwise, monitor, perturbation_family,
    simulate_impulsive, verify_problem_conditions,
)
from .operators import (
    LaplaceOperator, LaplaceSpec, NewtonOptions, PLaplaceOperator, PLaplaceSpec, ScalarLinear,
    TransportBirthOperator, TransportBirthSpec,
)
from .output import Series, emit_csv, emit_svg

KINDS = ("plaplace_obstacle", "reaction_diffusion", "age_structured", "impulsive", "custom_linear")


@dataclass(frozen=True)
class CheckOptions:
    deltas: tuple = DEFAULT_DELTAS
    per_profile: int = 2
    omega: Expression | None = None
    tol: float = 1e-8
    picard: bool = False
    sample_range: float = 4.0
    samples: int = 41


@dataclass(frozen=True)
class OutputOptions:
    csv: bool = True
    svg: bool = False
    prefix: str = ""


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    operator: dict
    data: dict
    t_final: float
    steps: int
    check: CheckOptions = field(default_factory=CheckOptions)
    output: OutputOptions = field(default_factory=OutputOptions)
    barriers: tuple = ()
    source: str = ""

    def with_steps(self, steps: int) -> "Scenario":
        return Scenario(self.name, self.kind, self.operator, self.data, self.t_final, steps,
                        self.check, self.output, self.barriers, self.source)

    def with_data(self, **exprs) -> "Scenario":
        data = dict(self.data)
        data.update({k: Expression.parse(v) if isinstance(v, str) else v for k, v in exprs.items()})
        return Scenario(self.name, self.kind, self.operator, data, self.t_final, self.steps,
                        self.check, self.output, self.barriers, self.source)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _unquote(raw: str) -> str:
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    return raw


def _floats(raw: str, key: str) -> tuple:
    try:
        return tuple(float(v) for v in _unquote(raw).replace(",", " ").split())
    except ValueError as exc:
        raise ScenarioError(f"{key}: expected numbers, got {raw!r}") from exc


def _expr(raw: str, slot: str, allowed) -> Expression:
    try:
        return Expression.parse(_unquote(raw)).require(allowed, slot)
    except ScenarioError as exc:
        raise ScenarioError(f"[{slot}] {exc}") from exc


def _bool(raw: str, key: str) -> bool:
    v = _unquote(raw).lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ScenarioError(f"{key}: expected yes/no, got {raw!r}")


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    if "scenario" not in cp:
        raise ScenarioError(f"{source}: missing [scenario] section")
    sc = cp["scenario"]
    kind = _unquote(sc.get("kind", ""))
    if kind not in KINDS:
        raise ScenarioError(f"{source}: kind must be one of {KINDS}, got {kind!r}")
    name = _unquote(sc.get("name", Path(source).stem or "scenario"))
    try:
        t_final = float(_unquote(sc.get("t_final", "1")))
        steps = int(_unquote(sc.get("steps", "100")))
    except ValueError as exc:
        raise ScenarioError(f"{source}: t_final/steps must be numbers") from exc
    if not t_final > 0 or steps < 1:
        raise ScenarioError(f"{source}: need t_final > 0 and steps >= 1")

    op = dict(cp["operator"]) if "operator" in cp else {}
    dim = len(_floats(op["nodes"], "nodes")) if "nodes" in op else 1
    space = {"x", "y"} if dim == 2 else {"x"}
    if kind in ("custom_linear", "impulsive"):
        space = {"x"}
    slots = {"f": space | {"u"}, "lower": space, "upper": space, "u0": space, "beta": {"x"}}
    data = {}
    for key, raw in (cp["data"].items() if "data" in cp else ()):
        if key not in slots:
            raise ScenarioError(f"{source}: unknown data key {key!r}")
        data[key] = _expr(raw, key, slots[key])
    if "f" not in data:
        data["f"] = Expression.parse("0")
    if "u0" not in data and "u0_modes" not in op:
        raise ScenarioError(f"{source}: [data] needs u0")
    if "beta" in op and "beta" not in data:
        data["beta"] = _expr(op.pop("beta"), "beta", {"x"})

    ck = cp["check"] if "check" in cp else {}
    check = CheckOptions(
        deltas=_floats(ck["deltas"], "deltas") if "deltas" in ck else DEFAULT_DELTAS,
        per_profile=int(ck.get("per_profile", 2)),
        omega=_expr(ck["omega"], "omega", {"s"}) if "omega" in ck and _unquote(ck["omega"]) != "auto" else None,
        tol=float(ck.get("tol", 1e-8)),
        picard=_bool(ck["picard"], "picard") if "picard" in ck else False,
        sample_range=float(ck.get("sample_range", 4.0)),
        samples=int(ck.get("samples", 41)),
    )
    out = cp["output"] if "output" in cp else {}
    output = OutputOptions(
        csv=_bool(out["csv"], "csv") if "csv" in out else True,
        svg=_bool(out["svg"], "svg") if "svg" in out else False,
        prefix=_unquote(out.get("prefix", name)),
    )
    barriers = []
    if "barriers" in cp:
        bs = cp["barriers"]
        j = 1
        while f"tau{j}" in bs:
            if f"impulse{j}" not in bs:
                raise ScenarioError(f"{source}: barrier {j} has no impulse{j}")
            barriers.append((_expr(bs[f"tau{j}"], f"tau{j}", {"u"}),
                             _expr(bs[f"impulse{j}"], f"impulse{j}", {"u"})))
            j += 1
        if not barriers:
            raise ScenarioError(f"{source}: [barriers] defines no tau1")
    if kind == "impulsive" and not barriers:
        raise ScenarioError(f"{source}: an impulsive scenario needs [barriers]")
    return Scenario(name, kind, op, data, t_final, steps, check, output, tuple(barriers), source)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc
    return parse_scenario(text, str(path))


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def _op_floats(sc: Scenario, key: str, default=None) -> tuple:
    if key not in sc.operator:
        if default is None:
            raise ScenarioError(f"{sc.source}: [operator] needs {key}")
        return default
    return _floats(sc.operator[key], key)


def build_operator(sc: Scenario):
    o = sc.operator
    try:
        if sc.kind == "plaplace_obstacle":
            nodes = int(_op_floats(sc, "nodes")[0])
            newton = NewtonOptions(int(float(o.get("newton_max_iter", 100))),
                                   float(o.get("newton_tol", 1e-10)),
                                   _bool(o["damping"], "damping") if "damping" in o else True)
            spec = PLaplaceSpec(float(o.get("p", 2)), _op_floats(sc, "lengths", (1.0,))[0],
                                nodes - 2, newton)
            return PLaplaceOperator(spec)
        if sc.kind == "reaction_diffusion":
            nodes = tuple(int(n) for n in _op_floats(sc, "nodes"))
            lengths = _op_floats(sc, "lengths", (1.0,) * len(nodes))
            return LaplaceOperator(LaplaceSpec(len(nodes), lengths, nodes))
        if sc.kind == "age_structured":
            nodes = int(_op_floats(sc, "nodes")[0])
            horizon = _op_floats(sc, "horizon")[0]
            geom = Geometry.interval(horizon, nodes)
            if "beta" not in sc.data:
                raise ScenarioError(f"{sc.source}: age model needs beta")
            beta = np.asarray(sc.data["beta"](x=geom.axis(0)), dtype=float) * np.ones(nodes)
            return TransportBirthOperator(TransportBirthSpec(horizon, nodes, beta))
        coeff = _op_floats(sc, "coeff", (0.0,))[0]
        n = int(_op_floats(sc, "size", (1.0,))[0])
        return ScalarLinear(coeff, n)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"{sc.source}: {exc}") from exc


def _space_env(geometry: Geometry) -> dict:
    coords = geometry.coords()
    env = {"x": coords[0]}
    if geometry.dim == 2:
        env["y"] = coords[1]
    return env


def _sample(expr: Expression, geometry: Geometry) -> np.ndarray:
    return np.asarray(expr(**_space_env(geometry)), dtype=float) * np.ones(geometry.size)


def build_source(sc: Scenario, op) -> PointwiseSource:
    f = sc.data["f"]
    if op.geometry.dim == 2:
        fn = lambda x, y, u: f(x=x, y=y, u=u)  # noqa: E731
    else:
        fn = lambda x, u: f(x=x, u=u)  # noqa: E731
    return PointwiseSource(fn, op.geometry, op.boundary)


def build_problem(sc: Scenario, op=None) -> ObstacleProblem:
    op = build_operator(sc) if op is None else op
    src = build_source(sc, op)
    kinds = {"plaplace_obstacle": "plaplace", "reaction_diffusion": "reaction_diffusion",
             "age_structured": "age_structured"}
    lower = upper = None
    if "lower" in sc.data:
        lower = GridFunction(_sample(sc.data["lower"], op.geometry), op.geometry, Boundary.NONE, op.norm_tag)
    if "upper" in sc.data:
        upper = GridFunction(_sample(sc.data["upper"], op.geometry), op.geometry, Boundary.NONE, op.norm_tag)
    return ObstacleProblem(kinds.get(sc.kind, "custom"), op, src, lower, upper)


def initial_state(sc: Scenario, op) -> GridFunction:
    if "u0" in sc.data:
        vals = _sample(sc.data["u0"], op.geometry)
    else:
        x = op.geometry.axis(0)
        length = op.geometry.lengths[0]
        vals = np.zeros_like(x)
        for item in _unquote(sc.operator["u0_modes"]).split(","):
            k, c = item.split(":")
            vals += float(c) * np.sin(int(k) * math.pi * x / length)
    return op.project(vals)


def build_barriers(sc: Scenario) -> list[Barrier]:
    out = []
    for j, (tau, imp) in enumerate(sc.barriers, start=1):
        out.append(Barrier(
            (lambda tau: lambda s: float(tau(u=s.values[0])))(tau),
            (lambda imp: lambda s: s.with_values(np.asarray(imp(u=s.values), dtype=float) * np.ones(len(s))))(imp),
            f"barrier{j}"))
    return out


# --------------------------------------------------------------------------
# run pipeline
# --------------------------------------------------------------------------

@dataclass
class RunReport:
    name: str
    kind: str
    conditions: CertReport
    pointwise: CertReport | None = None
    summary: dict = field(default_factory=dict)
    monitors: dict = field(default_factory=dict)
    first_exit: float | None = None
    hit_counts: list = field(default_factory=list)
    jumps: list = field(default_factory=list)
    files: list = field(default_factory=list)
    trajectory: object = None
    elapsed: float = 0.0

    @property
    def certified(self) -> bool:
        ok = self.conditions.passed and (self.pointwise is None or self.pointwise.passed)
        return ok and self.first_exit is None

    @property
    def exit_code(self) -> int:
        return 0 if self.certified else 1

    def lines(self) -> list[str]:
        out = [f"scenario {self.name} ({self.kind}): {'PASS' if self.certified else 'FAIL'}"]
        out += self.conditions.lines(1)
        if self.pointwise is not None:
            out += self.pointwise.lines(1)
        for k, v in self.summary.items():
            out.append(f"  {k} = {v:.6g}" if isinstance(v, float) else f"  {k} = {v}")
        out.append(f"  first_exit = {self.first_exit}")
        for path in self.files:
            out.append(f"  wrote {path}")
        return out


def _pointwise_custom(sc: Scenario, problem: ObstacleProblem, rng) -> CertReport:
    """Pointwise check with a user-supplied omega instead of the problem constant."""
    omega = OmegaFunction.custom(lambda s: sc.check.omega(s=s))
    children = []
    for label, obst, sign, maker in (("lower", problem.lower, -1.0, ConstraintFunctional.quad_lower),
                                     ("upper", problem.upper, 1.0, ConstraintFunctional.quad_upper)):
        if obst is None:
            continue
        samples = perturbation_family(problem.op, obst, sign, sc.check.deltas,
                                      per_profile=sc.check.per_profile, rng=rng)
        children.append(check_pointwise_condition(problem.op, problem.source, maker(obst), omega,
                                                  samples, "outside_K", sc.check.tol,
                                                  name=f"pointwise_{label}"))
    return combine("pointwise", children)


def check_scenario(sc: Scenario, rng: np.random.Generator | None = None):
    """Condition checks only; returns ``(problem-or-None, conditions, pointwise)``."""
    rng = np.random.default_rng(0) if rng is None else rng
    op = build_operator(sc)
    if sc.kind == "impulsive":
        barriers = build_barriers(sc)
        src = build_source(sc, op)
        grid = np.linspace(-sc.check.sample_range, sc.check.sample_range, sc.check.samples)
        samples = [op.state([v]) for v in grid]
        order = check_barrier_order(barriers, samples)
        speeds = [check_inwardness(op, src, ConstraintFunctional.custom(b.tau), samples,
                                   offset=-1.0, name=f"speed_{b.name}") for b in barriers]
        return None, combine("conditions", [order, *speeds]), None
    problem = build_problem(sc, op)
    conditions = verify_problem_conditions(problem)
    if problem.lower is None and problem.upper is None:
        return problem, conditions, None
    if sc.check.omega is not None:
        pointwise = _pointwise_custom(sc, problem, rng)
    else:
        pointwise = certify_pointwise(problem, conditions, sc.check.deltas,
                                      sc.check.per_profile, rng, sc.check.tol)
    return problem, conditions, pointwise


def run(sc: Scenario, out_dir=None, svg: bool | None = None,
        rng: np.random.Generator | None = None) -> RunReport:
    """Conditions, pointwise checks, simulation, monitoring and file output."""
    start = time.perf_counter()
    problem, conditions, pointwise = check_scenario(sc, rng)
    report = RunReport(sc.name, sc.kind, conditions, pointwise)
    picard = Picard() if sc.check.picard else None
    columns = {}
    if sc.kind == "impulsive":
        op = build_operator(sc)
        src = build_source(sc, op)
        res = simulate_impulsive(op, src, build_barriers(sc), initial_state(sc, op),
                                 sc.t_final, sc.steps)
        traj = res.trajectory
        report.hit_counts = list(res.hit_counts)
        report.jumps = list(res.jumps)
        report.conditions = combine("conditions", [conditions, res.report])
        report.summary["hit_counts"] = report.hit_counts
        report.summary["strict"] = res.strict
        report.summary["event_times"] = [j.time for j in res.jumps]
        columns["u"] = traj.values()[:, 0]
    else:
        op = problem.op
        u0 = initial_state(sc, op)
        traj = solve_integral(op, problem.source, u0, sc.t_final, sc.steps, picard)
        vals = traj.values()
        exits = []
        for label, obst, maker in (("lower", problem.lower, ConstraintFunctional.quad_lower),
                                   ("upper", problem.upper, ConstraintFunctional.quad_upper)):
            if obst is None:
                continue
            mon = monitor(traj, maker(obst))
            report.monitors[label] = mon
            columns[f"V_{label}"] = mon.v_series
            report.summary[f"max_V_{label}"] = mon.max_v
            if mon.first_exit is not None:
                exits.append(mon.first_exit)
        if problem.lower is not None:
            gap = vals - problem.lower.values
            report.summary["min_u_minus_m"] = float(gap.min())
            columns["min_u_minus_m"] = gap.min(axis=1)
        if problem.upper is not None:
            gap = vals - problem.upper.values
            report.summary["max_u_minus_M"] = float(gap.max())
            columns["max_u_minus_M"] = gap.max(axis=1)
        if not columns:
            columns["sup_norm"] = np.abs(vals).max(axis=1)
        report.first_exit = min(exits) if exits else None
    report.trajectory = traj
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        series = Series(traj.times, columns)
        prefix = sc.output.prefix or sc.name
        if sc.output.csv:
            report.files.append(str(emit_csv(series, out_dir / f"{prefix}.csv")))
        if sc.output.svg if svg is None else svg:
            report.files.append(str(emit_svg(series, out_dir / f"{prefix}.svg",
                                             title=sc.name, ylabel="value")))
    report.elapsed = time.perf_counter() - start
    return report


__all__ = [
    "CheckOptions", "KINDS", "OutputOptions", "RunReport", "Scenario", "build_barriers",
    "build_operator", "build_problem", "build_source", "check_scenario", "initial_state",
    "load_scenario", "parse_scenario", "run",
]
