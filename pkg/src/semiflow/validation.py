"""Quick oracle cross-checks behind ``semiflow validate``."""

from __future__ import annotations

import math

import numpy as np

from .core import crandall_liggett
from .grid import Boundary, Geometry, GridFunction
from .operators import (
    LaplaceOperator, PLaplaceOperator, PLaplaceSpec, TransportBirthOperator, TransportBirthSpec,
)
from .oracles import (
    heat_spectral, perron_max_solution, plaplace_energy_min, rk4_scalar,
)


def _heat_product_formula():
    op = LaplaceOperator.interval(1.0, 201)
    x0 = heat_spectral([(1, 1.0)], 1.0, 0.0, op.geometry)
    err = (crandall_liggett(op, x0, 0.1, 1024) - heat_spectral([(1, 1.0)], 1.0, 0.1, op.geometry)).norm()
    return err <= 5e-3, f"sup error {err:.3e} at n=1024"


def _plaplace_p2():
    spec = PLaplaceSpec(2.0, 1.0, 49)
    g = GridFunction.sample(lambda x: x * (1 - x) * np.cos(3 * x), spec.geometry, Boundary.DIRICHLET_ZERO)
    a = PLaplaceOperator(spec).resolve(0.05, g)
    b = LaplaceOperator.interval(1.0, 51).resolve(0.05, g)
    err = (a - b).norm()
    return err <= 1e-10, f"p=2 vs Laplacian {err:.2e}"


def _plaplace_energy():
    spec = PLaplaceSpec(3.0, 1.0, 5)
    g = np.zeros(7)
    g[3] = 1.0
    u = PLaplaceOperator(spec).resolve(0.1, GridFunction(g, spec.geometry, Boundary.DIRICHLET_ZERO)).values
    ref = plaplace_energy_min(3.0, 1.0, 0.1, g)
    err = float(np.max(np.abs(u - ref)))
    return err <= 1e-8, f"Newton vs coordinate descent {err:.2e}"


def _transport_zero_birth():
    spec = TransportBirthSpec(1.0, 101, np.zeros(101))
    op = TransportBirthOperator(spec)
    lam = 0.1
    u = op.resolve(lam, op.state(np.ones(101))).values
    k = lam / op.dx
    exact = 1.0 - (k / (1.0 + k)) ** np.arange(101)
    err = float(np.max(np.abs(u - exact)))
    return err <= 1e-12, f"beta=0 upwind closed form {err:.2e}"


def _rk4():
    err = abs(rk4_scalar(lambda x: x, 1.0, 1.0, 100).final - math.e)
    return err <= 1e-9, f"rk4 e error {err:.2e}"


def _perron():
    sol = perron_max_solution(lambda x: 2 * math.sqrt(x), 0.0, 1.0,
                              eps_schedule=[10.0 ** -k for k in range(1, 13)])
    err = abs(sol.final - 1.0)
    return err <= 1e-4, f"maximal solution of x'=2 sqrt(x) at t=1 off by {err:.2e}"


CHECKS = {
    "heat product formula": _heat_product_formula,
    "p-Laplacian p=2 reduction": _plaplace_p2,
    "p-Laplacian energy oracle": _plaplace_energy,
    "transport closed form": _transport_zero_birth,
    "rk4 exponential": _rk4,
    "perron maximal solution": _perron,
}


def run_validation():
    out = []
    for name, fn in CHECKS.items():
        ok, detail = fn()
        out.append((name, bool(ok), detail))
    return out
