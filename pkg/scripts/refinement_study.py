"""Step-refinement study for the product formula and the semi-implicit march.

Prints sup errors against the spectral heat solution and the observed order.
"""
import argparse

import numpy as np

from semiflow.core import crandall_liggett, solve_integral
from semiflow.grid import Boundary, GridFunction
from semiflow.operators import LaplaceOperator
from semiflow.oracles import heat_spectral


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=201)
    ap.add_argument("--t", type=float, default=0.1)
    ap.add_argument("--levels", type=int, default=6)
    args = ap.parse_args()

    op = LaplaceOperator.interval(1.0, args.nodes)
    x0 = GridFunction.sample(lambda x: np.sin(np.pi * x), op.geometry, Boundary.DIRICHLET_ZERO)
    exact = heat_spectral([(1, 1.0)], 1.0, args.t, op.geometry)
    # the discrete eigenvalue separates time error from space error
    lam = op.eigenvalue((1,))
    discrete = np.exp(-lam * args.t) * x0

    print(f"{'n':>6} {'err vs spectral':>16} {'err vs discrete':>16} {'order':>6} {'march err':>12}")
    prev = None
    for n in 32 * 2 ** np.arange(args.levels):
        u = crandall_liggett(op, x0, args.t, int(n))
        march = solve_integral(op, lambda v: 0 * v, x0, args.t, int(n)).final
        e_spec, e_disc = (u - exact).norm(), (u - discrete).norm()
        order = "" if prev is None else f"{np.log2(prev / e_disc):6.3f}"
        print(f"{n:>6} {e_spec:16.6e} {e_disc:16.6e} {order:>6} {(march - u).norm():12.3e}")
        prev = e_disc


if __name__ == "__main__":
    main()
