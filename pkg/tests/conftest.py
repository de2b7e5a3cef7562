import numpy as np
import pytest
from hypothesis import settings, strategies as st
from hypothesis.extra.numpy import arrays

from semiflow.grid import Boundary, Geometry, GridFunction, Norm
from semiflow.operators import LaplaceOperator, ScalarLinear

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

finite = st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False)


def vectors(n_min=1, n_max=8):
    return st.integers(n_min, n_max).flatmap(lambda n: arrays(np.float64, n, elements=finite))


def vector_pairs(n_min=1, n_max=8, k=2):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.tuples(*[arrays(np.float64, n, elements=finite) for _ in range(k)]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def heat201():
    return LaplaceOperator.interval(1.0, 201)


def sine(geometry, k=1, amp=1.0, norm_tag=Norm.SUP):
    length = geometry.lengths[0]
    return GridFunction.sample(lambda x: amp * np.sin(k * np.pi * x / length), geometry,
                               Boundary.DIRICHLET_ZERO, norm_tag)


def scalar(value, norm_tag=Norm.SUP):
    return GridFunction.vector([value], norm_tag)


# acceptance criteria record one line each; printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=ORDER.index):
        ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid} {'PASS' if ok else 'FAIL'} {detail}")


ORDER = ["CL-1", "BR-1", "SP-1", "O-1", "O-2", "RD-1", "A-1", "I-1", "SL-1", "PL-1", "PD-1"]
