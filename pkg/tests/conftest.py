import random
import sys
from pathlib import Path

import pytest
import sympy as sp

from diffiety.diffiety import contact_diffiety, from_resolved_ode, independent, jet
from diffiety.symkernel import AssumptionSet, opaque

FIXTURES = Path(__file__).parent / "fixtures"

x = independent()
F = opaque("F", 1)
F1 = opaque("F", (1,))
F2 = opaque("F", (2,))
A, B = sp.symbols("A B")


def example4():
    """du/dx = F(dv/dx) with F'' nonvanishing."""
    return from_resolved_ode(2, {1: F(jet(2, 1))}, AssumptionSet([F2(jet(2, 1))]))


def example4_singular(b=B):
    return from_resolved_ode(2, {1: A * jet(2, 1) + b}, AssumptionSet([A]), parameters=("A", "B"))


def example5(m):
    """dw1/dx = F(x, w1, ..., wm) with dF/dwm nonvanishing."""
    args = [x] + [jet(j, 0) for j in range(1, m + 1)]
    Fm = opaque("F", m + 1)(*args)
    dFm = opaque("F", tuple(1 if k == m else 0 for k in range(m + 1)))(*args)
    return from_resolved_ode(m, {1: Fm}, AssumptionSet([dFm]))


def random_poly(rng, coords, terms=3, degree=2):
    out = sp.Integer(0)
    for _ in range(terms):
        mono = sp.Integer(rng.choice([-3, -2, -1, 1, 2, 3]))
        for _ in range(rng.randint(0, degree)):
            mono *= rng.choice(coords)
        out += mono
    return out


@pytest.fixture(scope="session")
def ex4():
    return example4()


@pytest.fixture(scope="session")
def ex4_singular():
    return example4_singular()


@pytest.fixture(scope="session")
def contact2():
    return contact_diffiety(2)


@pytest.fixture
def rng():
    return random.Random(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
