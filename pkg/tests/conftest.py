import math

import numpy as np
import pytest

from parabolic_recon.evolve import EvolutionFamily, TimeMesh
from parabolic_recon.field import builtin
from parabolic_recon.grid import PeriodicGrid

FAMILIES = ("constant", "autonomous", "lipschitz_t", "loglip_t")


def make_field(kind, horizon=0.1, dim=1, **kw):
    if kind == "loglip_t":
        kw.setdefault("amp", 0.25)
    return builtin(kind, dim=dim, horizon=horizon, **kw)


def make_family(kind="loglip_t", n=64, steps=32, horizon=0.1, **kw):
    grid = PeriodicGrid(1, n)
    return EvolutionFamily(make_field(kind, horizon), grid, TimeMesh(0.0, horizon, steps), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


@pytest.fixture
def grid64():
    return PeriodicGrid(1, 64, 2 * math.pi)


@pytest.fixture(params=FAMILIES)
def family_kind(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    lines = test_acceptance.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
