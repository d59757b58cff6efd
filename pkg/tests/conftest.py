from fractions import Fraction

import numpy as np
import pytest

from contestdesign.measures import GridDomain, GridMeasure


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_grid():
    return GridDomain.linspace(0.0, 1.0, 101)


@pytest.fixture
def uniform(unit_grid):
    return GridMeasure.uniform(unit_grid)


def random_rational_masses(rng, n, denom=60):
    raw = [int(v) for v in rng.integers(1, denom, size=n)]
    total = sum(raw)
    return [Fraction(r, total) for r in raw]
