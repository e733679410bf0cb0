"""Shared parameter sets and solved fixtures.

canonical   r=0.02, mu=0.06, sigma=0.20, c=1, lam=0.04, L=10
            (r - lam + delta = 0, so b1 = sqrt(2) = -b2 exactly)
second      r=0.03, mu=0.08, sigma=0.25, c=1, lam=0.05, L=5
rgtl        r=0.06, mu=0.10, sigma=0.20, c=1, lam=0.02, L=10  (r > lam)
"""

import pytest

from underwater import fbp
from underwater.model import ModelParams, constants, validate


CANONICAL = ModelParams(r=0.02, mu=0.06, sigma=0.20, c=1.0, lam=0.04, L=10.0)
SECOND = ModelParams(r=0.03, mu=0.08, sigma=0.25, c=1.0, lam=0.05, L=5.0)
RGTL = ModelParams(r=0.06, mu=0.10, sigma=0.20, c=1.0, lam=0.02, L=10.0)


@pytest.fixture(scope="session")
def canonical():
    return validate(CANONICAL)


@pytest.fixture(scope="session")
def canonical_constants(canonical):
    return constants(canonical)


@pytest.fixture(scope="session")
def canonical_sol(canonical):
    return fbp.solve(canonical)


@pytest.fixture(scope="session")
def second():
    return validate(SECOND)


@pytest.fixture(scope="session")
def second_sol(second):
    return fbp.solve(second)


@pytest.fixture(scope="session")
def rgtl():
    return validate(RGTL)


@pytest.fixture(scope="session")
def rgtl_sol(rgtl):
    return fbp.solve(rgtl)
