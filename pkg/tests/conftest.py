import numpy as np
import pytest

from core.fields import make_grid, make_test_potential
from core.models import ConstantsLedger


@pytest.fixture(scope="session")
def grid33():
    return make_grid(2, 33)


@pytest.fixture(scope="session")
def grid65():
    return make_grid(2, 65)


@pytest.fixture(scope="session")
def bump33(grid33):
    return make_test_potential(grid33, "gaussian_bump", {"width": 0.1, "amplitude": 0.5})


@pytest.fixture(scope="session")
def bump65(grid65):
    return make_test_potential(grid65, "gaussian_bump", {"width": 0.08, "amplitude": 1.0})


@pytest.fixture
def ledger2():
    return ConstantsLedger(n=2)


@pytest.fixture
def ledger3():
    return ConstantsLedger(n=3)


@pytest.fixture
def rng():
    return np.random.default_rng(7)
