import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_configure(config):
    # keep numba cache warm between test modules; nothing to configure yet
    np.seterr(over="raise")
