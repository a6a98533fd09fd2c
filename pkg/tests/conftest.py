import os

os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from robust_growth import closedform  # noqa: E402


@pytest.fixture(scope="session")
def wf():
    """Wright-Fisher model ``c = x(1-x)`` with its eigenpair."""
    return closedform.get_example("ex-6.1.1")


@pytest.fixture(scope="session")
def bessel():
    return closedform.get_example("bessel-4.3")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
