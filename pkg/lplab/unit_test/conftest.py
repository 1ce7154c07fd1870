from pathlib import Path
import sys

import numpy as np
import pytest

project_root = Path(__file__).parent.parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from lab_service.spectral_core import Grid, random_bandlimited  # noqa: E402
from lab_service.workers import set_thread_cap  # noqa: E402


@pytest.fixture(autouse=True)
def serial_workers():
    set_thread_cap(1)
    yield
    set_thread_cap(None)


@pytest.fixture
def grid2():
    return Grid(2, 64, 1.0)


@pytest.fixture
def grid3():
    return Grid(3, 16, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def bandlimited(grid2, rng):
    return random_bandlimited(grid2, rng, grid2.j_min + 1, grid2.j_max - 1)
