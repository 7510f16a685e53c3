import numpy as np
import pytest

from vmctl.core import PhaseGrid


@pytest.fixture
def small_grid():
    """Cheap 4D grid for unit tests."""
    return PhaseGrid(x_extent=2.0, p_extent=2.0, nx=16, np_=16, dt=0.05, nt=20)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
