import numpy as np
import pytest

from csiguard.channel import make_profile
from csiguard.observation import PilotGrid


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grid114():
    """The default 114-pilot layout of a 40 MHz OFDM symbol (M = 128)."""
    return PilotGrid(128, tuple(range(2, 59)) + tuple(range(70, 127)))


@pytest.fixture(scope="session")
def small_grid():
    return PilotGrid(32, tuple(range(12)))


@pytest.fixture(scope="session")
def profile8():
    return make_profile(8, 1e-4, 0.5)
