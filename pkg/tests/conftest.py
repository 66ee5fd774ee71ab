import numpy as np
import pytest

from neumann_atlas.stardomain import StarParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def narrow():
    return StarParams(1.0, 0.1)
