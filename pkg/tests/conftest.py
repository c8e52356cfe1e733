import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nfsns.scenarios import desk_geometry, desk_grid

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
    derandomize=True,
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def desk():
    """180-element, 1 m UCA with 201 points over 16-20 GHz."""
    return desk_geometry(), desk_grid()


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))
