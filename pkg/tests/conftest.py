import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def square():
    from torusflow.fixtures import square_grid
    return square_grid(32)


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)
