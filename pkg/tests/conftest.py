import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def line_cloud():
    """Points {0, 1, 2, 10} on the real line."""
    return np.array([[0.0], [1.0], [2.0], [10.0]])


@pytest.fixture
def ring_field():
    v = np.ones((3, 3))
    v[1, 1] = 5.0
    return v


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
