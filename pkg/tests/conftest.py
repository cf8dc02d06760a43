import warnings

import pytest
from hypothesis import HealthCheck, settings

from recurrence.errors import ConsistencyWarning
from recurrence.model import ModelParams

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], max_examples=100
)
settings.load_profile("default")


@pytest.fixture
def theta_star():
    return ModelParams(n=10_000, alpha=0.5, r0=0.5, d0=1.0, r1=1.5, d1=1.0)


@pytest.fixture
def theta_prime():
    return ModelParams(n=100_000, alpha=0.8, r0=1.3, d0=1.5, r1=2.0, d1=1.2)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConsistencyWarning)
        yield
