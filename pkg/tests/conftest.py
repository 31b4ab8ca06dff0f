import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vecchia import _backend

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(params=_backend.available())
def backend(request):
    with _backend.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_locations(rng, n, d):
    return rng.uniform(size=(n, d))
