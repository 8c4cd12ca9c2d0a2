import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlslab.ground_state import reference_state
from nlslab.spectral import Field, Grid

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def q1():
    return reference_state(1)


@pytest.fixture(scope="session")
def q2():
    return reference_state(2)


def random_smooth(grid: Grid, rng: np.random.Generator, kmax: float = 4.0, width: float = 3.0) -> Field:
    """Random complex field: band-limited noise under a Gaussian envelope."""
    shape = grid.shape
    spec = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    spec = spec * np.exp(-grid.k2 / (2.0 * kmax**2))
    from nlslab.spectral import ifftn

    v = ifftn(spec) * np.exp(-grid.r2 / (2.0 * width**2))
    return Field(grid, v)
