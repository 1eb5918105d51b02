import numpy as np
import pytest

from freqmia.diffusion import linear_schedule


@pytest.fixture(scope="session")
def small_sched():
    """Short schedule for cheap diffusion stepping tests."""
    return linear_schedule(50, 1e-3, 0.05)


@pytest.fixture(scope="session")
def std_sched():
    """The harness default schedule."""
    return linear_schedule(1000, 1e-4, 0.02)


def zero_denoiser(x, t):
    return np.zeros_like(x)


def make_const_denoiser(c):
    """State- and timestep-independent stub returning the fixed array c."""
    c = np.asarray(c, dtype=np.float64)

    def denoiser(x, t):
        return c.copy()

    return denoiser
