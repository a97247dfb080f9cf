import numpy as np
import pytest

from smc_kit.stochastics import RngStream


@pytest.fixture
def rng():
    return RngStream(123456789)


@pytest.fixture
def rng_factory():
    def make(seed=123456789, *path):
        return RngStream(seed, tuple(path))

    return make


def assert_allclose(a, b, tol=1e-12):
    np.testing.assert_allclose(a, b, rtol=0, atol=tol)
