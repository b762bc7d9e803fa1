import numpy as np
import pytest

from sqrk.problems import GenSpec, gen_gaussian_system


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_system():
    return gen_gaussian_system(GenSpec(400, 10, beta=0.01, x_star_policy="gaussian", seed=3))


@pytest.fixture(scope="session")
def clean_system():
    return gen_gaussian_system(GenSpec(300, 8, beta=0.0, x_star_policy="gaussian", seed=4))
