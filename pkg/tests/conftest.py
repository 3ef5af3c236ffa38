import numpy as np
import pytest

from dpsynth.datasets import make_desk_pair


@pytest.fixture(scope="session")
def desk_pair():
    return make_desk_pair(seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
