import numpy as np
import pytest

from trajplan.arm import default_arm, sample_babbling
from trajplan.models import Standardizer


@pytest.fixture(scope="session")
def arm():
    return default_arm()


@pytest.fixture(scope="session")
def babbling_small(arm):
    return sample_babbling(arm, n=400, delta_bound=0.1, seed=11)


@pytest.fixture(scope="session")
def standardizer(babbling_small):
    return Standardizer.from_transitions(babbling_small)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
