import numpy as np
import pytest

from verislice import zoo
from verislice.adapt import AdaptConfig
from verislice.model import plan_slices

REPO_ROOT = __file__.rsplit("/", 2)[0]
LENET_JSON = f"{REPO_ROOT}/models/lenet5.json"


@pytest.fixture(scope="session")
def lenet():
    return zoo.random_lenet(0)


@pytest.fixture(scope="session")
def lenet_plan(lenet):
    return plan_slices(lenet, "lenet5")


@pytest.fixture(scope="session")
def full_plan(lenet):
    return plan_slices(lenet, f"0-{lenet.n_layers}")


@pytest.fixture
def cfg16():
    return AdaptConfig(scale_bits=16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
