import os

import numpy as np
import pytest

from utils.autodiff import Tape
from utils.config import parse_config_text
from utils.data import make_reflection_task
from utils.nn import DiscriminatorSpec, GeneratorSpec

SMALL_CONFIG = """
[task]
name = reflection
n = 100

[run]
epochs = 2

[eval]
every = 1
n_eval = 40

[output]
checkpoint_every = 0
dump_samples = 4
"""


def pytest_collection_modifyitems(config, items):
    if os.environ.get("ONE2ONE_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="end-to-end training run; set ONE2ONE_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tape():
    with Tape() as t:
        yield t


@pytest.fixture
def vector_specs():
    return GeneratorSpec("vector", (2, 8, 2)), DiscriminatorSpec("vector", (2, 8, 1))


@pytest.fixture
def conv_specs():
    return (GeneratorSpec("conv", (1, 4, 8, 4, 1), 8, 8),
            DiscriminatorSpec("conv", (1, 4, 8, 1), 8, 8))


@pytest.fixture(scope="session")
def reflection_task():
    return make_reflection_task(seed=0, n=100)


@pytest.fixture
def small_config():
    return parse_config_text(SMALL_CONFIG)


def pair_collision_rate(inputs, outputs, eps_in, eps_out):
    """Collision rate by explicit scan over every unordered pair"""
    n = len(inputs)
    flat_in = inputs.reshape(n, -1)
    flat_out = outputs.reshape(n, -1)
    pairs = collisions = 0
    for i in range(n):
        for j in range(i + 1, n):
            pairs += 1
            far = np.sqrt(np.sum((flat_in[i] - flat_in[j]) ** 2)) > eps_in
            close = np.sqrt(np.sum((flat_out[i] - flat_out[j]) ** 2)) < eps_out
            collisions += bool(far and close)
    return collisions / pairs
