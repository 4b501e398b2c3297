import numpy as np
import pytest

from coopmpc import build_problem, example_config_path, load_config


@pytest.fixture(scope="session")
def flagship_cfg():
    return load_config(example_config_path())


@pytest.fixture(scope="session")
def flagship(flagship_cfg):
    """The shipped three-agent benchmark problem, built once per run."""
    return build_problem(flagship_cfg)


@pytest.fixture(scope="session")
def rng_factory():
    def make(seed):
        return np.random.Generator(np.random.PCG64(seed))

    return make
