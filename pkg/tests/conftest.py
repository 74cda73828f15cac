import numpy as np
import pytest

from scalarspring.dataset import DatasetConfig, generate_dataset
from scalarspring.integrate import IntegratorConfig
from scalarspring.physics import SystemParams


@pytest.fixture(scope="session")
def params():
    return SystemParams()


@pytest.fixture(scope="session")
def small_dataset(params):
    """A dozen real trajectories; enough for pipeline tests, fast to build."""
    config = DatasetConfig(n_trajectories=12, n_labels=5, seed=11)
    return generate_dataset(params, config, IntegratorConfig()), config


def random_state_flat(rng: np.random.Generator) -> np.ndarray:
    """A generic bounded phase state around the hanging configuration."""
    z = np.zeros(12)
    z[0:3] = rng.normal((0.0, 0.0, -3.0), 0.8)
    z[3:6] = rng.normal((0.0, 0.0, -5.0), 0.8)
    z[6:12] = rng.normal(0.0, 1.0, 6)
    return z
