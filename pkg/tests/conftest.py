import numpy as np
import pytest

from deconfound import Panel, SimulationConfig, simulate


@pytest.fixture(scope="session")
def small_panel() -> Panel:
    """Default-dynamics panel small enough for fast unit tests."""
    return simulate(SimulationConfig(T=600, k=3, p=3, gamma_a=0.5, gamma_y=0.5, seed=7))


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
