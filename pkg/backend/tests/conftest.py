import numpy as np
import pytest

from app.schemas import VehicleConfig
from app.vehicle_model import initial_state


@pytest.fixture
def cfg():
    return VehicleConfig()


@pytest.fixture
def equilibrium(cfg):
    """Straight run at the nominal ride height"""
    return initial_state(cfg)


@pytest.fixture
def no_force():
    return np.zeros(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
