import numpy as np
import pytest

from steerkit.lqr import LqrWeights, build_schedule
from steerkit.models import VehicleParams


@pytest.fixture(scope="session")
def params():
    return VehicleParams()


@pytest.fixture(scope="session")
def kinematic_schedule(params):
    grid = np.arange(1.0, 16.0, 1.0)
    return build_schedule(grid, "kinematic", params, LqrWeights((1.0, 1.0), 1.0), dt=0.02)


@pytest.fixture(scope="session")
def dynamic_schedule(params):
    grid = np.arange(1.0, 16.0, 1.0)
    return build_schedule(grid, "dynamic", params, LqrWeights((1.0, 1.0, 1.0, 1.0), 1.0), dt=0.02)
