import numpy as np
import pytest

from condlab.constitutive import Linear, MaterialMap, PowerLaw
from condlab.mesh import build_disk_mesh, build_rect_mesh


@pytest.fixture(scope="session")
def disk():
    """Unit disk, coarse enough for fast nonlinear solves."""
    return build_disk_mesh(1.0, 0.15)


@pytest.fixture(scope="session")
def disk_fine():
    return build_disk_mesh(1.0, 0.08)


@pytest.fixture(scope="session")
def square():
    return build_rect_mesh(1.0, 1.0, 0.25)


@pytest.fixture
def linear_unit():
    return MaterialMap({0: Linear(1.0)})


@pytest.fixture
def power4():
    return MaterialMap({0: PowerLaw(sigma_bar=2.0, e0=1.0, p=4.0)})


@pytest.fixture
def rng():
    return np.random.default_rng(42)
