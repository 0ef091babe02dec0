import os

import numpy as np
import pytest

import wrtomo
from wrtomo.simulator import cylinder_mask, powder_material


#: Set to 1 to run the tests marked ``slow``.
RUN_SLOW_ENV_VAR = "WRT_RUN_SLOW"


def pytest_configure(config):
    config.addinivalue_line(
        "markers", f"slow: full-size runs, enabled by {RUN_SLOW_ENV_VAR}=1"
    )


def pytest_collection_modifyitems(config, items):
    if os.environ.get(RUN_SLOW_ENV_VAR, "") == "1":
        return
    skip = pytest.mark.skip(reason=f"set {RUN_SLOW_ENV_VAR}=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="package")
def disk_geometry():
    return wrtomo.ViewGeometry.uniform(32, nx=16, nz=1)


@pytest.fixture(scope="package")
def disk_model(disk_geometry):
    return wrtomo.SystemModel(disk_geometry)


@pytest.fixture(scope="package")
def disk_volume(disk_geometry):
    return 6e-5 * cylinder_mask(disk_geometry.volume_shape, 6).astype(float)


@pytest.fixture(scope="package")
def grid():
    return wrtomo.WavelengthGrid.linspace(2.25, 4.0, 6)


@pytest.fixture(scope="package")
def small_geometry():
    return wrtomo.ViewGeometry.uniform(24, nx=24, nz=2)


@pytest.fixture(scope="package")
def small_phantom(small_geometry, grid):
    return wrtomo.generate_phantom(
        1,
        2,
        (2.5, 3.5),
        10,
        shape=small_geometry.volume_shape,
        grid=grid,
        min_gap=1,
    )


@pytest.fixture(scope="package")
def small_simulation(small_phantom, small_geometry, grid):
    return wrtomo.simulate_measurements(
        small_phantom, small_geometry, grid, incident_flux=2000, seed=1
    )


@pytest.fixture(scope="package")
def powder(grid):
    return powder_material(grid, [(2.0, 6e-5), (5.0, 6e-5)])


@pytest.fixture
def rng():
    return np.random.default_rng(42)
