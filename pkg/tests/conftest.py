import numpy as np
import pytest

from trinls.model import SystemParams
from trinls.spectral import Grid2D


@pytest.fixture(scope="session")
def canonical_params() -> SystemParams:
    return SystemParams(m=(1.0, 1.0, 2.0), lam=(-1j, -1j, -1j),
                        mu=(1.0, 1.0, 2.0), kappa=(1.0, 1.0, 1.0))


@pytest.fixture(scope="session")
def free_params() -> SystemParams:
    # coefficient-free system: the operators only read the masses
    return SystemParams(m=(1.0, 1.0, 2.0), lam=(0, 0, 0), mu=(0, 0, 0),
                        kappa=(1, 1, 1), strict=False, test_mode=True)


@pytest.fixture(scope="session")
def grid() -> Grid2D:
    return Grid2D(256, 40.0)


@pytest.fixture(scope="session")
def small_grid() -> Grid2D:
    return Grid2D(64, 40.0)


@pytest.fixture(scope="session")
def adapted_gaussians(grid, free_params) -> np.ndarray:
    """Mass-adapted Gaussian triple: the j-th width matches the j-th mass."""
    r2 = grid.r2()
    return np.stack([np.exp(-m * r2 / 2).astype(complex)
                     for m in free_params.m])
