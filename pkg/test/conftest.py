import numpy as np
import pytest

from congestion_mfc.src.grid.spatial import sample_density
from congestion_mfc.src.grid.torus import SpaceTimeField, Staggering, TorusGrid
from congestion_mfc.src.model.congestion_model import CongestionModel


@pytest.fixture
def uniform_model():
    # l(x, m) = m
    return CongestionModel(alpha=0.5, beta=2.0, q=2.0, kappa=1.0, nu=0.05, cost="zero")


@pytest.fixture
def flat_congestion_model():
    # alpha = 0: H = -|p|^2 + m
    return CongestionModel(alpha=0.0, beta=2.0, q=2.0, kappa=1.0, nu=0.05, cost="zero")


@pytest.fixture
def small_grid():
    return TorusGrid(d=1, nx=16, nt=8, T=1.0)


@pytest.fixture
def tiny_grid():
    return TorusGrid(d=1, nx=8, nt=4, T=1.0)


@pytest.fixture
def grid_2d():
    return TorusGrid(d=2, nx=6, nt=4, T=1.0)


@pytest.fixture
def cosine_m0(small_grid):
    return sample_density(small_grid, {"kind": "cosine", "offset": 1.0, "amplitude": 0.5})


@pytest.fixture
def uniform_phi():
    def build(grid: TorusGrid) -> SpaceTimeField:
        t = grid.time_nodes()
        values = np.broadcast_to(
            (2.0 * (grid.T - t)).reshape((-1,) + (1,) * grid.d),
            grid.shape(Staggering.NODE_TIME),
        ).copy()
        return SpaceTimeField(grid, values, Staggering.NODE_TIME)

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
