import numpy as np
import pytest

from mkvlab import (
    InitialLaw,
    RankG,
    TimeGrid,
    VolatilitySpec,
    make_rank_drift,
)
from mkvlab.picard import picard_solve
from mkvlab.streams import NoiseBank

ACCEPT_SEED = 20250810


@pytest.fixture(scope="session")
def grid_t1():
    return TimeGrid(1.0, 200)


@pytest.fixture(scope="session")
def identity_sigma():
    return VolatilitySpec.identity(1)


@pytest.fixture(scope="session")
def point_law():
    return InitialLaw.point(0.0)


@pytest.fixture(scope="session")
def rank_identity_drift():
    return make_rank_drift(RankG.identity())


@pytest.fixture(scope="session")
def solved_mu(grid_t1, identity_sigma, point_law, rank_identity_drift):
    """Reference solution of the rank model at acceptance scale (m = 10^4)."""
    cloud, diag = picard_solve(
        rank_identity_drift,
        identity_sigma,
        point_law,
        grid_t1,
        m=10_000,
        max_iter=8,
        tol=0.03,
        bank=NoiseBank(ACCEPT_SEED),
    )
    assert diag.converged
    return cloud, diag


def random_cloud(rng, grid, size, dim=1, scale=1.0):
    """Brownian-ish cloud for probe tests; not a law of anything specific."""
    from mkvlab.state import Cloud

    steps = rng.standard_normal((size, grid.steps, dim)) * scale * np.sqrt(grid.dt)
    paths = np.concatenate([np.zeros((size, 1, dim)), np.cumsum(steps, axis=1)], axis=1)
    return Cloud(grid, paths)
