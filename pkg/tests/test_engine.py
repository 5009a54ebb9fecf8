import dataclasses

import numpy as np
import pytest

from mkvlab import (
    Cloud,
    InitialLaw,
    RankG,
    TimeGrid,
    VolatilitySpec,
    euler_step,
    make_constant_drift,
    make_rank_drift,
    simulate_coupled,
    simulate_frozen,
    zero_drift,
)
from mkvlab.coefficients import make_custom_drift
from mkvlab.errors import BoundViolation, NonFinite
from mkvlab.girsanov import placeholder_cloud
from mkvlab.measures import empirical_cdf
from mkvlab.streams import NoiseBank


GRID = TimeGrid(1.0, 50)
SIGMA = VolatilitySpec.identity()
POINT = InitialLaw.point(0.0)


def test_euler_step_examples():
    w = np.array([0.3])
    assert np.array_equal(euler_step([0.0], [0.0], np.eye(1), w, 0.1), w)
    assert euler_step([1.0], [2.0], np.eye(1), [0.0], 0.5)[0] == 2.0
    assert euler_step([0.0], [0.0], 2 * np.eye(1), [1.0], 0.25)[0] == 2.0


def test_euler_step_nonfinite():
    with pytest.raises(NonFinite):
        euler_step([1e308], [1e308], np.eye(1), [0.0], 1.0)


def test_frozen_zero_drift_is_cumsum_of_increments():
    bank = NoiseBank(3)
    cloud, dw = simulate_frozen(
        zero_drift(1), SIGMA, placeholder_cloud(GRID), POINT, 4, bank, return_increments=True
    )
    rebuilt = np.cumsum(dw[:, 0, 0])
    assert np.array_equal(cloud.paths[0, 1:, 0], rebuilt)
    assert np.all(cloud.paths[:, 0, 0] == 0.0)


def test_frozen_constant_drift_gaussian_mean():
    a, m = 0.8, 10_000
    cloud = simulate_frozen(
        make_constant_drift(a), SIGMA, placeholder_cloud(GRID), POINT, m, NoiseBank(4)
    )
    # exact law of X_T is N(aT, T)
    err = abs(cloud.marginal(GRID.steps).mean() - a * GRID.horizon)
    assert err <= 3.0 * np.sqrt(GRID.horizon / m)


def test_rank_against_remote_point_reduces_to_constant():
    # frozen cloud far above every path: rank is 0, so drift is g(0) = b
    g = RankG.affine(1.0, 0.3)
    remote = Cloud(GRID, np.full((1, GRID.steps + 1, 1), 1e12))
    bank = NoiseBank(5)
    ranked = simulate_frozen(make_rank_drift(g), SIGMA, remote, POINT, 6, bank)
    constant = simulate_frozen(
        make_constant_drift(0.3), SIGMA, placeholder_cloud(GRID), POINT, 6, bank
    )
    assert np.array_equal(ranked.paths, constant.paths)


def test_coupled_matches_frozen_for_measure_free_drift():
    bank = NoiseBank(6)
    drift = make_constant_drift(-0.4)
    coupled = simulate_coupled(drift, SIGMA, POINT, 8, GRID, bank)
    frozen = simulate_frozen(drift, SIGMA, placeholder_cloud(GRID), POINT, 8, bank)
    assert np.array_equal(coupled.paths, frozen.paths)


def test_single_particle_rank_is_unit_drift():
    bank = NoiseBank(7)
    coupled = simulate_coupled(make_rank_drift(RankG.identity()), SIGMA, POINT, 1, GRID, bank)
    constant = simulate_frozen(
        make_constant_drift(1.0), SIGMA, placeholder_cloud(GRID), POINT, 1, bank
    )
    assert np.array_equal(coupled.paths, constant.paths)


def test_single_particle_rank_mean_over_replicas():
    drift = make_rank_drift(RankG.identity())
    bank = NoiseBank(8)
    reps = 400
    vals = [
        simulate_coupled(drift, SIGMA, POINT, 1, GRID, bank, replica=r).marginal(GRID.steps)[0]
        for r in range(reps)
    ]
    # exact law is N(T, T)
    err = abs(np.mean(vals) - GRID.horizon)
    assert err <= 3.0 * np.sqrt(GRID.horizon / reps)


def test_stream_permutation_permutes_paths():
    drift = make_rank_drift(RankG.identity())
    bank = NoiseBank(9)
    n = 12
    base = simulate_coupled(drift, SIGMA, POINT, n, GRID, bank)
    perm = np.random.default_rng(1).permutation(n)
    permuted = simulate_coupled(drift, SIGMA, POINT, n, GRID, bank, slots=perm)
    assert np.array_equal(permuted.paths, base.paths[perm])
    # symmetric statistic is bit-identical
    x = 0.37
    assert empirical_cdf(permuted.marginal(GRID.steps), x) == empirical_cdf(
        base.marginal(GRID.steps), x
    )


def test_determinism_same_seed():
    drift = make_rank_drift(RankG.tanh_scaled(1.5))
    a = simulate_coupled(drift, SIGMA, POINT, 20, GRID, NoiseBank(10))
    b = simulate_coupled(drift, SIGMA, POINT, 20, GRID, NoiseBank(10))
    assert np.array_equal(a.paths, b.paths)


def test_frozen_chunks_match_single_call(solved_mu):
    mu, _ = solved_mu
    drift = make_rank_drift(RankG.identity())
    bank = NoiseBank(11)
    total = 300
    whole = simulate_frozen(drift, VolatilitySpec.identity(), mu, POINT, total, bank)
    left = simulate_frozen(
        drift, VolatilitySpec.identity(), mu, POINT, 120, bank, particle_offset=0, m_total=total
    )
    right = simulate_frozen(
        drift, VolatilitySpec.identity(), mu, POINT, 180, bank, particle_offset=120, m_total=total
    )
    assert np.array_equal(np.vstack([left.paths, right.paths]), whole.paths)


def test_snapshot_barrier():
    """No particle update may observe another particle's updated state."""
    grid = TimeGrid(1.0, 5)
    seen = {}

    def recording(t_idx, prefixes, snap):
        seen[t_idx] = snap[:, -1, 0].copy()
        return np.zeros((prefixes.shape[0], 1)) + 0.5

    drift = make_custom_drift(recording, bound=0.5)
    cloud = simulate_coupled(drift, SIGMA, InitialLaw.gaussian(0, 1), 6, grid, NoiseBank(12))
    for j, snap_vals in seen.items():
        assert np.array_equal(snap_vals, cloud.paths[:, j, 0])


def test_bound_violation_propagates():
    lying = dataclasses.replace(make_constant_drift(1.0), bound=0.25)
    with pytest.raises(BoundViolation):
        simulate_frozen(lying, SIGMA, placeholder_cloud(GRID), POINT, 3, NoiseBank(13))
    rank_lying = dataclasses.replace(make_rank_drift(RankG.identity()), bound=0.5)
    with pytest.raises(BoundViolation):
        simulate_coupled(rank_lying, SIGMA, POINT, 4, GRID, NoiseBank(13))


def test_nonfinite_detected():
    exploding = make_custom_drift(
        lambda t, prefixes, snap: np.full((prefixes.shape[0], 1), 1e307),
        bound=float("inf"),
    )
    with pytest.raises(NonFinite):
        simulate_coupled(exploding, SIGMA, POINT, 2, TimeGrid(1.0, 8), NoiseBank(14))


def test_generic_tier_matches_kernel_tier_for_rank():
    """The vectorized fallback and the kernel tier share arithmetic exactly."""
    drift = make_rank_drift(RankG.affine(0.7, -0.1))
    generic = make_custom_drift(drift._batch, bound=drift.bound)
    bank = NoiseBank(15)
    fast = simulate_coupled(drift, SIGMA, POINT, 30, GRID, bank)
    slow = simulate_coupled(generic, SIGMA, POINT, 30, GRID, bank)
    assert np.array_equal(fast.paths, slow.paths)


def test_scalar_sigma_scaling():
    bank = NoiseBank(16)
    one = simulate_frozen(
        zero_drift(1), VolatilitySpec.identity(), placeholder_cloud(GRID), POINT, 5, bank
    )
    two = simulate_frozen(
        zero_drift(1), VolatilitySpec.scalar(2.0), placeholder_cloud(GRID), POINT, 5, bank
    )
    assert np.allclose(two.paths, 2.0 * one.paths, rtol=0, atol=0)
