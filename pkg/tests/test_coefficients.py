import numpy as np
import pytest

from mkvlab import (
    Cloud,
    InitialLaw,
    RankG,
    TimeGrid,
    VolatilitySpec,
    check_bound,
    eval_drift,
    make_constant_drift,
    make_mean_field_drift,
    make_rank_drift,
    zero_drift,
)
from mkvlab.errors import BoundViolation, EmptyInput, ShapeError

from conftest import random_cloud


def cloud_from_values(grid, values):
    """Cloud whose every path is constant at the given scalar value."""
    values = np.asarray(values, dtype=float)
    paths = np.tile(values[:, None, None], (1, grid.steps + 1, 1))
    return Cloud(grid, paths)


@pytest.fixture()
def grid():
    return TimeGrid(1.0, 4)


def test_rank_drift_counts_closed_halfline(grid):
    drift = make_rank_drift(RankG.identity())
    snapshot = cloud_from_values(grid, [-1.0, 0.0, 1.0])
    prefix = np.zeros((3, 1))
    value = eval_drift(drift, 2, prefix, snapshot)
    assert value[0] == pytest.approx(2.0 / 3.0, abs=0)


def test_constant_drift_ignores_arguments(grid):
    drift = make_constant_drift(0.7)
    snapshot = cloud_from_values(grid, [5.0, -2.0])
    assert eval_drift(drift, 1, np.full((2, 1), 3.3), snapshot)[0] == 0.7


def test_mean_field_symmetric_mean_cancels(grid):
    drift = make_mean_field_drift(
        f=lambda x, avg: np.broadcast_to(avg, x.shape).copy(),
        phi=lambda v: v,
        f_lipschitz=1.0,
        phi_bound=2.0,
        drift_bound=2.0,
    )
    snapshot = cloud_from_values(grid, [-2.0, 2.0])
    assert eval_drift(drift, 0, np.zeros((1, 1)), snapshot)[0] == 0.0


def test_mean_field_clamp_examples(grid):
    clamp = lambda v: np.clip(v, -1.0, 1.0)
    drift = make_mean_field_drift(
        f=lambda x, avg: np.broadcast_to(avg, x.shape).copy(),
        phi=clamp, f_lipschitz=1.0, phi_bound=1.0, drift_bound=1.0,
    )
    prefix = np.zeros((1, 1))
    assert eval_drift(drift, 0, prefix, cloud_from_values(grid, [0.5, -0.5]))[0] == 0.0
    assert eval_drift(drift, 0, prefix, cloud_from_values(grid, [2.0, 2.0]))[0] == 1.0
    zero_phi = make_mean_field_drift(
        f=lambda x, avg: np.broadcast_to(avg, x.shape).copy(),
        phi=lambda v: np.zeros_like(v), f_lipschitz=1.0, phi_bound=0.0, drift_bound=0.0,
    )
    assert eval_drift(zero_phi, 0, prefix, cloud_from_values(grid, [4.0]))[0] == 0.0


def test_rank_zero_g_is_zero_drift(grid):
    rng = np.random.default_rng(0)
    drift = make_rank_drift(RankG.affine(0.0, 0.0))
    zero = zero_drift(1)
    for _ in range(10):
        snapshot = random_cloud(rng, grid, 7)
        prefix = rng.standard_normal((grid.steps + 1, 1))
        t = int(rng.integers(0, grid.steps + 1))
        assert eval_drift(drift, t, prefix, snapshot)[0] == eval_drift(zero, t, prefix, snapshot)[0]


def test_rank_self_and_order_statistics(grid):
    drift = make_rank_drift(RankG.identity())
    lone = cloud_from_values(grid, [0.4])
    assert eval_drift(drift, 0, np.full((1, 1), 0.4), lone)[0] == 1.0

    values = np.array([3.0, -1.0, 0.5, 2.0, -2.5])
    snapshot = cloud_from_values(grid, values)
    for j, v in enumerate(np.sort(values), start=1):
        got = eval_drift(drift, 1, np.full((2, 1), v), snapshot)[0]
        assert got == pytest.approx(j / 5.0, abs=0)


def test_rank_monotone_and_range(grid):
    rng = np.random.default_rng(1)
    drift = make_rank_drift(RankG.tanh_scaled(2.0))
    snapshot = random_cloud(rng, grid, 11)
    xs = np.sort(rng.standard_normal(9))
    t = 3
    vals = [eval_drift(drift, t, np.full((t + 1, 1), x), snapshot)[0] for x in xs]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    lo, hi = np.tanh(0.0), np.tanh(2.0)
    assert all(lo <= v <= hi for v in vals)


def test_progressivity_future_blind(grid):
    rng = np.random.default_rng(2)
    drifts = [
        make_rank_drift(RankG.affine(0.5, 0.1)),
        make_constant_drift(0.3),
        make_mean_field_drift(
            f=lambda x, avg: np.broadcast_to(np.tanh(avg), x.shape).copy(),
            phi=lambda v: np.clip(v, -1, 1),
            f_lipschitz=1.0, phi_bound=1.0, drift_bound=1.0,
        ),
    ]
    for drift in drifts:
        for _ in range(5):
            snapshot = random_cloud(rng, grid, 6)
            prefix = rng.standard_normal((grid.steps + 1, 1))
            t = int(rng.integers(0, grid.steps))
            base = eval_drift(drift, t, prefix, snapshot)
            fut_prefix = prefix.copy()
            fut_prefix[t + 1 :] = 1e6
            fut_paths = snapshot.paths.copy()
            fut_paths[:, t + 1 :, :] = -1e6
            mutated = Cloud(grid, fut_paths)
            assert np.array_equal(eval_drift(drift, t, fut_prefix, mutated), base)


def test_bound_violation_raised(grid):
    import dataclasses

    drift = dataclasses.replace(make_constant_drift(1.0), bound=0.5)
    with pytest.raises(BoundViolation):
        eval_drift(drift, 0, np.zeros((1, 1)), cloud_from_values(grid, [0.0]))


def test_bound_respects_sigma_scale(grid):
    sigma = VolatilitySpec.scalar(2.0)
    drift = make_constant_drift(1.0, sigma)
    assert drift.bound == 0.5
    value = eval_drift(drift, 0, np.zeros((1, 1)), cloud_from_values(grid, [0.0]), sigma)
    assert value[0] == 1.0


def test_check_bound_reports(grid):
    rng = np.random.default_rng(3)
    sigma = VolatilitySpec.identity()
    probes = [
        (int(rng.integers(0, grid.steps + 1)), rng.standard_normal((grid.steps + 1, 1)), random_cloud(rng, grid, 5))
        for _ in range(8)
    ]
    zero_report = check_bound(zero_drift(1), sigma, probes)
    assert zero_report.max_norm == 0.0 and not zero_report.violations

    rank_report = check_bound(make_rank_drift(RankG.identity()), sigma, probes)
    assert rank_report.max_norm <= 1.0 and not rank_report.violations

    import dataclasses

    lying = dataclasses.replace(make_constant_drift(1.0), bound=0.5)
    bad = check_bound(lying, sigma, probes)
    assert len(bad.violations) == len(probes)
    assert bad.max_norm == 1.0

    with pytest.raises(EmptyInput):
        check_bound(zero_drift(1), sigma, [])


def test_volatility_inverse_contract():
    rng = np.random.default_rng(4)
    for spec in (
        VolatilitySpec.identity(3),
        VolatilitySpec.scalar(2.5, 2),
        VolatilitySpec.from_matrix(rng.standard_normal((3, 3)) + 4 * np.eye(3)),
    ):
        prod = spec.evaluate(0, None) @ spec.inverse_evaluate(0, None)
        assert np.allclose(prod, np.eye(spec.dim), atol=1e-10)


def test_shape_errors(grid):
    drift = make_rank_drift(RankG.identity())
    snapshot = cloud_from_values(grid, [0.0])
    with pytest.raises(ShapeError):
        eval_drift(drift, 2, np.zeros((1, 1)), snapshot)  # prefix too short
    with pytest.raises(ShapeError):
        eval_drift(drift, 0, np.zeros((1, 2)), snapshot)  # wrong dim


def test_custom_g_constant_estimation():
    g = RankG.custom(lambda u: 0.5 * np.sin(2 * np.pi * u))
    assert g.sup_abs() == pytest.approx(0.5, rel=1e-3)
    assert g.lipschitz() == pytest.approx(np.pi, rel=1e-3)
