import numpy as np
import pytest

from mkvlab import (
    InitialLaw,
    RankG,
    TimeGrid,
    VolatilitySpec,
    make_constant_drift,
    make_mean_field_drift,
    make_rank_drift,
    simulate_frozen,
    zero_drift,
)
from mkvlab.errors import GridMismatch, ShapeError
from mkvlab.girsanov import (
    LogDensityLedger,
    accumulate_log_density,
    consistency_report,
    martingale_report,
    path_relative_entropy,
    placeholder_cloud,
    squared_drift_gap,
)
from mkvlab.measures import kl_hist, shared_histograms, tv_hist
from mkvlab.state import Cloud
from mkvlab.streams import NoiseBank

GRID = TimeGrid(1.0, 200)
SIGMA = VolatilitySpec.identity()
POINT = InitialLaw.point(0.0)


def test_ledger_zero_integrand_exact():
    ledger = LogDensityLedger.zeros(5)
    rng = np.random.default_rng(0)
    for _ in range(50):
        accumulate_log_density(ledger, np.zeros((5, 1)), rng.standard_normal((5, 1)), 0.01)
    assert np.all(ledger.log_z == 0.0)
    assert np.all(ledger.density() == 1.0)
    assert np.all(ledger.quad == 0.0)


def test_ledger_constant_integrand_quadratic():
    delta, steps = 0.7, 100
    dt = 1.0 / steps
    ledger = LogDensityLedger.zeros(1)
    rng = np.random.default_rng(1)
    for _ in range(steps):
        accumulate_log_density(ledger, np.array([[delta]]), rng.standard_normal((1, 1)), dt)
    assert ledger.quad[0] == pytest.approx(delta**2, abs=1e-12)


def test_ledger_shape_checks():
    ledger = LogDensityLedger.zeros(2)
    with pytest.raises(ShapeError):
        accumulate_log_density(ledger, np.zeros((3, 1)), np.zeros((2, 1)), 0.1)
    with pytest.raises(ShapeError):
        accumulate_log_density(ledger, np.zeros((2, 1)), np.zeros((2, 1)), 0.0)


@pytest.mark.parametrize(
    "drift",
    [
        zero_drift(1),
        make_constant_drift(0.3),
        make_rank_drift(RankG.identity()),
        make_rank_drift(RankG.affine(0.2, 0.0)),
        make_rank_drift(RankG.tanh_scaled(1.0)),
        make_mean_field_drift(
            f=lambda x, avg: np.broadcast_to(np.tanh(avg), x.shape).copy(),
            phi=lambda v: np.clip(v, -1, 1),
            f_lipschitz=1.0,
            phi_bound=1.0,
            drift_bound=1.0,
        ),
    ],
    ids=["zero", "const", "rank-id", "rank-02", "rank-tanh", "mean-field"],
)
def test_martingale_normalization_all_shipped_drifts(drift):
    rep = martingale_report(drift, SIGMA, POINT, GRID, 2000, NoiseBank(2))
    assert rep.deviation_in_se <= 3.0


def test_girsanov_consistency_keystone():
    drift = make_constant_drift(0.5)
    rep = consistency_report(
        drift, SIGMA, POINT, GRID, 4000, NoiseBank(3),
        phi=lambda cloud: (cloud.marginal(GRID.steps) <= 0.5).astype(float),
    )
    assert rep.gap_in_se <= 3.0


def test_drift_gap_identical_drifts_zero():
    drift = make_rank_drift(RankG.identity())
    cloud = simulate_frozen(
        zero_drift(1), SIGMA, placeholder_cloud(GRID), POINT, 50, NoiseBank(4)
    )
    baked = drift.with_measure(cloud)
    assert squared_drift_gap(0.0, 1.0, cloud, baked, baked, SIGMA) == 0.0


def test_drift_gap_constant_offset_exact():
    a = make_constant_drift(0.9)
    b = make_constant_drift(0.4)
    cloud = simulate_frozen(
        zero_drift(1), SIGMA, placeholder_cloud(GRID), POINT, 7, NoiseBank(5)
    )
    val = squared_drift_gap(0.25, 0.75, cloud, a, b, SIGMA)
    assert val == pytest.approx(0.5 * 0.25, abs=1e-12)
    with pytest.raises(GridMismatch):
        squared_drift_gap(0.5, 0.5, cloud, a, b, SIGMA)
    with pytest.raises(GridMismatch):
        squared_drift_gap(0.0, 0.1234567, cloud, a, b, SIGMA)


def test_drift_gap_rank_perturbation_bound():
    """Replacing a fraction rho of the reference paths moves the rank drift
    by at most Lip(g) * rho pointwise, so the gap obeys the declared
    TV-Lipschitz envelope."""
    g = RankG.affine(0.8, 0.0)
    drift = make_rank_drift(g)
    rho = 0.2
    base = simulate_frozen(
        zero_drift(1), SIGMA, placeholder_cloud(GRID), POINT, 200, NoiseBank(6)
    )
    perturbed_paths = base.paths.copy()
    k = int(rho * base.size)
    perturbed_paths[:k] = 50.0
    nu = Cloud(GRID, perturbed_paths)
    val = squared_drift_gap(
        0.0, 1.0, base, drift.with_measure(nu), drift.with_measure(base), SIGMA
    )
    lip = g.lipschitz()
    assert val <= 1.0 * (2.0 * lip * rho) ** 2 + 1e-12


def test_path_entropy_constant_case_exact():
    shifted = make_constant_drift(0.4)
    val = path_relative_entropy(placeholder_cloud(GRID), shifted, zero_drift(1), SIGMA, 1.0)
    assert val == pytest.approx(0.08, abs=1e-12)


def test_path_entropy_swap_invariance():
    """The integrand is a squared difference, so swapping the two drift
    arguments over a fixed integration cloud changes nothing."""
    cloud = simulate_frozen(
        zero_drift(1), SIGMA, placeholder_cloud(GRID), POINT, 64, NoiseBank(7)
    )
    drift = make_rank_drift(RankG.identity())
    a = drift.with_measure(cloud)
    b = make_constant_drift(0.25)
    assert path_relative_entropy(cloud, a, b, SIGMA, 1.0) == path_relative_entropy(
        cloud, b, a, SIGMA, 1.0
    )


def test_marginal_kl_below_path_entropy():
    """Data processing: the terminal-marginal KL cannot exceed the path KL."""
    m = 4000
    bank = NoiseBank(8)
    base = simulate_frozen(zero_drift(1), SIGMA, placeholder_cloud(GRID), POINT, m, bank, replica=0)
    shifted = simulate_frozen(
        make_constant_drift(0.4), SIGMA, placeholder_cloud(GRID), POINT, m, bank, replica=1
    )
    hp, hq = shared_histograms(shifted.marginal(GRID.steps), base.marginal(GRID.steps), 64)
    marginal = kl_hist(hp, hq, laplace_alpha=1e-4)
    assert marginal <= 0.08 + 0.02


def test_pinsker_bridge_on_simulated_laws():
    """Squared marginal TV is controlled by the exact path entropy."""
    m = 4000
    bank = NoiseBank(9)
    delta = 0.4
    base = simulate_frozen(zero_drift(1), SIGMA, placeholder_cloud(GRID), POINT, m, bank, replica=0)
    shifted = simulate_frozen(
        make_constant_drift(delta), SIGMA, placeholder_cloud(GRID), POINT, m, bank, replica=1
    )
    hp, hq = shared_histograms(shifted.marginal(GRID.steps), base.marginal(GRID.steps), 64)
    tv = tv_hist(hp, hq)
    entropy = 0.5 * delta**2  # exact, by the change-of-measure identity
    slack = 0.03  # two-sample histogram noise at m = 4000
    assert tv**2 <= 0.5 * entropy + slack
