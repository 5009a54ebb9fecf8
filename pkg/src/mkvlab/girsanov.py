"""Pathwise change-of-measure machinery: stochastic exponentials and the
entropy functionals they induce.

The density of a drift change is accumulated in the log domain,

    log Z += h . dW - 0.5 |h|^2 dt,      h = sigma^-1 b difference,

with left-endpoint evaluation of h, consistent with the explicit Euler
stepping. With |h| bounded the log drifts linearly while the product form
would underflow, so Z is materialized only on read.

The central identity implemented here: the relative entropy between the
laws obtained by driving the same noise with drifts b(., ., nu) and
b(., ., mu) equals half the mu-law average of the integrated squared
sigma^-1-drift gap. That one quantity powers the solver's contraction
diagnostics and the chaos harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coefficients import DriftSpec, VolatilitySpec, zero_drift
from .engine import simulate_frozen
from .errors import GridMismatch, NonFinite, ShapeError
from .state import Cloud, InitialLaw, TimeGrid
from .streams import ITER_GIRSANOV, NoiseBank


@dataclass
class LogDensityLedger:
    """Per-path running log-density and quadratic accumulator.

    ``log_z[i]`` tracks log of the stochastic exponential along path i and
    ``quad[i]`` the running integral of |h|^2 ds.
    """

    log_z: np.ndarray
    quad: np.ndarray

    @staticmethod
    def zeros(count: int) -> "LogDensityLedger":
        return LogDensityLedger(np.zeros(count), np.zeros(count))

    def density(self) -> np.ndarray:
        return np.exp(self.log_z)


def accumulate_log_density(
    ledger: LogDensityLedger, h_t: np.ndarray, dw: np.ndarray, dt: float
) -> LogDensityLedger:
    """Advance ledgers one step: log Z += h.dW - 0.5 |h|^2 dt."""
    if dt <= 0:
        raise ShapeError("dt must be positive")
    h = np.atleast_2d(np.asarray(h_t, dtype=float))
    w = np.atleast_2d(np.asarray(dw, dtype=float))
    if h.shape != w.shape or h.shape[0] != ledger.log_z.shape[0]:
        raise ShapeError(f"ledger/h/dW shapes disagree: {h.shape} vs {w.shape}")
    sq = np.sum(h * h, axis=1)
    ledger.log_z += np.sum(h * w, axis=1) - 0.5 * sq * dt
    ledger.quad += sq * dt
    if not np.all(np.isfinite(ledger.log_z)):
        raise NonFinite("log-density became non-finite")
    return ledger


def accumulate_along(
    cloud: Cloud,
    increments: np.ndarray,
    drift: DriftSpec,
    sigma: VolatilitySpec,
    reference: Cloud | None = None,
) -> LogDensityLedger:
    """Ledger of sigma^-1 drift against the increments that built a cloud.

    ``reference`` supplies the measure argument for an unbaked drift; a
    baked drift ignores it.
    """
    grid = cloud.grid
    if increments.shape != (grid.steps, cloud.size, cloud.dim):
        raise ShapeError("increments do not match the cloud")
    ledger = LogDensityLedger.zeros(cloud.size)
    ref = reference if reference is not None else cloud
    for j in range(grid.steps):
        prefixes = cloud.prefixes(j)
        b = drift.evaluate_batch(j, prefixes, ref.prefixes(j))
        accumulate_log_density(ledger, _sigma_inv(sigma, b), increments[j], grid.dt)
    return ledger


def squared_drift_gap(
    start: float,
    end: float,
    cloud: Cloud,
    drift_a: DriftSpec,
    drift_b: DriftSpec,
    sigma: VolatilitySpec,
) -> float:
    """Cloud-averaged integral over [start, end] of |sigma^-1 (b_a - b_b)|^2.

    Measure arguments are the clouds baked into each drift; an unbaked
    drift evaluates against the integration cloud itself, which is exactly
    the self-referential first argument of the chaos functional.
    """
    grid = cloud.grid
    s_idx = grid.index_of(start)
    e_idx = grid.index_of(end)
    if s_idx >= e_idx:
        raise GridMismatch(f"need start < end on the grid, got {start} >= {end}")
    total = np.zeros(cloud.size)
    for j in range(s_idx, e_idx):
        prefixes = cloud.prefixes(j)
        va = drift_a.evaluate_batch(j, prefixes, prefixes)
        vb = drift_b.evaluate_batch(j, prefixes, prefixes)
        h = _sigma_inv(sigma, va - vb)
        total += np.sum(h * h, axis=1) * grid.dt
    return float(np.mean(total))


def path_relative_entropy(
    mu_cloud: Cloud,
    drift_of_nu: DriftSpec,
    drift_of_mu: DriftSpec,
    sigma: VolatilitySpec,
    t: float,
) -> float:
    """Relative entropy between the drift-image laws up to time t.

    Exact identity (not an estimate beyond the Monte Carlo average): half
    the mu-cloud average of the integrated squared sigma^-1-drift gap.
    """
    return 0.5 * squared_drift_gap(0.0, t, mu_cloud, drift_of_nu, drift_of_mu, sigma)


def placeholder_cloud(grid: TimeGrid, dim: int = 1) -> Cloud:
    """Single zero path; a formal measure argument for measure-free drifts."""
    return Cloud(grid, np.zeros((1, grid.steps + 1, dim)))


@dataclass(frozen=True)
class MartingaleReport:
    mean_z: float
    se: float
    count: int

    @property
    def deviation_in_se(self) -> float:
        return abs(self.mean_z - 1.0) / self.se


def martingale_report(
    drift: DriftSpec,
    sigma: VolatilitySpec,
    lambda0: InitialLaw,
    grid: TimeGrid,
    m: int,
    bank: NoiseBank,
    reference: Cloud | None = None,
    ref_size: int = 2000,
) -> MartingaleReport:
    """Empirical mean of Z_T over driftless paths; 1 in expectation.

    The integrand is the drift read against an independent reference cloud
    (simulated here unless supplied), so each ledger is adapted to its own
    path.
    """
    dim = drift.dim
    bank = bank.with_iteration(ITER_GIRSANOV + bank.iteration)
    holder = placeholder_cloud(grid, dim)
    if reference is None and drift.baked_cloud is None and drift.kind not in ("zero", "constant"):
        reference = simulate_frozen(
            zero_drift(dim), sigma, holder, lambda0, ref_size, bank, replica=0
        )
    base, dw = simulate_frozen(
        zero_drift(dim), sigma, holder, lambda0, m, bank, replica=1, return_increments=True
    )
    ledger = accumulate_along(base, dw, drift, sigma, reference)
    z = ledger.density()
    return MartingaleReport(float(z.mean()), float(z.std(ddof=1) / np.sqrt(m)), m)


@dataclass(frozen=True)
class ConsistencyReport:
    direct: float
    direct_se: float
    weighted: float
    weighted_se: float

    @property
    def combined_se(self) -> float:
        return float(np.hypot(self.direct_se, self.weighted_se))

    @property
    def gap_in_se(self) -> float:
        return abs(self.direct - self.weighted) / self.combined_se


def consistency_report(
    drift: DriftSpec,
    sigma: VolatilitySpec,
    lambda0: InitialLaw,
    grid: TimeGrid,
    m: int,
    bank: NoiseBank,
    phi,
    reference: Cloud | None = None,
    ref_size: int = 2000,
) -> ConsistencyReport:
    """Drifted expectation of phi two ways: direct versus reweighted driftless.

    ``phi`` maps a Cloud to per-path values bounded by 1. Both routes use
    the same measure argument for the drift, so they estimate the same
    number; agreement within combined standard errors is the correctness
    certificate for the whole change-of-measure stack.
    """
    dim = drift.dim
    bank = bank.with_iteration(ITER_GIRSANOV + bank.iteration)
    holder = placeholder_cloud(grid, dim)
    baked = drift
    if drift.baked_cloud is None and drift.kind not in ("zero", "constant"):
        if reference is None:
            reference = simulate_frozen(
                zero_drift(dim), sigma, holder, lambda0, ref_size, bank, replica=0
            )
        baked = drift.with_measure(reference)
    direct_cloud = simulate_frozen(baked, sigma, holder, lambda0, m, bank, replica=2)
    dvals = np.asarray(phi(direct_cloud), dtype=float)
    base, dw = simulate_frozen(
        zero_drift(dim), sigma, holder, lambda0, m, bank, replica=1, return_increments=True
    )
    z = accumulate_along(base, dw, baked, sigma).density()
    wvals = z * np.asarray(phi(base), dtype=float)
    return ConsistencyReport(
        float(dvals.mean()),
        float(dvals.std(ddof=1) / np.sqrt(m)),
        float(wvals.mean()),
        float(wvals.std(ddof=1) / np.sqrt(m)),
    )


def _sigma_inv(sigma: VolatilitySpec, values: np.ndarray) -> np.ndarray:
    if sigma.kind == "identity":
        return values
    if sigma.is_scalar:
        return values / sigma.scale
    return values @ sigma.inverse.T
