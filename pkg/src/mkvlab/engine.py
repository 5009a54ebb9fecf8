"""Euler-Maruyama engines for frozen-measure and coupled particle dynamics.

Two simulators share one stepping rule x <- x + (b dt + sigma dW):

* :func:`simulate_frozen` advances iid paths whose drift reads a fixed
  reference cloud. This is one application of the solution map that sends
  a candidate law to the law of the SDE driven by it.
* :func:`simulate_coupled` advances n interacting particles whose drift
  reads the batch's own empirical snapshot, refreshed once per step before
  any particle moves.

Rank drifts with scalar volatility in one dimension dispatch to the hot
kernels; zero and constant drifts use an equivalent sequential update; all
other coefficients run a generic vectorized step loop. All routes consume
identical pre-generated noise, so outputs depend only on (seed, config).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .coefficients import DriftSpec, VolatilitySpec, bound_threshold, sigma_inv_norms
from .errors import BoundViolation, NonFinite, ShapeError
from .state import Cloud, InitialLaw, TimeGrid, sorted_marginals
from .streams import NoiseBank


def euler_step(x_t, drift_val, sigma_val, dw, dt: float) -> np.ndarray:
    """One explicit step x + (b dt + sigma dW) with a finiteness check."""
    x_t = np.asarray(x_t, dtype=float)
    drift_val = np.asarray(drift_val, dtype=float)
    dw = np.asarray(dw, dtype=float)
    if dt <= 0:
        raise ShapeError("dt must be positive")
    sigma_val = np.asarray(sigma_val, dtype=float)
    out = x_t + (drift_val * dt + sigma_val @ dw)
    if not np.all(np.isfinite(out)):
        raise NonFinite("euler_step produced non-finite state")
    return out


def simulate_frozen(
    drift: DriftSpec,
    sigma: VolatilitySpec,
    frozen: Cloud,
    lambda0: InitialLaw,
    m: int,
    bank: NoiseBank,
    replica: int = 0,
    particle_offset: int = 0,
    m_total: int | None = None,
    slots: np.ndarray | None = None,
    return_increments: bool = False,
):
    """Simulate m iid paths with the drift's measure argument frozen.

    The drift only ever sees ``frozen`` (or its own baked cloud), never the
    batch being generated. ``particle_offset``/``m_total`` let callers
    split one logical population across calls without changing any path.
    """
    if m < 1:
        raise ShapeError("need at least one path")
    _check_dims(drift, sigma, lambda0)
    if frozen.dim != drift.dim:
        raise ShapeError("frozen cloud dimension mismatch")
    grid = frozen.grid
    total = m_total if m_total is not None else particle_offset + m
    x0, dw = bank.draw_noise(replica, lambda0, grid, particle_offset, m, total, slots)
    ref = drift.baked_cloud if drift.baked_cloud is not None else frozen
    cloud = _run(drift, sigma, grid, x0, dw, ref_cloud=ref, coupled=False)
    return (cloud, dw) if return_increments else cloud


def simulate_coupled(
    drift: DriftSpec,
    sigma: VolatilitySpec,
    lambda0: InitialLaw,
    n: int,
    grid: TimeGrid,
    bank: NoiseBank,
    replica: int = 0,
    slots: np.ndarray | None = None,
    return_increments: bool = False,
):
    """Simulate the coupled n-particle system.

    Every step forms the empirical snapshot of all n current states once,
    then advances each particle against that same snapshot.
    """
    if n < 1:
        raise ShapeError("need at least one particle")
    _check_dims(drift, sigma, lambda0)
    x0, dw = bank.draw_noise(replica, lambda0, grid, 0, n, n, slots)
    cloud = _run(drift, sigma, grid, x0, dw, ref_cloud=None, coupled=True)
    return (cloud, dw) if return_increments else cloud


def _check_dims(drift, sigma, lambda0):
    if not (drift.dim == sigma.dim == lambda0.dim):
        raise ShapeError(
            f"dimension mismatch: drift {drift.dim}, sigma {sigma.dim}, lambda0 {lambda0.dim}"
        )


def _run(drift, sigma, grid, x0, dw, ref_cloud, coupled) -> Cloud:
    family = drift.kernel_family
    if family == "rank" and sigma.is_scalar:
        return _run_rank_kernel(drift, sigma, grid, x0, dw, ref_cloud, coupled)
    if family == "const":
        return _run_const(drift, sigma, grid, x0, dw)
    return _run_generic(drift, sigma, grid, x0, dw, ref_cloud, coupled)


def _run_rank_kernel(drift, sigma, grid, x0, dw, ref_cloud, coupled) -> Cloud:
    g = drift.rank_g
    thresh = bound_threshold(drift.bound)
    sig = sigma.scale
    if coupled and ref_cloud is None:
        paths, status, bad = kernels.rank_coupled_paths(
            x0[:, 0], dw[:, :, 0], g.kernel_code, g.a, g.b, grid.dt, sig, thresh
        )
    else:
        tab = sorted_marginals(ref_cloud)[: grid.steps]
        paths, status, bad = kernels.rank_frozen_paths(
            x0[:, 0], dw[:, :, 0], tab, g.kernel_code, g.a, g.b, grid.dt, sig, thresh
        )
    _raise_status(status, bad, drift.bound)
    return Cloud(grid, paths[:, :, None])


def _run_const(drift, sigma, grid, x0, dw) -> Cloud:
    b = drift.const_value
    norm = float(sigma_inv_norms(sigma, b[None, :])[0])
    if norm > bound_threshold(drift.bound):
        raise BoundViolation(norm, drift.bound, where="constant drift")
    count, dim = x0.shape
    paths = np.empty((count, grid.steps + 1, dim))
    states = x0.copy()
    paths[:, 0, :] = states
    for j in range(grid.steps):
        states = states + (b * grid.dt + _apply_sigma(sigma, dw[j]))
        paths[:, j + 1, :] = states
    _finite_or_raise(paths)
    return Cloud(grid, paths)


def _run_generic(drift, sigma, grid, x0, dw, ref_cloud, coupled) -> Cloud:
    count, dim = x0.shape
    thresh = bound_threshold(drift.bound)
    paths = np.empty((count, grid.steps + 1, dim))
    paths[:, 0, :] = x0
    for j in range(grid.steps):
        prefixes = paths[:, : j + 1, :]
        snap = prefixes if coupled else ref_cloud.prefixes(j)
        b = drift.evaluate_batch(j, prefixes, snap)
        worst = float(np.max(sigma_inv_norms(sigma, b)))
        if worst > thresh:
            raise BoundViolation(worst, drift.bound, where=f"step {j}")
        states = paths[:, j, :] + (b * grid.dt + _apply_sigma(sigma, dw[j]))
        if not np.all(np.isfinite(states)):
            raise NonFinite(f"non-finite state at step {j + 1}")
        paths[:, j + 1, :] = states
    return Cloud(grid, paths)


def _apply_sigma(sigma: VolatilitySpec, dw: np.ndarray) -> np.ndarray:
    if sigma.kind == "identity":
        return dw
    if sigma.is_scalar:
        return sigma.scale * dw
    return dw @ sigma.matrix.T


def _finite_or_raise(paths):
    if not np.all(np.isfinite(paths)):
        raise NonFinite("simulation produced non-finite states")


def _raise_status(status, bad, bound):
    if status == kernels.STATUS_BOUND:
        raise BoundViolation(bad, bound, where="kernel step")
    if status == kernels.STATUS_NONFINITE:
        raise NonFinite("simulation produced non-finite states")
