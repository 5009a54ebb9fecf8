"""Deterministic CDF oracle for the rank-based model.

The cumulative distribution V(t, x) of the rank-interacting diffusion
solves a viscous conservation law with diffusion 1/2 and flux given by an
antiderivative of the rank function g. The solver is a conservative
explicit scheme: centered second differences for diffusion, Engquist-Osher
split-flux upwinding for the advection term. First order, but monotone,
which is what keeps every time slice a genuine CDF; the oracle's job is
trustworthy reference values, not order of accuracy.

Split antiderivative tables of max(g, 0) and min(g, 0) are precomputed by
composite Simpson on [0, 1] with value 0 at 0; the additive constant is
irrelevant under the space derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from . import kernels
from .coefficients import DriftSpec, RankG, VolatilitySpec
from .engine import simulate_coupled
from .errors import BoundaryMassError, CflViolation, GridMismatch, NonFinite, ShapeError
from .measures import empirical_cdf_curve
from .parallel import parallel_map
from .state import InitialLaw, TimeGrid
from .streams import ITER_COMPARE, NoiseBank

FLUX_TABLE_POINTS = 4097
BOUNDARY_TOL = 1e-3
VALUE_TOL = 1e-9
INITIAL_MASS_TOL = 1e-4


@dataclass(frozen=True)
class PdeGrid:
    x_min: float
    x_max: float
    nx: int
    nt: int
    horizon: float

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ShapeError("need x_min < x_max")
        if self.nx < 4 or self.nt < 1:
            raise ShapeError("grid too coarse")
        if self.horizon <= 0:
            raise ShapeError("horizon must be positive")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dt(self) -> float:
        return self.horizon / self.nt

    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx + 1)

    def cfl_limit(self, sup_g: float) -> float:
        """Largest stable/monotone dt for diffusion 1/2 and speed sup_g."""
        return self.dx * self.dx / (1.0 + self.dx * sup_g)

    def refined(self, factor: int) -> "PdeGrid":
        """Space refined by ``factor``, time by factor^2 (parabolic scaling)."""
        return PdeGrid(
            self.x_min, self.x_max, self.nx * factor, self.nt * factor * factor, self.horizon
        )


@dataclass(frozen=True)
class PdeSolution:
    grid: PdeGrid
    times: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.V.shape != (self.times.shape[0], self.grid.nx + 1):
            raise ShapeError("solution array does not match grid")

    def row_at(self, t: float) -> np.ndarray:
        idx = np.argmin(np.abs(self.times - t))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, self.grid.horizon):
            raise GridMismatch(f"time {t} not stored; nearest is {self.times[idx]}")
        return self.V[idx]

    def check_cdf_invariants(self):
        """Each stored slice must be a CDF up to tight tolerances."""
        if np.any(self.V < -VALUE_TOL) or np.any(self.V > 1.0 + VALUE_TOL):
            raise ShapeError("solution leaves [0, 1]")
        if np.any(np.diff(self.V, axis=1) < -VALUE_TOL):
            raise ShapeError("a time slice is not monotone in x")
        if np.any(np.abs(self.V[:, 0]) > BOUNDARY_TOL):
            raise ShapeError("left boundary drifted from 0")
        if np.any(np.abs(1.0 - self.V[:, -1]) > BOUNDARY_TOL):
            raise ShapeError("right boundary drifted from 1")


def default_pde_grid(
    lambda0: InitialLaw,
    horizon: float,
    sup_g: float,
    nx: int = 2048,
    safety: float = 0.9,
) -> PdeGrid:
    """Domain wide enough for diffusion plus bounded drift over [0, T]."""
    center = float(lambda0.mean[0])
    half = 6.0 * (1.0 + np.sqrt(1.0 + horizon)) * max(lambda0.spread, 1.0)
    probe = PdeGrid(center - half, center + half, nx, 1, horizon)
    nt = int(np.ceil(horizon / (safety * probe.cfl_limit(sup_g))))
    return PdeGrid(center - half, center + half, nx, nt, horizon)


def flux_tables(g) -> tuple[np.ndarray, np.ndarray]:
    """Antiderivatives of the positive and negative parts of g on [0, 1]."""
    u = np.linspace(0.0, 1.0, FLUX_TABLE_POINTS)
    gv = np.asarray(g(u), dtype=float)
    gp = cumulative_simpson(np.maximum(gv, 0.0), x=u, initial=0.0)
    gm = cumulative_simpson(np.minimum(gv, 0.0), x=u, initial=0.0)
    return gp, gm


def initial_profile(lambda0: InitialLaw, grid: PdeGrid) -> np.ndarray:
    """Initial CDF on the grid; point masses get a 2 dx wide linear ramp."""
    xs = grid.xs()
    if lambda0.kind == "point":
        loc = float(lambda0.a[0])
        v0 = np.clip((xs - loc) / (2.0 * grid.dx) + 0.5, 0.0, 1.0)
    else:
        v0 = lambda0.cdf(xs)
    outside = float(v0[0] + (1.0 - v0[-1]))
    if outside > INITIAL_MASS_TOL:
        raise BoundaryMassError(
            f"initial law has mass {outside:.3g} outside [{grid.x_min}, {grid.x_max}]"
        )
    v0 = v0.copy()
    v0[0] = 0.0
    v0[-1] = 1.0
    return v0


def fd_solve(
    g,
    lambda0: InitialLaw,
    grid: PdeGrid,
    store_every: int = 1,
) -> PdeSolution:
    """March the CDF equation on the grid, storing every ``store_every`` steps."""
    if isinstance(g, DriftSpec):
        if g.rank_g is None:
            raise ShapeError("fd_solve needs a rank drift or a plain g function")
        g = g.rank_g
    if not isinstance(g, RankG):
        g = RankG.custom(g)
    if grid.nt % store_every != 0:
        raise ShapeError("store_every must divide nt")
    sup_g = g.sup_abs()
    if grid.dt > grid.cfl_limit(sup_g) * (1.0 + 1e-12):
        raise CflViolation(
            f"dt {grid.dt:.3e} above the monotone limit {grid.cfl_limit(sup_g):.3e} "
            f"for sup|g| = {sup_g:.3g}"
        )
    gp, gm = flux_tables(g)
    v0 = initial_profile(lambda0, grid)
    rows = grid.nt // store_every + 1
    out = np.empty((rows, grid.nx + 1))
    status = kernels.burgers_march(v0, gp, gm, grid.dt, grid.dx, grid.nt, out, store_every)
    if status != kernels.STATUS_OK:
        raise NonFinite("PDE marching produced non-finite values")
    times = np.arange(rows) * (store_every * grid.dt)
    sol = PdeSolution(grid, times, out)
    sol.check_cdf_invariants()
    return sol


@dataclass(frozen=True)
class CdfComparisonRow:
    time: float
    sup_err: float
    l1_err: float
    samples: int


def compare_particle_pde(
    n: int,
    replicas: int,
    drift: DriftSpec,
    lambda0: InitialLaw,
    pde_grid: PdeGrid,
    times,
    sde_grid: TimeGrid,
    bank: NoiseBank,
    threads: int = 1,
) -> list[CdfComparisonRow]:
    """Distance between the pooled particle empirical CDF and the PDE slice.

    Requested times must sit on the SDE grid; the PDE is marched with a
    step count divisible by the SDE step count so the same instants are
    stored exactly.
    """
    if drift.rank_g is None or drift.dim != 1:
        raise ShapeError("particle/PDE comparison requires the 1-D rank model")
    if abs(pde_grid.horizon - sde_grid.horizon) > 1e-12:
        raise GridMismatch("PDE and SDE grids must share the horizon")
    times = [float(t) for t in times]
    t_indices = [sde_grid.index_of(t) for t in times]
    steps_mult = int(np.ceil(pde_grid.nt / sde_grid.steps))
    aligned = PdeGrid(
        pde_grid.x_min, pde_grid.x_max, pde_grid.nx,
        steps_mult * sde_grid.steps, pde_grid.horizon,
    )
    sol = fd_solve(drift.rank_g, lambda0, aligned, store_every=steps_mult)

    sigma = VolatilitySpec.identity(1)
    cbank = bank.with_iteration(ITER_COMPARE + bank.iteration)

    def one(r: int) -> np.ndarray:
        cloud = simulate_coupled(drift, sigma, lambda0, n, sde_grid, cbank, replica=r)
        return cloud.paths[:, t_indices, 0]

    stacked = np.concatenate(parallel_map(one, replicas, threads), axis=0)
    xs = aligned.xs()
    rows = []
    for col, (t, t_idx) in enumerate(zip(times, t_indices)):
        emp = empirical_cdf_curve(stacked[:, col], xs)
        ref = sol.row_at(t_idx * sde_grid.dt)
        diff = np.abs(emp - ref)
        rows.append(
            CdfComparisonRow(
                time=t,
                sup_err=float(diff.max()),
                l1_err=float(np.sum(diff) * aligned.dx),
                samples=stacked.shape[0],
            )
        )
    return rows
