"""Core state containers: time grids, initial laws, and path clouds.

A Cloud is a uniformly weighted collection of discretized trajectories and
is the working representation of a law on path space. The reference law,
the empirical measure of a coupled particle system, and every Picard
iterate all live in this one type.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import EmptyInput, GridMismatch, NonFinite, ShapeError


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, horizon] with ``steps`` intervals."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0.0 and np.isfinite(self.horizon)):
            raise ShapeError(f"horizon must be a positive real, got {self.horizon}")
        if self.steps < 1:
            raise ShapeError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    def index_of(self, t: float) -> int:
        """Grid index of time t; raises GridMismatch if t is off-grid."""
        idx = int(round(t / self.dt))
        if idx < 0 or idx > self.steps or abs(idx * self.dt - t) > 1e-9 * max(self.dt, 1.0):
            raise GridMismatch(f"time {t} is not a grid point of {self}")
        return idx


@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution of a particle: point mass, Gaussian, or uniform.

    ``sample`` consumes exactly ``count * dim`` variates from the supplied
    generator for gaussian/uniform kinds and none for a point mass, so the
    draw for particle i does not depend on how many particles follow it.
    """

    kind: str
    a: np.ndarray
    b: np.ndarray
    dim: int

    @staticmethod
    def point(value=0.0, dim: int = 1) -> "InitialLaw":
        v = np.broadcast_to(np.asarray(value, dtype=float), (dim,)).copy()
        return InitialLaw("point", v, np.zeros(dim), dim)

    @staticmethod
    def gaussian(mean=0.0, std=1.0, dim: int = 1) -> "InitialLaw":
        m = np.broadcast_to(np.asarray(mean, dtype=float), (dim,)).copy()
        s = np.broadcast_to(np.asarray(std, dtype=float), (dim,)).copy()
        if np.any(s <= 0):
            raise ShapeError("gaussian std must be positive")
        return InitialLaw("gaussian", m, s, dim)

    @staticmethod
    def uniform(lo=0.0, hi=1.0, dim: int = 1) -> "InitialLaw":
        a = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
        b = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
        if np.any(b <= a):
            raise ShapeError("uniform needs lo < hi")
        return InitialLaw("uniform", a, b, dim)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.kind == "point":
            return np.tile(self.a, (count, 1))
        if self.kind == "gaussian":
            return self.a + self.b * rng.standard_normal((count, self.dim))
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * rng.random((count, self.dim))
        raise ShapeError(f"unknown initial law kind {self.kind!r}")

    def cdf(self, x: np.ndarray) -> np.ndarray:
        """One-dimensional CDF on a grid of points (dim must be 1)."""
        if self.dim != 1:
            raise ShapeError("cdf is defined for one-dimensional laws only")
        x = np.asarray(x, dtype=float)
        if self.kind == "point":
            return (x >= self.a[0]).astype(float)
        if self.kind == "gaussian":
            return ndtr((x - self.a[0]) / self.b[0])
        if self.kind == "uniform":
            return np.clip((x - self.a[0]) / (self.b[0] - self.a[0]), 0.0, 1.0)
        raise ShapeError(f"unknown initial law kind {self.kind!r}")

    @property
    def mean(self) -> np.ndarray:
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b)
        return self.a

    @property
    def spread(self) -> float:
        """Scalar scale used for PDE domain sizing."""
        if self.kind == "gaussian":
            return float(np.max(self.b))
        if self.kind == "uniform":
            return float(np.max(self.b - self.a)) / np.sqrt(12.0)
        return 0.0


@dataclass(frozen=True, eq=False)
class Cloud:
    """Uniformly weighted sample of trajectories on a shared grid.

    paths has shape (size, steps + 1, dim). Equality is object identity;
    compare ``paths`` arrays directly when content matters.
    """

    grid: TimeGrid
    paths: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = self.paths
        if p.ndim != 3:
            raise ShapeError(f"paths must be (size, steps+1, dim), got shape {p.shape}")
        if p.shape[0] == 0:
            raise EmptyInput("a cloud needs at least one path")
        if p.shape[1] != self.grid.steps + 1:
            raise ShapeError(
                f"path length {p.shape[1]} does not match grid with {self.grid.steps} steps"
            )
        if not np.all(np.isfinite(p)):
            raise NonFinite("cloud contains non-finite states")

    @property
    def size(self) -> int:
        return self.paths.shape[0]

    @property
    def dim(self) -> int:
        return self.paths.shape[2]

    def values_at(self, t_idx: int) -> np.ndarray:
        """Time-t marginal sample, shape (size, dim)."""
        return self.paths[:, t_idx, :]

    def terminal_values(self) -> np.ndarray:
        return self.paths[:, -1, :]

    def prefixes(self, t_idx: int) -> np.ndarray:
        """View of all paths up to and including grid index t_idx."""
        return self.paths[:, : t_idx + 1, :]

    def stopped(self, t_idx: int) -> "Cloud":
        """Image of the cloud under stopping at grid index t_idx."""
        if not 0 <= t_idx <= self.grid.steps:
            raise GridMismatch(f"index {t_idx} outside grid")
        p = self.paths.copy()
        p[:, t_idx + 1 :, :] = p[:, t_idx : t_idx + 1, :]
        return Cloud(self.grid, p)

    def marginal(self, t_idx: int, coord: int = 0) -> np.ndarray:
        """Scalar marginal sample at a grid index, shape (size,)."""
        return self.paths[:, t_idx, coord]


_sorted_marginal_cache: "weakref.WeakKeyDictionary[Cloud, np.ndarray]" = (
    weakref.WeakKeyDictionary()
)


def sorted_marginals(cloud: Cloud) -> np.ndarray:
    """Sorted scalar marginal per grid index, shape (steps+1, size), cached.

    Rank evaluations against a fixed reference cloud perform one binary
    search per particle per step into these rows.
    """
    tab = _sorted_marginal_cache.get(cloud)
    if tab is None:
        tab = np.sort(cloud.paths[:, :, 0].T, axis=1)
        _sorted_marginal_cache[cloud] = tab
    return tab
