"""Empirical-measure functionals: CDF, 1-D Wasserstein, binned TV and KL.

Normalization convention: total variation here lives in [0, 1], i.e. half
the supremum-over-unit-test-functions norm whose natural range is [0, 2].
Code comparing against inequalities stated in the latter normalization
multiplies by two explicitly at the call site.

The binned KL is a plug-in estimator, reported as such: bin count is a
sensitivity knob and empty-bin starvation yields +inf unless the opt-in
Laplace smoothing parameter is set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import wasserstein_distance

from .errors import EdgeMismatch, EmptyInput, ShapeError

DEFAULT_BINS = 64
RANGE_EXPAND = 0.05


@dataclass(frozen=True)
class Histogram:
    """Normalized histogram: B+1 strictly increasing edges, B masses."""

    edges: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)

    def __post_init__(self):
        e, p = self.edges, self.masses
        if e.ndim != 1 or p.ndim != 1 or e.shape[0] != p.shape[0] + 1:
            raise ShapeError("need B+1 edges for B masses")
        if not np.all(np.diff(e) > 0):
            raise ShapeError("edges must be strictly increasing")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ShapeError("masses must be nonnegative and sum to 1")

    @property
    def bins(self) -> int:
        return self.masses.shape[0]

    @staticmethod
    def from_samples(values, edges=None, bins: int = DEFAULT_BINS) -> "Histogram":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise EmptyInput("cannot bin an empty sample")
        if edges is None:
            edges = _expanded_edges(values, values, bins)
        counts, _ = np.histogram(values, bins=edges)
        inside = counts.sum()
        if inside == 0:
            raise EmptyInput("no samples fall inside the given edges")
        return Histogram(np.asarray(edges, dtype=float), counts / inside)


def _expanded_edges(a, b, bins: int) -> np.ndarray:
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    span = hi - lo
    if span == 0.0:
        span = max(abs(lo), 1.0)
    pad = RANGE_EXPAND * span
    return np.linspace(lo - pad, hi + pad, bins + 1)


def shared_histograms(a, b, bins: int = DEFAULT_BINS) -> tuple[Histogram, Histogram]:
    """Bin two samples on common edges spanning their pooled range."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyInput("need two nonempty samples")
    edges = _expanded_edges(a, b, bins)
    return Histogram.from_samples(a, edges), Histogram.from_samples(b, edges)


def empirical_cdf(values, x: float) -> float:
    """Fraction of sample values <= x (closed half-line convention)."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInput("empirical_cdf of an empty sample")
    return float(np.count_nonzero(values <= x)) / values.size

def empirical_cdf_curve(values, xs) -> np.ndarray:
    """Empirical CDF evaluated on a grid of points."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInput("empirical_cdf of an empty sample")
    return np.searchsorted(np.sort(values), np.asarray(xs, dtype=float), side="right") / values.size


def w1_1d(a, b) -> float:
    """1-Wasserstein distance between two scalar samples.

    Equal-size samples use the order-statistics coupling, which is optimal
    in one dimension; unequal sizes fall back to the exact quantile-merge
    computation.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptyInput("w1_1d of an empty sample")
    if a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    return float(wasserstein_distance(a, b))


def tv_hist(a: Histogram, b: Histogram) -> float:
    """Total variation between histograms sharing edges, in [0, 1]."""
    _require_shared_edges(a, b)
    return float(0.5 * np.sum(np.abs(a.masses - b.masses)))


def kl_hist(p: Histogram, q: Histogram, laplace_alpha: float = 0.0) -> float:
    """Relative entropy sum p_i log(p_i / q_i) in nats, +inf on starvation.

    ``laplace_alpha`` > 0 mixes both mass vectors with that much uniform
    mass per bin before evaluating, trading bias for a finite value when
    q has empty bins.
    """
    _require_shared_edges(p, q)
    pm, qm = p.masses, q.masses
    if laplace_alpha < 0:
        raise ShapeError("laplace_alpha must be nonnegative")
    if laplace_alpha > 0:
        bins = pm.shape[0]
        pm = (pm + laplace_alpha) / (1.0 + bins * laplace_alpha)
        qm = (qm + laplace_alpha) / (1.0 + bins * laplace_alpha)
    support = pm > 0
    if np.any(qm[support] == 0):
        return float("inf")
    return float(np.sum(pm[support] * np.log(pm[support] / qm[support])))


def bernoulli_kl(a: float, p: float) -> float:
    """KL(Ber(a) || Ber(p)) in nats, with the 0 log 0 = 0 convention."""
    if not (0.0 <= a <= 1.0 and 0.0 <= p <= 1.0):
        raise ShapeError("Bernoulli parameters must lie in [0, 1]")
    total = 0.0
    for num, den in ((a, p), (1.0 - a, 1.0 - p)):
        if num > 0.0:
            if den == 0.0:
                return float("inf")
            total += num * np.log(num / den)
    return float(total)


def tv_noise_floor(masses: np.ndarray, count: int) -> float:
    """Expected TV between an m-sample histogram estimate and its target.

    Gaussian approximation per bin: E|p_hat - p| ~ sqrt(2 p (1-p) / (pi m)).
    Used to tell genuine contraction from estimator noise.
    """
    masses = np.asarray(masses, dtype=float)
    return float(0.5 * np.sum(np.sqrt(2.0 * masses * (1.0 - masses) / (np.pi * count))))


def _require_shared_edges(a: Histogram, b: Histogram):
    if a.edges.shape != b.edges.shape or not np.array_equal(a.edges, b.edges):
        raise EdgeMismatch("histograms do not share bin edges")
