"""Propagation-of-chaos harness.

Quantifies how fast the coupled n-particle system approaches the solved
limit law along four probes:

* the chaos gap, the expected self-vs-reference squared drift mismatch of
  the empirical measure, which drives every entropy bound;
* the explicit constant-carrying TV bound chain for k particles, printed
  with its vacuity threshold because showing where the constants bite is
  part of the job;
* direct single-particle marginal TV against the reference; and
* tail probabilities of leaving finite-test-function neighborhoods, with
  an iid-regime rate check against the closed-form Bernoulli rate.

Replicas are embarrassingly parallel; every estimate carries a standard
error or an explicit noise floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import DriftSpec, VolatilitySpec
from .engine import simulate_coupled, simulate_frozen
from .errors import InsufficientExceedances, ShapeError
from .girsanov import squared_drift_gap
from .measures import bernoulli_kl, shared_histograms, tv_hist, tv_noise_floor
from .parallel import parallel_map
from .state import Cloud, InitialLaw, TimeGrid, sorted_marginals
from .streams import BLOCK, ITER_CHAOS, ITER_SANOV, NoiseBank

PAPER_TV_CEILING = 2.0


# ---------------------------------------------------------------------------
# bounded path functionals and neighborhoods
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathFunctional:
    """Bounded (|phi| <= 1) functional of a path, shipped as cylinder kinds."""

    kind: str
    time: float | None = None
    threshold: float = 0.0
    scale: float = 1.0

    @staticmethod
    def terminal_leq(threshold: float) -> "PathFunctional":
        return PathFunctional("terminal_leq", None, float(threshold))

    @staticmethod
    def at_time_leq(time: float, threshold: float) -> "PathFunctional":
        return PathFunctional("at_time_leq", float(time), float(threshold))

    @staticmethod
    def tanh_at_time(time: float | None, scale: float = 1.0) -> "PathFunctional":
        if scale <= 0:
            raise ShapeError("tanh scale must be positive")
        return PathFunctional("tanh_at_time", time, 0.0, float(scale))

    def _index(self, grid: TimeGrid) -> int:
        if self.time is None:
            return grid.steps
        return grid.index_of(self.time)

    def evaluate(self, cloud: Cloud) -> np.ndarray:
        x = cloud.marginal(self._index(cloud.grid))
        if self.kind in ("terminal_leq", "at_time_leq"):
            return (x <= self.threshold).astype(float)
        if self.kind == "tanh_at_time":
            return np.tanh(x / self.scale)
        raise ShapeError(f"unknown functional kind {self.kind!r}")

    @property
    def is_indicator(self) -> bool:
        return self.kind in ("terminal_leq", "at_time_leq")


@dataclass(frozen=True)
class Neighborhood:
    """Finite-test-function neighborhood {nu : |<phi_i, nu> - ref_i| < eps}."""

    functionals: tuple
    epsilon: float
    reference: np.ndarray

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ShapeError("epsilon must be positive")
        if len(self.functionals) != self.reference.shape[0]:
            raise ShapeError("one reference value per functional")

    @staticmethod
    def around(mu: Cloud, functionals, epsilon: float) -> "Neighborhood":
        fns = tuple(functionals)
        ref = np.array([float(np.mean(f.evaluate(mu))) for f in fns])
        return Neighborhood(fns, float(epsilon), ref)

    def excludes(self, cloud: Cloud) -> bool:
        """True when the cloud's empirical averages leave the neighborhood."""
        for f, r in zip(self.functionals, self.reference):
            if abs(float(np.mean(f.evaluate(cloud))) - r) >= self.epsilon:
                return True
        return False


# ---------------------------------------------------------------------------
# chaos gap and the TV bound chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapEstimate:
    estimate: float
    se: float
    replicas: int
    n: int
    per_replica: np.ndarray = field(repr=False)


def chaos_gap(
    n: int,
    replicas: int,
    mu: Cloud,
    drift: DriftSpec,
    sigma: VolatilitySpec,
    lambda0: InitialLaw,
    bank: NoiseBank,
    threads: int = 1,
) -> GapEstimate:
    """Monte Carlo estimate of the expected chaos functional of the
    n-particle empirical measure over [0, T].

    Per replica this is the particle-averaged integrated squared
    sigma^-1-drift gap between the empirical measure argument and the
    reference law; exchangeability makes that average the per-particle
    expectation.
    """
    if replicas < 1:
        raise ShapeError("need at least one replica")
    grid = mu.grid
    cbank = bank.with_iteration(ITER_CHAOS + bank.iteration)  # gap namespace
    baked_ref = drift.with_measure(mu)
    sorted_marginals(mu)  # warm the shared table before threading

    def one(r: int) -> float:
        cloud = simulate_coupled(drift, sigma, lambda0, n, grid, cbank, replica=r)
        return squared_drift_gap(0.0, grid.horizon, cloud, drift, baked_ref, sigma)

    vals = np.array(parallel_map(one, replicas, threads))
    se = float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan")
    return GapEstimate(float(vals.mean()), se, replicas, n, vals)


@dataclass(frozen=True)
class BoundChain:
    """TV bound (paper normalization, range [0, 2]) with vacuity flag."""

    value: float
    vacuous: bool
    squared: float
    k: int
    n: int
    horizon: float
    drift_bound: float
    gap: float

    @property
    def internal_value(self) -> float:
        """Same bound in the [0, 1] estimator normalization."""
        return self.value / 2.0


def tv_bound_chain(k: int, n: int, gap: float, c: float, horizon: float) -> BoundChain:
    """Chain TV^2 <= 2H, per-particle symmetrization, and the exponential
    moment step into an explicit bound on the k-particle TV distance.

    The squared bound is 4 k T c^2 exp(4 k T c^2) sqrt(gap). Values above
    2 say nothing (TV never exceeds 2 in this normalization) and are
    flagged vacuous, never dropped.
    """
    if gap < 0:
        raise ShapeError("gap must be nonnegative")
    if k < 1:
        raise ShapeError("k must be >= 1")
    a = 4.0 * k * horizon * c * c
    squared = a * math.exp(a) * math.sqrt(gap)
    value = math.sqrt(squared)
    return BoundChain(
        value=value,
        vacuous=value > PAPER_TV_CEILING,
        squared=squared,
        k=k,
        n=n,
        horizon=horizon,
        drift_bound=c,
        gap=gap,
    )


# ---------------------------------------------------------------------------
# direct marginal TV
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarginalTv:
    tv: float
    noise_floor: float
    n: int
    replicas: int
    bins: int


def marginal_tv(
    n: int,
    replicas: int,
    t: float,
    mu: Cloud,
    drift: DriftSpec,
    sigma: VolatilitySpec,
    lambda0: InitialLaw,
    bank: NoiseBank,
    bins: int = 64,
    threads: int = 1,
    k: int = 1,
) -> MarginalTv:
    """Histogram TV between pooled first-particle time-t states and the
    reference marginal, one sample per replica.

    Only k = 1 is estimated directly; higher k runs through the bound
    chain since k-dimensional path-law TV is not sample-estimable.
    """
    if k != 1:
        raise ShapeError("direct TV estimation ships for k = 1 only")
    grid = mu.grid
    t_idx = grid.index_of(t)
    cbank = bank.with_iteration(ITER_CHAOS + 1 + bank.iteration)  # own realizations
    sorted_marginals(mu)

    def one(r: int) -> float:
        cloud = simulate_coupled(drift, sigma, lambda0, n, grid, cbank, replica=r)
        return float(cloud.paths[0, t_idx, 0])

    pooled = np.array(parallel_map(one, replicas, threads))
    h_sys, h_mu = shared_histograms(pooled, mu.marginal(t_idx), bins)
    floor = tv_noise_floor(h_mu.masses, replicas) + tv_noise_floor(h_mu.masses, mu.size)
    return MarginalTv(tv_hist(h_sys, h_mu), floor, n, replicas, bins)


# ---------------------------------------------------------------------------
# neighborhood tail probabilities and the iid-regime rate table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailEstimate:
    p_hat: float
    exceedances: int
    replicas: int
    n: int
    epsilon: float

    @property
    def se(self) -> float:
        return math.sqrt(max(self.p_hat * (1.0 - self.p_hat), 0.0) / self.replicas)

    @property
    def zero_count_bound(self) -> float:
        """95-percent upper bound 3/replicas when nothing was observed."""
        return 3.0 / self.replicas


def tail_probability(
    neighborhood: Neighborhood,
    n: int,
    replicas: int,
    drift: DriftSpec,
    sigma: VolatilitySpec,
    lambda0: InitialLaw,
    grid: TimeGrid,
    bank: NoiseBank,
    threads: int = 1,
) -> TailEstimate:
    """Fraction of coupled replicas whose empirical measure leaves the
    neighborhood."""
    cbank = bank.with_iteration(ITER_CHAOS + 2 + bank.iteration)

    def one(r: int) -> bool:
        cloud = simulate_coupled(drift, sigma, lambda0, n, grid, cbank, replica=r)
        return neighborhood.excludes(cloud)

    hits = int(np.sum(parallel_map(one, replicas, threads)))
    return TailEstimate(hits / replicas, hits, replicas, n, neighborhood.epsilon)


@dataclass(frozen=True)
class SanovRow:
    n: int
    replicas: int
    exceedances: int
    p_hat: float
    rate_estimate: float
    rate_is_lower_bound: bool
    limit_rate: float
    pooled_mean: float


@dataclass(frozen=True)
class SanovTable:
    rows: tuple
    epsilon: float
    reference: float
    non_monotone: bool
    degenerate: bool

    def measured_rows(self):
        return [r for r in self.rows if not r.rate_is_lower_bound]


def sanov_rate_check(
    phi: PathFunctional,
    epsilon: float,
    n_list,
    replicas,
    mu: Cloud,
    drift: DriftSpec,
    sigma: VolatilitySpec,
    lambda0: InitialLaw,
    bank: NoiseBank,
    threads: int = 1,
) -> SanovTable:
    """Empirical large-deviation rates of iid groups drawn from the solved law.

    Groups of n paths are simulated with the measure argument frozen at mu,
    so group means of an indicator are exactly Binomial(n, p)/n and the
    limit rate is the bilateral Bernoulli relative entropy at distance
    epsilon. Zero-exceedance rows report the rule-of-three upper bound on
    p as a rate lower bound.
    """
    n_list = [int(v) for v in n_list]
    if isinstance(replicas, int):
        replicas = [replicas] * len(n_list)
    replicas = [int(v) for v in replicas]
    if len(replicas) != len(n_list):
        raise ShapeError("one replica count per group size")
    if any(r < 5 for r in replicas):
        raise InsufficientExceedances("fewer than 5 replicas cannot witness 5 exceedances")
    grid = mu.grid
    sbank = bank.with_iteration(ITER_SANOV + bank.iteration)
    ref = float(np.mean(phi.evaluate(mu)))
    sorted_marginals(mu)

    rows = []
    for group_idx, (n, reps) in enumerate(zip(n_list, replicas)):
        total = n * reps
        chunk = max(BLOCK, (200_000 // max(n, 1)) * max(n, 1))
        chunk = (chunk // BLOCK) * BLOCK or BLOCK
        starts = list(range(0, total, chunk))

        def one(ci: int, _n=n, _total=total, _chunk=chunk, _gi=group_idx) -> np.ndarray:
            lo = starts[ci]
            count = min(_chunk, _total - lo)
            cloud = simulate_frozen(
                drift, sigma, mu, lambda0, count, sbank,
                replica=_gi, particle_offset=lo, m_total=_total,
            )
            return phi.evaluate(cloud)

        vals = np.concatenate(parallel_map(one, len(starts), threads))
        means = vals.reshape(reps, n).mean(axis=1)
        exceed = int(np.sum(np.abs(means - ref) >= epsilon))
        p_hat = exceed / reps
        if exceed > 0:
            rate = -math.log(p_hat) / n
            lower = False
        else:
            rate = -math.log(3.0 / reps) / n
            lower = True
        rows.append((n, reps, exceed, p_hat, rate, lower, float(vals.mean())))

    limit = _bilateral_bernoulli_rate(ref, epsilon) if phi.is_indicator else float("nan")
    table = tuple(
        SanovRow(n, reps, exc, p, r, lb, limit, pool) for n, reps, exc, p, r, lb, pool in rows
    )
    measured = [r.rate_estimate for r in table if not r.rate_is_lower_bound]
    non_monotone = any(b < a - 1e-12 for a, b in zip(measured, measured[1:]))
    degenerate = all(r.exceedances == 0 for r in table) or not np.isfinite(limit) or limit <= 0
    return SanovTable(table, float(epsilon), ref, non_monotone, degenerate)


def _bilateral_bernoulli_rate(p: float, eps: float) -> float:
    candidates = []
    if p + eps <= 1.0:
        candidates.append(bernoulli_kl(p + eps, p))
    if p - eps >= 0.0:
        candidates.append(bernoulli_kl(p - eps, p))
    if not candidates:
        return float("inf")
    return min(candidates)


# ---------------------------------------------------------------------------
# aggregate report for one n
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChaosReport:
    n: int
    k: int
    gap: GapEstimate
    bound: BoundChain
    marginal: MarginalTv
    tail: TailEstimate | None
