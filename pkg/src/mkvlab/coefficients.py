"""Drift and volatility coefficient objects.

A DriftSpec packages an evaluator b(t, path, measure) together with the
declared constants the downstream analysis consumes: the sup bound on
|sigma^-1 b|, the total-variation Lipschitz constant of sigma^-1 b in the
measure argument, and the entropy-domination rate. Constants are folded
through the paired volatility scale, so they are directly usable by the
contraction and chaos reports.

Evaluators receive only data up to the current grid index (the path prefix
and the stopped snapshot), which makes progressivity hold by construction.
Bound enforcement is a hard error, never clipping: a silently clipped
drift would invalidate the declared constants.

Rank convention: the population CDF uses the closed half-line count
(y_t <= x_t), so ties and self-interaction count and a lone particle has
rank 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import BoundViolation, EmptyInput, ShapeError
from .state import Cloud, sorted_marginals

# relative + absolute slack so legitimate boundary evaluations (e.g. a rank
# drift attaining sup|g| exactly) never trip the check through rounding
_BOUND_RTOL = 1e-9
_BOUND_ATOL = 1e-12

G_KIND_AFFINE = 1
G_KIND_TANH = 2


@dataclass(frozen=True)
class RankG:
    """Scalar function g on [0, 1] driving a rank-based drift."""

    kind: str
    a: float = 1.0
    b: float = 0.0
    fn: Callable[[np.ndarray], np.ndarray] | None = None

    @staticmethod
    def identity() -> "RankG":
        return RankG("identity", 1.0, 0.0)

    @staticmethod
    def affine(a: float, b: float) -> "RankG":
        return RankG("affine", float(a), float(b))

    @staticmethod
    def tanh_scaled(s: float) -> "RankG":
        if s <= 0:
            raise ShapeError("tanh_scaled needs a positive scale")
        return RankG("tanh_scaled", float(s), 0.0)

    @staticmethod
    def custom(fn: Callable, sup: float | None = None, lipschitz: float | None = None) -> "RankG":
        g = RankG("custom", math.nan, math.nan, fn)
        object.__setattr__(g, "_sup", sup)
        object.__setattr__(g, "_lip", lipschitz)
        return g

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind in ("identity", "affine"):
            return self.a * u + self.b
        if self.kind == "tanh_scaled":
            return np.tanh(self.a * u)
        return np.asarray(self.fn(u), dtype=float)

    @property
    def kernel_code(self) -> int | None:
        if self.kind in ("identity", "affine"):
            return G_KIND_AFFINE
        if self.kind == "tanh_scaled":
            return G_KIND_TANH
        return None

    def sup_abs(self) -> float:
        if self.kind in ("identity", "affine"):
            return max(abs(self.b), abs(self.a + self.b))
        if self.kind == "tanh_scaled":
            return math.tanh(self.a)
        if getattr(self, "_sup", None) is not None:
            return float(self._sup)
        return float(np.max(np.abs(self(_probe_grid()))))

    def lipschitz(self) -> float:
        if self.kind in ("identity", "affine"):
            return abs(self.a)
        if self.kind == "tanh_scaled":
            return self.a
        if getattr(self, "_lip", None) is not None:
            return float(self._lip)
        u = _probe_grid()
        v = self(u)
        return float(np.max(np.abs(np.diff(v) / np.diff(u))))


def _probe_grid() -> np.ndarray:
    return np.linspace(0.0, 1.0, 2049)


@dataclass(frozen=True)
class VolatilitySpec:
    """Nondegenerate volatility, constant in time and state.

    Shipped kinds are the identity and scalar multiples of it; an arbitrary
    constant matrix is supported for exercising the inversion contract.
    """

    kind: str
    matrix: np.ndarray
    inverse: np.ndarray
    dim: int

    @staticmethod
    def identity(dim: int = 1) -> "VolatilitySpec":
        eye = np.eye(dim)
        return VolatilitySpec("identity", eye, eye.copy(), dim)

    @staticmethod
    def scalar(s: float, dim: int = 1) -> "VolatilitySpec":
        if not (s > 0 and np.isfinite(s)):
            raise ShapeError("scalar volatility needs s > 0")
        return VolatilitySpec("scalar", s * np.eye(dim), np.eye(dim) / s, dim)

    @staticmethod
    def from_matrix(mat: np.ndarray) -> "VolatilitySpec":
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ShapeError("volatility matrix must be square")
        inv = np.linalg.inv(mat)
        return VolatilitySpec("matrix", mat, inv, mat.shape[0])

    def evaluate(self, t_idx: int, prefix: np.ndarray) -> np.ndarray:
        return self.matrix

    def inverse_evaluate(self, t_idx: int, prefix: np.ndarray) -> np.ndarray:
        return self.inverse

    @property
    def is_scalar(self) -> bool:
        return self.kind in ("identity", "scalar")

    @property
    def scale(self) -> float:
        if not self.is_scalar:
            raise ShapeError("scale is defined for identity/scalar volatility only")
        return float(self.matrix[0, 0])


@dataclass(frozen=True)
class DriftSpec:
    """Evaluable drift coefficient with declared analysis constants.

    ``bound`` is the declared supremum of |sigma^-1 b| for the paired
    volatility; ``tv_lipschitz`` bounds |sigma^-1 b(mu) - sigma^-1 b(nu)|
    by that constant times the (paper-normalized) total variation of the
    stopped measures; ``entropy_rate`` dominates the squared drift gap by
    rate * (t - s) * relative entropy.
    """

    kind: str
    dim: int
    bound: float
    tv_lipschitz: float | None = None
    entropy_rate: float | None = None
    path_dependent: bool = False
    rank_g: RankG | None = None
    const_value: np.ndarray | None = None
    baked_cloud: Cloud | None = field(default=None, repr=False)
    _batch: Callable = field(default=None, repr=False)

    def evaluate(self, t_idx: int, prefix: np.ndarray, snap_prefixes: np.ndarray) -> np.ndarray:
        """Drift of a single path; prefix (t+1, d), snapshot prefixes (m, t+1, d)."""
        out = self.evaluate_batch(t_idx, prefix[None, ...], snap_prefixes)
        return out[0]

    def evaluate_batch(
        self, t_idx: int, prefixes: np.ndarray, snap_prefixes: np.ndarray
    ) -> np.ndarray:
        """Drift of a batch of paths, shape (B, d)."""
        if self.baked_cloud is not None:
            if self.kind == "rank":
                # same counts as sorting the snapshot on the fly, via the
                # cached per-step sorted table of the baked cloud
                row = sorted_marginals(self.baked_cloud)[t_idx]
                x = prefixes[:, -1, 0]
                u = np.searchsorted(row, x, side="right") / row.shape[0]
                return self.rank_g(u)[:, None]
            snap_prefixes = self.baked_cloud.prefixes(t_idx)
        return self._batch(t_idx, prefixes, snap_prefixes)

    def with_measure(self, cloud: Cloud) -> "DriftSpec":
        """Copy of this drift with the measure argument frozen to a cloud."""
        return replace(self, baked_cloud=cloud)

    @property
    def kernel_family(self) -> str | None:
        """Hot-loop kernel this drift qualifies for, if any."""
        if self.kind == "rank" and self.dim == 1 and self.rank_g is not None:
            if self.rank_g.kernel_code is not None:
                return "rank"
        if self.kind in ("zero", "constant"):
            return "const"
        return None


def zero_drift(dim: int = 1) -> DriftSpec:
    z = np.zeros(dim)

    def batch(t_idx, prefixes, snap):
        return np.zeros((prefixes.shape[0], dim))

    return DriftSpec(
        "zero", dim, bound=0.0, tv_lipschitz=0.0, entropy_rate=0.0,
        const_value=z, _batch=batch,
    )


def make_constant_drift(value, sigma: VolatilitySpec | None = None) -> DriftSpec:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    dim = v.shape[0]
    scale = _inv_scale(sigma, dim)

    def batch(t_idx, prefixes, snap):
        return np.broadcast_to(v, (prefixes.shape[0], dim)).copy()

    return DriftSpec(
        "constant", dim, bound=float(np.linalg.norm(v)) * scale,
        tv_lipschitz=0.0, entropy_rate=0.0, const_value=v, _batch=batch,
    )


def make_rank_drift(
    g: RankG | Callable,
    sigma: VolatilitySpec | None = None,
    sup: float | None = None,
    lipschitz: float | None = None,
) -> DriftSpec:
    """Rank-based drift b(t, x, mu) = g(fraction of cloud values y with y_t <= x_t).

    The rank functional integrates a unit-bounded indicator, so the drift is
    TV-Lipschitz with constant Lip(g); entropy domination follows with rate
    2 * Lip(g)^2 by Pinsker.
    """
    if not isinstance(g, RankG):
        g = RankG.custom(g, sup=sup, lipschitz=lipschitz)
    scale = _inv_scale(sigma, 1)
    kappa = g.lipschitz() * scale

    def batch(t_idx, prefixes, snap):
        x = prefixes[:, -1, 0]
        y = snap[:, -1, 0]
        u = np.searchsorted(np.sort(y), x, side="right") / y.shape[0]
        return g(u)[:, None]

    return DriftSpec(
        "rank", 1, bound=g.sup_abs() * scale,
        tv_lipschitz=kappa, entropy_rate=2.0 * kappa * kappa,
        rank_g=g, _batch=batch,
    )


def make_mean_field_drift(
    f: Callable,
    phi: Callable,
    f_lipschitz: float,
    phi_bound: float,
    drift_bound: float,
    sigma: VolatilitySpec | None = None,
    dim: int = 1,
) -> DriftSpec:
    """Drift b(t, x, mu) = f(x_t, mean of phi over the time-t marginal).

    ``f`` and ``phi`` must be vectorized: f maps ((B, d), (d,)) -> (B, d)
    and phi maps (m, d) -> (m, d). Both bounded; constants are declared by
    the caller since the closures are opaque.
    """
    scale = _inv_scale(sigma, dim)
    kappa = f_lipschitz * phi_bound * scale

    def batch(t_idx, prefixes, snap):
        avg = np.mean(phi(snap[:, -1, :]), axis=0)
        out = np.asarray(f(prefixes[:, -1, :], avg), dtype=float)
        if out.shape != (prefixes.shape[0], dim):
            raise ShapeError(f"mean-field f returned shape {out.shape}")
        return out

    return DriftSpec(
        "mean_field", dim, bound=drift_bound * scale,
        tv_lipschitz=kappa, entropy_rate=2.0 * kappa * kappa,
        _batch=batch,
    )


def make_custom_drift(
    batch: Callable,
    bound: float,
    dim: int = 1,
    tv_lipschitz: float | None = None,
    path_dependent: bool = False,
) -> DriftSpec:
    """Wrap an arbitrary batch evaluator (t_idx, prefixes, snap_prefixes) -> (B, d)."""
    return DriftSpec(
        "custom", dim, bound=bound, tv_lipschitz=tv_lipschitz,
        path_dependent=path_dependent, _batch=batch,
    )


def _inv_scale(sigma: VolatilitySpec | None, dim: int) -> float:
    if sigma is None:
        return 1.0
    if sigma.dim != dim:
        raise ShapeError("volatility dimension does not match drift dimension")
    if not sigma.is_scalar:
        raise ShapeError("analytic constants are available for scalar volatility only")
    return 1.0 / sigma.scale


def sigma_inv_norms(sigma: VolatilitySpec, values: np.ndarray) -> np.ndarray:
    """|sigma^-1 v| for a batch of drift values, shape (B,)."""
    if sigma.is_scalar:
        return np.linalg.norm(values, axis=-1) / sigma.scale
    return np.linalg.norm(values @ sigma.inverse.T, axis=-1)


def bound_threshold(bound: float) -> float:
    return bound * (1.0 + _BOUND_RTOL) + _BOUND_ATOL


def eval_drift(
    spec: DriftSpec,
    t_idx: int,
    prefix: np.ndarray,
    snapshot: Cloud,
    sigma: VolatilitySpec | None = None,
) -> np.ndarray:
    """Evaluate a drift at one (time, path, measure) probe, enforcing the bound.

    The path prefix and the snapshot are truncated to grid index t_idx
    before evaluation, so nothing after the current time can influence the
    result.
    """
    prefix = np.asarray(prefix, dtype=float)
    if prefix.ndim == 1:
        prefix = prefix[:, None]
    if prefix.ndim != 2 or prefix.shape[1] != spec.dim:
        raise ShapeError(f"prefix shape {prefix.shape} does not match dim {spec.dim}")
    if not 0 <= t_idx < prefix.shape[0]:
        raise ShapeError(f"prefix is not defined up to index {t_idx}")
    if not 0 <= t_idx <= snapshot.grid.steps:
        raise ShapeError(f"index {t_idx} outside the snapshot grid")
    if snapshot.dim != spec.dim:
        raise ShapeError("snapshot dimension does not match drift dimension")
    value = spec.evaluate(t_idx, prefix[: t_idx + 1], snapshot.prefixes(t_idx))
    sig = sigma if sigma is not None else VolatilitySpec.identity(spec.dim)
    norm = float(sigma_inv_norms(sig, value[None, :])[0])
    if norm > bound_threshold(spec.bound):
        raise BoundViolation(norm, spec.bound, where=f"t_idx={t_idx}")
    return value


@dataclass(frozen=True)
class BoundReport:
    max_norm: float
    violations: list


def check_bound(spec: DriftSpec, sigma: VolatilitySpec, probes) -> BoundReport:
    """Diagnostic sweep of |sigma^-1 b| over (t_idx, prefix, cloud) probes."""
    probes = list(probes)
    if not probes:
        raise EmptyInput("check_bound needs at least one probe")
    max_norm = 0.0
    violations = []
    thresh = bound_threshold(spec.bound)
    for i, (t_idx, prefix, cloud) in enumerate(probes):
        prefix = np.asarray(prefix, dtype=float)
        if prefix.ndim == 1:
            prefix = prefix[:, None]
        value = spec.evaluate(t_idx, prefix[: t_idx + 1], cloud.prefixes(t_idx))
        norm = float(sigma_inv_norms(sigma, value[None, :])[0])
        max_norm = max(max_norm, norm)
        if norm > thresh:
            violations.append((i, norm))
    return BoundReport(max_norm=max_norm, violations=violations)
