"""Hot simulation loops: numba-jitted kernels with pure-numpy twins.

Each kernel exists twice with identical floating-point arithmetic, so the
two backends produce bit-identical output for polynomial drift functions
(transcendental g may differ in the last ulp between numpy's SIMD loops
and libm scalars). The active backend is chosen once at import from the
``MKVLAB_DISABLE_NUMBA`` environment variable and can be overridden per
call site with :func:`use_backend`; ``benchmarks/bench_kernels.py``
compares the two.

Noise is always generated outside the kernels (see streams.py), so backend
choice and thread count never change the random numbers a particle sees.

Status codes returned by simulation kernels: 0 ok, 1 drift bound exceeded
(bad value reported), 2 non-finite state produced.
"""

from __future__ import annotations

import math
import os
from contextlib import contextmanager

import numpy as np

ENV_FLAG = "MKVLAB_DISABLE_NUMBA"

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


_env_disabled = os.environ.get(ENV_FLAG, "").strip().lower() in {"1", "true", "yes"}
_default_backend = "numba" if (HAS_NUMBA and not _env_disabled) else "numpy"
_active = _default_backend

STATUS_OK = 0
STATUS_BOUND = 1
STATUS_NONFINITE = 2

G_AFFINE = 1
G_TANH = 2


def active_backend() -> str:
    return _active


@contextmanager
def use_backend(name: str):
    """Temporarily force 'numba' or 'numpy' kernels."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    prev = _active
    _active = name
    try:
        yield
    finally:
        _active = prev


# ---------------------------------------------------------------------------
# rank-based drift, coupled n-particle system
# ---------------------------------------------------------------------------


def _rank_coupled_numpy(x0, dw, g_kind, ga, gb, dt, sig, thresh):
    n = x0.shape[0]
    steps = dw.shape[0]
    paths = np.empty((n, steps + 1))
    cur = x0.copy()
    paths[:, 0] = cur
    inv_sig = 1.0 / sig
    for j in range(steps):
        srt = np.sort(cur)
        u = np.searchsorted(srt, cur, side="right") / n
        if g_kind == G_TANH:
            b = np.tanh(ga * u)
        else:
            b = ga * u + gb
        bad = float(np.max(np.abs(b))) * inv_sig
        if bad > thresh:
            return paths, STATUS_BOUND, bad
        cur = cur + (b * dt + sig * dw[j])
        paths[:, j + 1] = cur
    if not np.all(np.isfinite(paths)):
        return paths, STATUS_NONFINITE, math.nan
    return paths, STATUS_OK, 0.0


@njit(cache=True, nogil=True)
def _rank_coupled_numba(x0, dw, g_kind, ga, gb, dt, sig, thresh):  # pragma: no cover
    n = x0.shape[0]
    steps = dw.shape[0]
    paths = np.empty((n, steps + 1))
    cur = x0.copy()
    u = np.empty(n)
    b = np.empty(n)
    for i in range(n):
        paths[i, 0] = cur[i]
    inv_sig = 1.0 / sig
    for j in range(steps):
        order = np.argsort(cur)
        # tie runs share the closed-half-line count of their last member
        k = 0
        while k < n:
            run_end = k
            v = cur[order[k]]
            while run_end + 1 < n and cur[order[run_end + 1]] == v:
                run_end += 1
            c = (run_end + 1) / n
            for t in range(k, run_end + 1):
                u[order[t]] = c
            k = run_end + 1
        bad = 0.0
        for i in range(n):
            if g_kind == G_TANH:
                b[i] = math.tanh(ga * u[i])
            else:
                b[i] = ga * u[i] + gb
            a = abs(b[i])
            if a > bad:
                bad = a
        bad = bad * inv_sig
        if bad > thresh:
            return paths, STATUS_BOUND, bad
        for i in range(n):
            cur[i] = cur[i] + (b[i] * dt + sig * dw[j, i])
            paths[i, j + 1] = cur[i]
    for i in range(n):
        for j in range(steps + 1):
            if not math.isfinite(paths[i, j]):
                return paths, STATUS_NONFINITE, math.nan
    return paths, STATUS_OK, 0.0


def rank_coupled_paths(x0, dw, g_kind, ga, gb, dt, sig, thresh):
    if _active == "numba":
        return _rank_coupled_numba(x0, dw, g_kind, ga, gb, dt, sig, thresh)
    return _rank_coupled_numpy(x0, dw, g_kind, ga, gb, dt, sig, thresh)


# ---------------------------------------------------------------------------
# rank-based drift against a frozen reference cloud
# ---------------------------------------------------------------------------


def _rank_frozen_numpy(x0, dw, ref_sorted, g_kind, ga, gb, dt, sig, thresh):
    batch = x0.shape[0]
    steps = dw.shape[0]
    m = ref_sorted.shape[1]
    paths = np.empty((batch, steps + 1))
    cur = x0.copy()
    paths[:, 0] = cur
    inv_sig = 1.0 / sig
    for j in range(steps):
        u = np.searchsorted(ref_sorted[j], cur, side="right") / m
        if g_kind == G_TANH:
            b = np.tanh(ga * u)
        else:
            b = ga * u + gb
        bad = float(np.max(np.abs(b))) * inv_sig
        if bad > thresh:
            return paths, STATUS_BOUND, bad
        cur = cur + (b * dt + sig * dw[j])
        paths[:, j + 1] = cur
    if not np.all(np.isfinite(paths)):
        return paths, STATUS_NONFINITE, math.nan
    return paths, STATUS_OK, 0.0


@njit(cache=True, nogil=True)
def _rank_frozen_numba(x0, dw, ref_sorted, g_kind, ga, gb, dt, sig, thresh):  # pragma: no cover
    batch = x0.shape[0]
    steps = dw.shape[0]
    m = ref_sorted.shape[1]
    paths = np.empty((batch, steps + 1))
    cur = x0.copy()
    for i in range(batch):
        paths[i, 0] = cur[i]
    inv_sig = 1.0 / sig
    for j in range(steps):
        row = ref_sorted[j]
        bad = 0.0
        for i in range(batch):
            x = cur[i]
            lo = 0
            hi = m
            while lo < hi:
                mid = (lo + hi) >> 1
                if row[mid] <= x:
                    lo = mid + 1
                else:
                    hi = mid
            u = lo / m
            if g_kind == G_TANH:
                b = math.tanh(ga * u)
            else:
                b = ga * u + gb
            a = abs(b)
            if a > bad:
                bad = a
            cur[i] = x + (b * dt + sig * dw[j, i])
            paths[i, j + 1] = cur[i]
        bad = bad * inv_sig
        if bad > thresh:
            return paths, STATUS_BOUND, bad
    for i in range(batch):
        for j in range(steps + 1):
            if not math.isfinite(paths[i, j]):
                return paths, STATUS_NONFINITE, math.nan
    return paths, STATUS_OK, 0.0


def rank_frozen_paths(x0, dw, ref_sorted, g_kind, ga, gb, dt, sig, thresh):
    if _active == "numba":
        return _rank_frozen_numba(x0, dw, ref_sorted, g_kind, ga, gb, dt, sig, thresh)
    return _rank_frozen_numpy(x0, dw, ref_sorted, g_kind, ga, gb, dt, sig, thresh)


# ---------------------------------------------------------------------------
# conservative upwind marching for the Burgers-type CDF equation
# ---------------------------------------------------------------------------
#
# The split-flux tables gp/gm tabulate the antiderivatives of max(g, 0) and
# min(g, 0) on a uniform grid over [0, 1]; lookups interpolate linearly with
# the same expression in both twins so the backends agree bitwise.


def _burgers_numpy(v0, gp, gm, dt, dx, nt, out, stride):
    v = v0.copy()
    k = gp.shape[0] - 1
    out[0] = v
    row = 1
    inv_dx2 = 1.0 / (dx * dx)
    inv_dx = 1.0 / dx
    for step in range(nt):
        pos = np.clip(v, 0.0, 1.0) * k
        i0 = np.minimum(pos.astype(np.int64), k - 1)
        w = pos - i0
        fp = gp[i0] + w * (gp[i0 + 1] - gp[i0])
        fm = gm[i0] + w * (gm[i0 + 1] - gm[i0])
        flux = fp[:-1] + fm[1:]
        lap = (v[2:] - 2.0 * v[1:-1]) + v[:-2]
        vn = v.copy()
        vn[1:-1] = v[1:-1] + dt * (0.5 * lap * inv_dx2 - (flux[1:] - flux[:-1]) * inv_dx)
        v = vn
        if (step + 1) % stride == 0:
            out[row] = v
            row += 1
    return STATUS_OK if np.all(np.isfinite(out)) else STATUS_NONFINITE


@njit(cache=True, nogil=True)
def _burgers_numba(v0, gp, gm, dt, dx, nt, out, stride):  # pragma: no cover
    nx1 = v0.shape[0]
    v = v0.copy()
    vn = v0.copy()
    fp = np.empty(nx1)
    fm = np.empty(nx1)
    k = gp.shape[0] - 1
    for i in range(nx1):
        out[0, i] = v[i]
    row = 1
    inv_dx2 = 1.0 / (dx * dx)
    inv_dx = 1.0 / dx
    for step in range(nt):
        for i in range(nx1):
            val = v[i]
            if val < 0.0:
                val = 0.0
            elif val > 1.0:
                val = 1.0
            pos = val * k
            i0 = int(pos)
            if i0 > k - 1:
                i0 = k - 1
            w = pos - i0
            fp[i] = gp[i0] + w * (gp[i0 + 1] - gp[i0])
            fm[i] = gm[i0] + w * (gm[i0 + 1] - gm[i0])
        for i in range(1, nx1 - 1):
            lap = (v[i + 1] - 2.0 * v[i]) + v[i - 1]
            flux_r = fp[i] + fm[i + 1]
            flux_l = fp[i - 1] + fm[i]
            vn[i] = v[i] + dt * (0.5 * lap * inv_dx2 - (flux_r - flux_l) * inv_dx)
        vn[0] = v[0]
        vn[nx1 - 1] = v[nx1 - 1]
        for i in range(nx1):
            v[i] = vn[i]
        if (step + 1) % stride == 0:
            for i in range(nx1):
                out[row, i] = v[i]
            row += 1
    for r in range(out.shape[0]):
        for i in range(nx1):
            if not math.isfinite(out[r, i]):
                return STATUS_NONFINITE
    return STATUS_OK


def burgers_march(v0, gp, gm, dt, dx, nt, out, stride):
    if _active == "numba":
        return _burgers_numba(v0, gp, gm, dt, dx, nt, out, stride)
    return _burgers_numpy(v0, gp, gm, dt, dx, nt, out, stride)
