import os
import subprocess
import sys

import numpy as np
import pytest

from mkvlab import kernels


needs_numba = pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba unavailable")


def _noise(n, steps, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n), rng.standard_normal((steps, n)) * np.sqrt(1.0 / steps)


@needs_numba
@pytest.mark.parametrize("g_kind,ga,gb,exact", [
    (kernels.G_AFFINE, 1.0, 0.0, True),
    (kernels.G_AFFINE, 0.2, 0.05, True),
    (kernels.G_TANH, 1.5, 0.0, False),
])
def test_coupled_backends_agree(g_kind, ga, gb, exact):
    x0, dw = _noise(64, 40, seed=1)
    with kernels.use_backend("numba"):
        pa, sa, _ = kernels.rank_coupled_paths(x0, dw, g_kind, ga, gb, 1 / 40, 1.0, 2.0)
    with kernels.use_backend("numpy"):
        pb, sb, _ = kernels.rank_coupled_paths(x0, dw, g_kind, ga, gb, 1 / 40, 1.0, 2.0)
    assert sa == sb == kernels.STATUS_OK
    if exact:
        assert np.array_equal(pa, pb)
    else:
        assert np.allclose(pa, pb, rtol=1e-13, atol=1e-15)


@needs_numba
def test_coupled_backends_agree_with_ties():
    # all particles start tied at zero: rank must use the closed half-line
    x0 = np.zeros(32)
    _, dw = _noise(32, 20, seed=2)
    with kernels.use_backend("numba"):
        pa, _, _ = kernels.rank_coupled_paths(x0, dw, kernels.G_AFFINE, 1.0, 0.0, 0.05, 1.0, 2.0)
    with kernels.use_backend("numpy"):
        pb, _, _ = kernels.rank_coupled_paths(x0, dw, kernels.G_AFFINE, 1.0, 0.0, 0.05, 1.0, 2.0)
    assert np.array_equal(pa, pb)
    # everyone is tied, so everyone has rank 1 and unit drift on the first step
    expected = 0.0 + (1.0 * 0.05 + 1.0 * dw[0, :])
    assert np.array_equal(pa[:, 1], expected)


@needs_numba
def test_frozen_backends_agree():
    x0, dw = _noise(50, 30, seed=3)
    ref = np.sort(np.random.default_rng(4).standard_normal((30, 500)), axis=1)
    args = (x0, dw, ref, kernels.G_AFFINE, 0.8, 0.1, 1 / 30, 1.0, 2.0)
    with kernels.use_backend("numba"):
        pa, sa, _ = kernels.rank_frozen_paths(*args)
    with kernels.use_backend("numpy"):
        pb, sb, _ = kernels.rank_frozen_paths(*args)
    assert sa == sb == kernels.STATUS_OK
    assert np.array_equal(pa, pb)


@needs_numba
def test_burgers_backends_agree():
    rng = np.random.default_rng(5)
    nx = 200
    v0 = np.sort(rng.random(nx + 1))
    v0[0], v0[-1] = 0.0, 1.0
    u = np.linspace(0, 1, 101)
    gp = np.maximum(u, 0) ** 2 / 2
    gm = np.zeros_like(u)
    dx = 1.0 / nx
    dt = 0.4 * dx * dx
    out_a = np.empty((6, nx + 1))
    out_b = np.empty((6, nx + 1))
    with kernels.use_backend("numba"):
        sa = kernels.burgers_march(v0, gp, gm, dt, dx, 50, out_a, 10)
    with kernels.use_backend("numpy"):
        sb = kernels.burgers_march(v0, gp, gm, dt, dx, 50, out_b, 10)
    assert sa == sb == kernels.STATUS_OK
    assert np.array_equal(out_a, out_b)


def test_bound_status_reported():
    x0, dw = _noise(16, 10, seed=6)
    _, status, bad = kernels.rank_coupled_paths(
        x0, dw, kernels.G_AFFINE, 1.0, 0.0, 0.1, 1.0, 0.5
    )
    assert status == kernels.STATUS_BOUND
    assert bad > 0.5


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        with kernels.use_backend("cuda"):
            pass


def test_env_flag_selects_numpy_backend():
    env = dict(os.environ)
    env[kernels.ENV_FLAG] = "1"
    out = subprocess.run(
        [sys.executable, "-c", "from mkvlab import kernels; print(kernels.active_backend())"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"
