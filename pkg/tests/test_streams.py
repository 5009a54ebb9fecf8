import numpy as np
import pytest

from mkvlab.errors import IndexOverflow, SeedCollision, ShapeError
from mkvlab.state import InitialLaw, TimeGrid
from mkvlab.streams import BLOCK, NoiseBank, derive_seed


def test_derive_seed_repeatable():
    assert derive_seed(7, 0, 0, 0) == derive_seed(7, 0, 0, 0)


def test_derive_seed_distinct_fields():
    base = derive_seed(7, 0, 0, 0)
    assert derive_seed(7, 1, 0, 0) != base
    assert derive_seed(7, 0, 1, 0) != base
    assert derive_seed(7, 0, 0, 1) != base
    # replica and particle axes must not alias each other
    assert derive_seed(7, 0, 1, 0) != derive_seed(7, 1, 0, 0)


def test_derive_seed_injective_exhaustive():
    # brute-force enumeration over 2^8 values per index field
    r = np.arange(256)
    keys = derive_seed(
        9,
        r[:, None, None],
        r[None, :, None],
        r[None, None, :],
    ).reshape(-1, 3)
    assert keys.shape[0] == 256**3
    assert np.unique(keys, axis=0).shape[0] == keys.shape[0]


def test_derive_seed_overflow():
    with pytest.raises(IndexOverflow):
        derive_seed(1, 2**32, 0, 0)
    with pytest.raises(IndexOverflow):
        derive_seed(1, 0, 0, 2**32)
    with pytest.raises(IndexOverflow):
        derive_seed(2**64, 0, 0, 0)


def test_generator_streams_independent_and_reproducible():
    bank = NoiseBank(123)
    a1 = bank.generator(0, 0).standard_normal(8)
    a2 = bank.generator(0, 0).standard_normal(8)
    b = bank.generator(0, 1).standard_normal(8)
    c = bank.generator(1, 0).standard_normal(8)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)
    assert not np.array_equal(bank.with_iteration(3).generator(0, 0).standard_normal(8), a1)


def test_block_noise_deterministic():
    bank = NoiseBank(99)
    law = InitialLaw.gaussian(0.0, 1.0)
    grid = TimeGrid(1.0, 16)
    x0a, dwa = bank.block_noise(2, law, grid, 0, 100)
    x0b, dwb = bank.block_noise(2, law, grid, 0, 100)
    assert np.array_equal(x0a, x0b) and np.array_equal(dwa, dwb)
    assert x0a.shape == (100, 1) and dwa.shape == (16, 100, 1)


def test_draw_noise_chunk_invariance():
    bank = NoiseBank(7)
    law = InitialLaw.gaussian(0.0, 1.0)
    grid = TimeGrid(1.0, 8)
    total = BLOCK + 37
    x_all, dw_all = bank.draw_noise(0, law, grid, 0, total, total)
    x_a, dw_a = bank.draw_noise(0, law, grid, 0, BLOCK, total)
    x_b, dw_b = bank.draw_noise(0, law, grid, BLOCK, 37, total)
    assert np.array_equal(np.vstack([x_a, x_b]), x_all)
    assert np.array_equal(np.concatenate([dw_a, dw_b], axis=1), dw_all)


def test_draw_noise_slots_permutation():
    bank = NoiseBank(7)
    law = InitialLaw.gaussian(0.0, 1.0)
    grid = TimeGrid(1.0, 8)
    base_x, base_dw = bank.draw_noise(0, law, grid, 0, 10, 10)
    perm = np.array([3, 1, 4, 0, 2, 9, 8, 7, 5, 6])
    px, pdw = bank.draw_noise(0, law, grid, 0, 10, 10, slots=perm)
    assert np.array_equal(px, base_x[perm])
    assert np.array_equal(pdw, base_dw[:, perm, :])


def test_draw_noise_rejects_bad_slots():
    bank = NoiseBank(7)
    law = InitialLaw.point(0.0)
    grid = TimeGrid(1.0, 4)
    with pytest.raises(SeedCollision):
        bank.draw_noise(0, law, grid, 0, 3, 10, slots=np.array([1, 1, 2]))
    with pytest.raises(IndexOverflow):
        bank.draw_noise(0, law, grid, 0, 3, 10, slots=np.array([0, 1, 99]))
    with pytest.raises(ShapeError):
        bank.draw_noise(0, law, grid, 0, 30, 10)


def test_point_law_consumes_no_draws():
    bank = NoiseBank(11)
    grid = TimeGrid(1.0, 6)
    _, dw_point = bank.draw_noise(0, InitialLaw.point(2.0), grid, 0, 5, 5)
    x0, _ = bank.draw_noise(0, InitialLaw.point(2.0), grid, 0, 5, 5)
    assert np.all(x0 == 2.0)
    assert dw_point.shape == (6, 5, 1)
