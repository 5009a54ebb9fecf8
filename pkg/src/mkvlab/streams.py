"""Deterministic parallel noise streams built on counter-based Philox.

Splitting scheme
----------------
Every stream is identified by the injective key

    (master seed, iteration, replica, sub-stream)

packed into the 128-bit Philox key ``master << 64 | iteration << 32 |
replica`` plus a ``jumped`` offset for the sub-stream. Jumps move the
Philox counter by 2**128 draws, so distinct sub-streams occupy disjoint
counter blocks of the same keyed generator and never overlap.

Sub-stream layout used by the engine, for a population of ``m_total``
particles on an ``steps``-step grid:

* block b (particles [b*BLOCK, min((b+1)*BLOCK, m_total))) uses sub-stream
  1 + b. It first draws the block's initial states, then the Gaussian
  increments as a (steps, rows) matrix.
* sub-stream offsets >= PAIR_OFFSET hold the per-(replica, particle)
  generators exposed by :meth:`NoiseBank.generator`.

Noise for particle i is therefore a fixed function of (seed, iteration,
replica, i, m_total) and never depends on chunking or thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.random import Generator, Philox

from .errors import IndexOverflow, SeedCollision, ShapeError
from .state import InitialLaw, TimeGrid

BLOCK = 8192
PAIR_OFFSET = 2**32

# Iteration-index namespaces: experiment stages sharing one master seed
# draw from disjoint iteration ranges so their streams never collide.
ITER_PICARD = 0
ITER_CHAOS = 1000
ITER_SANOV = 2000
ITER_GIRSANOV = 3000
ITER_COMPARE = 4000

_U32 = 2**32
_U64 = 2**64


def derive_seed(master, replica, particle, iteration):
    """Injective stream key for (master, replica, particle, iteration).

    Returns the key packed into three uint64 words
    ``(master, iteration << 32 | replica, particle)``. Accepts scalars or
    broadcastable integer arrays; arrays return shape (..., 3).
    """
    master_a = np.asarray(master, dtype=np.object_)
    rep = np.asarray(replica)
    part = np.asarray(particle)
    it = np.asarray(iteration)
    for name, arr, limit in (
        ("master", master_a, _U64),
        ("replica", rep, _U32),
        ("particle", part, _U32),
        ("iteration", it, _U32),
    ):
        vals = arr.astype(object).ravel()
        if any(int(v) < 0 or int(v) >= limit for v in vals):
            raise IndexOverflow(f"{name} index outside [0, {limit})")
    w0 = master_a.astype(np.uint64)
    w1 = (it.astype(np.uint64) << np.uint64(32)) | rep.astype(np.uint64)
    w2 = part.astype(np.uint64)
    out = np.stack(np.broadcast_arrays(w0, w1, w2), axis=-1)
    if out.ndim == 1:
        return tuple(int(v) for v in out)
    return out


@dataclass(frozen=True)
class NoiseBank:
    """Reproducible noise source with (replica, particle) stream derivation."""

    seed: int
    iteration: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < _U64:
            raise IndexOverflow("seed must fit in 64 bits")
        if not 0 <= self.iteration < _U32:
            raise IndexOverflow("iteration must fit in 32 bits")

    def with_iteration(self, iteration: int) -> "NoiseBank":
        return replace(self, iteration=iteration)

    def _key(self, replica: int) -> int:
        if not 0 <= replica < _U32:
            raise IndexOverflow("replica must fit in 32 bits")
        return (self.seed << 64) | (self.iteration << 32) | replica

    def substream(self, replica: int, slot: int) -> Generator:
        """Generator for one jumped sub-stream of the replica's keyed Philox."""
        return Generator(Philox(key=self._key(replica)).jumped(slot))

    def generator(self, replica: int, particle: int) -> Generator:
        """Independent generator for a (replica, particle) pair."""
        if not 0 <= particle < _U32:
            raise IndexOverflow("particle must fit in 32 bits")
        return self.substream(replica, PAIR_OFFSET + particle)

    def block_noise(
        self,
        replica: int,
        law: InitialLaw,
        grid: TimeGrid,
        block: int,
        m_total: int,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Initial states and Brownian increments for one particle block.

        Returns ``(x0, dw)`` with shapes (rows, dim) and (steps, rows, dim)
        where rows = min(BLOCK, m_total - block*BLOCK). Increments carry
        the sqrt(dt) scaling.
        """
        lo = block * BLOCK
        rows = min(BLOCK, m_total - lo)
        if rows <= 0:
            raise ShapeError(f"block {block} is empty for m_total={m_total}")
        if 1 + block >= PAIR_OFFSET:
            raise SeedCollision("block sub-stream would collide with pair streams")
        rng = self.substream(replica, 1 + block)
        x0 = law.sample(rng, rows)
        dw = rng.standard_normal((grid.steps, rows, law.dim)) * np.sqrt(grid.dt)
        return x0, dw

    def draw_noise(
        self,
        replica: int,
        law: InitialLaw,
        grid: TimeGrid,
        offset: int,
        count: int,
        m_total: int,
        slots: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Noise for particles [offset, offset + count) of an m_total population.

        ``slots`` optionally remaps particle i to noise slot slots[i]; the
        default is the identity. Output does not depend on how callers
        partition [0, m_total) into draw_noise calls.
        """
        if m_total < offset + count:
            raise ShapeError("m_total smaller than requested particle range")
        if slots is None:
            slots = np.arange(offset, offset + count)
        else:
            slots = np.asarray(slots)
            if slots.shape != (count,):
                raise ShapeError("slots must have one entry per particle")
            if np.unique(slots).size != slots.size:
                raise SeedCollision("duplicate noise slots requested")
            if slots.min() < 0 or slots.max() >= m_total:
                raise IndexOverflow("noise slot outside population")
        x0 = np.empty((count, law.dim))
        dw = np.empty((grid.steps, count, law.dim))
        for block in np.unique(slots // BLOCK):
            bx0, bdw = self.block_noise(replica, law, grid, int(block), m_total)
            mask = slots // BLOCK == block
            cols = slots[mask] - block * BLOCK
            x0[mask] = bx0[cols]
            dw[:, mask, :] = bdw[:, cols, :]
        return x0, dw
