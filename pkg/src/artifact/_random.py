"""Seeded random streams and Monte Carlo error bars shared by the samplers."""

from __future__ import annotations

from collections.abc import Iterator

import numpy as np

# Fixed chunk size: sample i always comes from the same stream regardless of n.
CHUNK = 8192
N_BLOCKS = 10


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based Philox generator for the stream addressed by (seed, *keys)."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def chunk_bounds(n: int) -> Iterator[tuple[int, int, int]]:
    """Yield (chunk_index, start, stop) covering range(n) in CHUNK pieces."""
    for idx, start in enumerate(range(0, n, CHUNK)):
        yield idx, start, min(start + CHUNK, n)


def normal_rows(seed: int, n: int, dim: int, *keys: int) -> np.ndarray:
    """n x dim standard normal draws; row i depends only on (seed, keys, i)."""
    out = np.empty((n, dim))
    for idx, start, stop in chunk_bounds(n):
        out[start:stop] = make_rng(seed, *keys, idx).standard_normal((stop - start, dim))
    return out


def block_slices(n: int, n_blocks: int = N_BLOCKS) -> list[slice]:
    edges = np.linspace(0, n, n_blocks + 1).round().astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def jackknife(values: np.ndarray, stat=None, n_blocks: int = N_BLOCKS) -> tuple[np.ndarray, np.ndarray]:
    """Delete-one-block jackknife over the leading axis of ``values``.

    ``stat`` maps a stack of rows to an estimate (default: the mean). Returns
    the full-sample estimate and its jackknife standard error, elementwise.
    """
    blocks = block_slices(len(values), n_blocks)
    if stat is None:
        sums = np.stack([values[sl].sum(axis=0) for sl in blocks])
        return jackknife_sums(sums, [sl.stop - sl.start for sl in blocks])
    full = np.asarray(stat(values), dtype=float)
    if len(blocks) < 2:
        return full, np.zeros_like(full)
    mask = np.ones(len(values), dtype=bool)
    loo = []
    for sl in blocks:
        mask[sl] = False
        loo.append(np.asarray(stat(values[mask]), dtype=float))
        mask[sl] = True
    return full, _spread(np.stack(loo))


def _spread(loo: np.ndarray) -> np.ndarray:
    m = len(loo)
    return np.sqrt((m - 1) / m * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))


def jackknife_sums(sums, counts) -> tuple[np.ndarray, np.ndarray]:
    """Jackknife mean and standard error from per-block sums and block sizes."""
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts, dtype=float)
    total = sums.sum(axis=0)
    full = total / counts.sum()
    if len(sums) < 2:
        return full, np.zeros_like(full)
    shape = (-1,) + (1,) * (sums.ndim - 1)
    loo = (total - sums) / (counts.sum() - counts).reshape(shape)
    return full, _spread(loo)


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for a sub-experiment addressed by keys."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
