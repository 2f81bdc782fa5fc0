"""Exhaustive grid search over policies, used to cross-check the ratio minimizers."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from ..core import Policy

GRID_LIMIT = 10 ** 7


class GridTooLargeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridResult:
    policy: Policy
    value: float
    points: int


@lru_cache(maxsize=32)
def _composition_table(k: int, steps: int) -> np.ndarray:
    cur = np.zeros((1, 0), dtype=np.int64)
    left = np.array([steps], dtype=np.int64)
    for _ in range(k - 1):
        counts = left + 1
        rep = np.repeat(np.arange(cur.shape[0]), counts)
        v = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        cur = np.hstack([cur[rep], v[:, None]])
        left = left[rep] - v
    out = np.hstack([cur, left[:, None]]) / steps
    out.setflags(write=False)
    return out


def simplex_grid(k: int, steps: int) -> np.ndarray:
    """All probability vectors of length ``k`` with entries in multiples of 1/steps."""
    if k < 1 or steps < 1:
        raise ValueError("k and steps must be positive")
    return _composition_table(k, steps)


def grid_size(sizes, steps: int) -> int:
    total = 1
    for k in sizes:
        total *= comb(steps + k - 1, k - 1)
    return total


def oracle_gridsearch_mir(deltas, gains, xi, alpha: float, lam: int, resolution: float,
                          limit: int = GRID_LIMIT) -> GridResult:
    """Minimize the marginal ratio over the product grid of simplices at ``resolution``.

    Ties (equal ratio) go to the larger expected gain, then to the first grid point.
    """
    steps = int(round(1.0 / resolution))
    if steps < 1 or abs(steps * resolution - 1.0) > 1e-9:
        raise ValueError("resolution must divide 1")
    ds = [np.asarray(d, dtype=float).ravel() for d in deltas]
    gs = [np.asarray(g, dtype=float).ravel() for g in gains]
    p = np.asarray(getattr(xi, "probs", xi), dtype=float).ravel()
    sizes = [d.size for d in ds]
    total = grid_size(sizes, steps)
    if total > limit:
        raise GridTooLargeError(f"grid has {total} points, above the limit {limit}")
    grids = [simplex_grid(k, steps) for k in sizes]
    D = np.zeros(1)
    G = np.zeros(1)
    for m, grid in enumerate(grids):
        D = (D[:, None] + p[m] * (grid @ ds[m])[None, :]).ravel()
        G = (G[:, None] + p[m] * (grid @ gs[m])[None, :]).ravel()
    x = np.maximum(D - alpha, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(x <= 0, 0.0, np.where(G > 0, x ** lam / np.where(G > 0, G, 1.0), np.inf))
    best = val.min()
    cand = np.flatnonzero(val == best)
    i = int(cand[np.argmax(G[cand])])
    idx = np.unravel_index(i, [g.shape[0] for g in grids])
    rows = tuple(grids[m][idx[m]] for m in range(len(grids)))
    return GridResult(Policy(rows), float(best), int(total))


def oracle_gridsearch_cir(delta, gain, alpha: float, lam: int, resolution: float,
                          limit: int = GRID_LIMIT) -> GridResult:
    """Single-simplex case of :func:`oracle_gridsearch_mir`."""
    return oracle_gridsearch_mir([delta], [gain], [1.0], alpha, lam, resolution, limit)
