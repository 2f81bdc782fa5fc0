"""Dense tableau simplex for small linear programs with a feasible origin."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-12


class UnboundedLPError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LPResult:
    x: np.ndarray
    value: float
    pivots: int


def simplex_max(c, A, b, max_pivots: int = 100_000) -> LPResult:
    """Maximize ``c @ x`` subject to ``A @ x <= b`` and ``x >= 0`` with ``b >= 0``.

    Slack variables give a feasible starting basis, so a single phase is
    enough.  Bland's rule (lowest index entering and leaving) rules out cycling.
    """
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    if c.size != n or b.size != m:
        raise ValueError("LP dimensions do not agree")
    if np.any(b < 0):
        raise ValueError("simplex_max needs b >= 0 so that the origin is feasible")
    # tableau rows: constraints then the objective row holding reduced costs
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = list(range(n, n + m))
    pivots = 0
    while True:
        enter = next((j for j in range(n + m) if T[m, j] < -PIVOT_TOL), None)
        if enter is None:
            break
        col = T[:m, enter]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            raise UnboundedLPError("objective is unbounded")
        ratios = T[rows, -1] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + PIVOT_TOL * max(1.0, abs(best))]
        leave = int(min(ties, key=lambda r: basis[r]))
        T[leave] /= T[leave, enter]
        for r in range(m + 1):
            if r != leave and T[r, enter] != 0.0:
                T[r] -= T[r, enter] * T[leave]
        basis[leave] = enter
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("simplex pivot limit reached")
    x = np.zeros(n + m)
    x[basis] = T[:m, -1]
    return LPResult(np.maximum(x[:n], 0.0), float(T[m, -1]), pivots)
