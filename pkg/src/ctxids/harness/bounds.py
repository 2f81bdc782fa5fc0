"""Regret-bound curves with absolute constants set to 1 ("up-to-constants")."""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

LABEL = "up-to-constants"


def graph_curve(t, beta: float, vartheta: float, M: int, k: int, rmax: float = 1.0) -> np.ndarray:
    """R_max * min(sqrt(beta log(4k^2 sqrt(t)/beta) t M log k), (2 M log k / vartheta)^(1/3) t^(2/3))."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    mlogk = M * np.log(k)
    sq = np.sqrt(beta * np.log(4 * k ** 2 * np.sqrt(tp) / beta) * tp * mlogk)
    cube = (2 * mlogk / vartheta) ** (1 / 3) * tp ** (2 / 3) if vartheta > 0 else np.full_like(tp, np.inf)
    out[pos] = rmax * np.minimum(sq, cube)
    return out


def sparse_curve(t, d: int, s: int, cmin: float) -> np.ndarray:
    """min(sqrt(t d s log(d sqrt(t)/s)), s t^(2/3) log(d sqrt(t)/s)^(1/3) / C_min^(1/3))."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    lg = np.maximum(np.log(d * np.sqrt(tp) / s), 0.0)
    sq = np.sqrt(tp * d * s * lg)
    cube = s * tp ** (2 / 3) * lg ** (1 / 3) / cmin ** (1 / 3) if cmin > 0 else np.full_like(tp, np.inf)
    out[pos] = np.minimum(sq, cube)
    return out


def theorem1_curve(t, alpha: float, ratio_bound: float, cum_gain, lam: int = 2) -> np.ndarray:
    """t*alpha + 2^(1-2/lam) I^(1/lam) t^(1-1/lam) (cumulative gain up to t)^(1/lam)."""
    t = np.asarray(t, dtype=float)
    g = np.maximum(np.asarray(cum_gain, dtype=float), 0.0)
    out = alpha * t + 2 ** (1 - 2 / lam) * ratio_bound ** (1 / lam) * t ** (1 - 1 / lam) * g ** (1 / lam)
    out[t <= 0] = 0.0
    return out


def _graph_branches(t: float, beta: float, vartheta: float, M: int, k: int) -> tuple[float, float]:
    mlogk = M * np.log(k)
    sq = np.sqrt(beta * np.log(4 * k ** 2 * np.sqrt(t) / beta) * t * mlogk)
    cube = (2 * mlogk / vartheta) ** (1 / 3) * t ** (2 / 3)
    return float(sq), float(cube)


def graph_crossover(beta: float, vartheta: float, M: int, k: int, t_max: float = 1e12) -> float | None:
    """First t >= 1 where the two branches of the graph curve are equal (None if they never meet).

    The t^(2/3) branch is the smaller one for short horizons; past the crossover
    the square-root branch takes over.
    """
    from scipy.optimize import brentq

    if vartheta <= 0:
        return None

    def diff(logt):
        sq, cube = _graph_branches(np.exp(logt), beta, vartheta, M, k)
        return np.log(cube) - np.log(sq)

    grid = np.linspace(0.0, np.log(t_max), 2001)
    vals = np.array([diff(x) for x in grid])
    if vals[0] == 0:
        return 1.0
    flips = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)
    if flips.size == 0:
        return None
    i = int(flips[0])
    return float(np.exp(brentq(diff, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-14)))


def bound_overlays(n: int, metrics: dict, generic: dict | None = None) -> dict:
    """Curves for t = 0..n.  Curves whose metrics are missing are omitted with a warning.

    ``generic`` maps a name to ``(alpha, lam, ratio_bound, cum_gain)`` with
    ``cum_gain`` of length n (gain accumulated through rounds 1..n).
    """
    t = np.arange(n + 1, dtype=float)
    curves = {}
    kind = metrics.get("kind")
    if kind == "graph":
        need = ("beta", "vartheta", "M", "k", "r_max")
        missing = [m for m in need if metrics.get(m) is None]
        if missing:
            log.warning("graph bound curve omitted: missing %s", ", ".join(missing))
        else:
            curves["graph_bound"] = graph_curve(t, metrics["beta"], metrics["vartheta"], metrics["M"],
                                                metrics["k"], metrics["r_max"])
    elif kind == "sparse":
        need = ("d", "s", "c_min")
        missing = [m for m in need if metrics.get(m) is None]
        if missing:
            log.warning("sparse bound curve omitted: missing %s", ", ".join(missing))
        else:
            curves["sparse_bound"] = sparse_curve(t, metrics["d"], metrics["s"], metrics["c_min"])
    else:
        log.warning("no environment bound curve for environment kind %r", kind)
    for name, (alpha, lam, ratio_bound, cum_gain) in (generic or {}).items():
        g = np.concatenate([[0.0], np.asarray(cum_gain, dtype=float)])
        if g.size != t.size or not np.isfinite(ratio_bound):
            log.warning("theorem 1 curve for %s omitted: %s", name,
                        "length mismatch" if g.size != t.size else "unbounded ratio")
            continue
        curves[f"theorem1_{name}"] = theorem1_curve(t, alpha, ratio_bound, g, lam)
    return {"t": t.astype(int).tolist(), "curves": curves, "label": LABEL}
