"""Sparse linear contextual bandits and the E-optimal exploration design.

Every (context, action) pair gets its own global label, so the environment's
reward table is simply ``theta @ features.T`` over the stacked feature rows.
Feedback is bandit-style: playing a label reveals only its own reward.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np
from scipy.linalg import hadamard
from scipy.optimize import brentq

from .core import ContextDistribution, Environment, NoiseModel, ParamSupport, Policy, best_actions, r_max

FULL_CORNER_CAP = 16
AUTO_CORNER_LIMIT = 1024
NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """``table[m]`` has one row ``phi(m, a)`` per action of context ``m``."""

    table: tuple

    def __post_init__(self):
        rows = tuple(np.atleast_2d(np.asarray(t, dtype=float)) for t in self.table)
        if not rows:
            raise ValueError("FeatureMap needs at least one context")
        d = rows[0].shape[1]
        for t in rows:
            if t.shape[0] == 0 or t.shape[1] != d:
                raise ValueError("every context needs actions with features of the same dimension")
            if not np.all(np.isfinite(t)):
                raise ValueError("features must be finite")
            t.setflags(write=False)
        object.__setattr__(self, "table", rows)

    @property
    def d(self) -> int:
        return self.table[0].shape[1]

    @property
    def n_contexts(self) -> int:
        return len(self.table)

    def stacked(self) -> np.ndarray:
        return np.vstack(self.table)

    def labels(self) -> list[np.ndarray]:
        off = np.cumsum([0] + [t.shape[0] for t in self.table])
        return [np.arange(off[m], off[m + 1]) for m in range(len(self.table))]


class SparseLinearEnv(Environment):
    def __init__(self, features: FeatureMap, xi: ContextDistribution, support: ParamSupport,
                 s: int, noise: NoiseModel | None = None, name: str = "sparse",
                 meta: dict | None = None):
        if support.dim != features.d:
            raise ValueError("atoms and features differ in dimension")
        if s < 1:
            raise ValueError("sparsity must be at least 1")
        nnz = np.count_nonzero(support.params, axis=1)
        if np.any(nnz > s):
            raise ValueError(f"atom with {int(nnz.max())} nonzeros exceeds sparsity {s}")
        if np.any(np.linalg.norm(support.params, axis=1) > 1 + NORM_TOL):
            raise ValueError("atoms must have Euclidean norm at most 1")
        self.features = features
        self.s = s
        self._phi = features.stacked()
        self._revealed = tuple(np.array([i]) for i in range(self._phi.shape[0]))
        super().__init__(features.labels(), xi, support, noise, name, meta)

    @property
    def n_actions(self) -> int:
        return self._phi.shape[0]

    @property
    def d(self) -> int:
        return self.features.d

    def mean_rewards(self, params: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(params, dtype=float)) @ self._phi.T

    def revealed(self, action: int) -> np.ndarray:
        return self._revealed[action]


# -- exploration design -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class DesignResult:
    value: float
    witness: Policy
    iterations: int
    certificate_gap: float
    rank_deficient: bool = False
    history: list = field(default_factory=list)


def _moment(features: FeatureMap, p: np.ndarray, rows) -> np.ndarray:
    d = features.d
    out = np.zeros((d, d))
    for m, t in enumerate(features.table):
        if p[m] > 0:
            out += p[m] * (t.T * rows[m]) @ t
    return out


def _min_eig(mat: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(mat)[0])


def _bound_gap(features: FeatureMap, p: np.ndarray, z: np.ndarray, value: float) -> float:
    """Gap certified by the density matrix ``z``.

    ``lambda_min(M(s)) <= <z, M(s)>`` for every policy ``s`` and every PSD ``z``
    of unit trace, so ``sum_m p_m max_a phi' z phi`` bounds the optimum.
    """
    upper = sum(p[m] * np.max(np.einsum("ij,jk,ik->i", t, z, t)) for m, t in enumerate(features.table))
    return float(upper - value)


def _smoothed(mat: np.ndarray, mu: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Soft-min ``-mu log sum exp(-lambda_i / mu)`` of the spectrum, its gradient and eigenvalues.

    The value lies in ``[lambda_min - mu log d, lambda_min]`` and the gradient is
    a unit-trace PSD matrix, so it also certifies an upper bound.
    """
    w, vecs = np.linalg.eigh(mat)
    e = np.exp(-(w - w[0]) / mu)
    tot = e.sum()
    return float(w[0] - mu * np.log(tot)), (vecs * (e / tot)) @ vecs.T, vecs[:, [0]]


def _line_search(mat: np.ndarray, dmat: np.ndarray, top: float, mu: float) -> tuple[float, float]:
    """Maximize the smoothed objective on ``mat + a dmat`` for ``a`` in [0, top].

    The objective is concave along the segment, so the maximizer is the root of
    its derivative ``<Z(a), dmat>`` when the derivative changes sign.
    """
    def slope(a):
        return float(np.sum(_smoothed(mat + a * dmat, mu)[1] * dmat))

    if slope(0.0) <= 0:
        return 0.0, _smoothed(mat, mu)[0]
    if slope(top) >= 0:
        a = top
    else:
        a = brentq(slope, 0.0, top, xtol=1e-14 * max(top, 1.0), rtol=1e-12)
    return a, _smoothed(mat + a * dmat, mu)[0]


def _vertex(features: FeatureMap, scores: list, tie_tol: float) -> list[np.ndarray]:
    """Best action per context for the per-action scores; ties share the mass."""
    targets = []
    for sc in scores:
        top = sc.max()
        tied = sc >= top - tie_tol * max(1.0, abs(top))
        targets.append(tied / tied.sum())
    return targets


def _pairwise(rows, scores, p) -> tuple[list[np.ndarray], float]:
    """Per context, move mass from the worst supported action to the best one."""
    dirs, top = [], np.inf
    for m, sc in enumerate(scores):
        dv = np.zeros_like(sc)
        if p[m] > 0:
            hi = int(np.argmax(sc))
            sup = np.flatnonzero(rows[m] > 0)
            lo = int(sup[np.argmin(sc[sup])])
            if sc[hi] > sc[lo]:
                dv[hi], dv[lo] = 1.0, -1.0
                top = min(top, rows[m][lo])
        dirs.append(dv)
    return dirs, top


def c_min(features: FeatureMap, xi: ContextDistribution, max_iters: int = 2000,
          tol: float = 1e-9, tie_tol: float = 1e-9, start=None) -> DesignResult:
    """Maximize the smallest eigenvalue of ``E_xi E_pi[phi phi']`` over policies.

    Frank-Wolfe on the product of simplices, applied to the soft-min smoothing
    of the spectrum with a temperature that shrinks whenever the smoothed
    Frank-Wolfe gap falls below it.  Each round line-searches both the
    Frank-Wolfe vertex direction and the pairwise direction (mass moved from
    the worst supported action to the best one) and keeps the better; pairwise
    steps are what get past the kinks of the minimum eigenvalue.  As the
    temperature shrinks the ascent direction becomes the supergradient ``v v'``
    of the minimum eigenvector (lowest-index column of ``eigh``).  The reported
    value is the exact minimum eigenvalue at the best iterate, so ``history``
    never decreases, and ``certificate_gap`` bounds the distance to the optimum.
    """
    p = xi.probs
    if p.size != features.n_contexts:
        raise ValueError("context distribution length differs from the feature map")
    rows = [np.full(t.shape[0], 1.0 / t.shape[0]) for t in features.table] if start is None \
        else [np.asarray(r, dtype=float) for r in start]
    active_rows = [features.table[m] for m in range(features.n_contexts) if p[m] > 0]
    span = np.linalg.matrix_rank(np.vstack(active_rows)) if active_rows else 0
    if span < features.d:
        return DesignResult(0.0, Policy(tuple(rows)), 0, 0.0, True, [0.0])
    mat = _moment(features, p, rows)
    best, best_rows = _min_eig(mat), rows
    history = [best]
    scale = max(float(np.trace(mat)) / features.d, 1e-300)
    mu = 0.1 * scale
    mu_floor = max(1e-15 * scale, 1e-300)
    gap = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        fval, z, v = _smoothed(mat, mu)
        gap = min(gap, _bound_gap(features, p, z, best), _bound_gap(features, p, v @ v.T, best))
        if gap <= tol:
            break
        scores = [np.einsum("ij,jk,ik->i", t, z, t) for t in features.table]
        fw_dirs = [q - r for q, r in zip(_vertex(features, scores, tie_tol), rows)]
        fw_slope = sum(p[m] * scores[m] @ fw_dirs[m] for m in range(len(rows)))
        if fw_slope <= mu:
            # the smoothed problem is solved to within its own bias
            if mu <= mu_floor:
                break
            mu = max(0.25 * mu, mu_floor)
            continue
        pw_dirs, pw_top = _pairwise(rows, scores, p)
        cands = []
        for dirs, top in ((fw_dirs, 1.0), (pw_dirs, pw_top)):
            if np.isfinite(top) and top > 0:
                dmat = _moment(features, p, dirs)
                step, val = _line_search(mat, dmat, top, mu)
                cands.append((val, step, dirs))
        val, step, dirs = max(cands, key=lambda c: c[0])
        if step <= 0 or val <= fval:
            if mu <= mu_floor:
                break
            mu = max(0.25 * mu, mu_floor)
            continue
        rows = [np.maximum(r + step * dv, 0.0) for r, dv in zip(rows, dirs)]
        rows = [r / r.sum() for r in rows]
        mat = _moment(features, p, rows)
        cur = _min_eig(mat)
        if cur > best:
            best, best_rows = cur, rows
        history.append(best)
    return DesignResult(best, Policy(tuple(best_rows)), it, max(gap, 0.0), False, history)


# -- instances --------------------------------------------------------------

def hypercube_corners(d: int) -> np.ndarray:
    if d > FULL_CORNER_CAP:
        raise ValueError(f"2^{d} corners exceed the enumeration cap d <= {FULL_CORNER_CAP}")
    return np.array(list(product((-1.0, 1.0), repeat=d)))


def hadamard_corners(d: int) -> np.ndarray:
    """Rows of a Sylvester Hadamard matrix restricted to ``d`` columns, with their negations.

    The columns are orthogonal, so the uniform mixture has identity second moment
    just like the full cube.
    """
    q = 1 << max(0, (d - 1).bit_length())
    h = hadamard(q).astype(float)[:, :d]
    return np.vstack([h, -h])


def make_theorem3_instance(p: int, s: int, n: int, kappa: float = 1.0, gap: float | None = None,
                           corners: str = "auto", noise: NoiseModel | None = None) -> SparseLinearEnv:
    """Two-context sparse instance with an informative but costly action set in context 0.

    Context 0 offers ``x0 = 0`` and the corners ``(kappa * signs, 1)``; context 1
    offers the multi-task actions (one basis vector per block, last coordinate 0).
    Atoms are ``(gap * e_{j_1}, ..., gap * e_{j_s}, -1)`` rescaled to unit norm, so
    ``x0`` is optimal in context 0 whenever ``s * kappa * gap < 1``.
    """
    if p < 2 or s < 1 or n < 1:
        raise ValueError("need p >= 2, s >= 1, n >= 1")
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    if gap is None:
        gap = 0.5 * np.sqrt(p / n)
    if not gap > 0:
        raise ValueError("gap must be positive")
    d = s * p
    if corners == "auto":
        corners = "full" if 2 ** d <= AUTO_CORNER_LIMIT else "hadamard"
    if corners == "full":
        signs = hypercube_corners(d)
    elif corners == "hadamard":
        signs = hadamard_corners(d)
    else:
        raise ValueError(f"unknown corner mode {corners!r}")
    h = np.hstack([kappa * signs, np.ones((signs.shape[0], 1))])
    ctx0 = np.vstack([np.zeros((1, d + 1)), h])
    blocks = list(product(range(p), repeat=s))
    ctx1 = np.zeros((len(blocks), d + 1))
    atoms = np.zeros((len(blocks), d + 1))
    for r, js in enumerate(blocks):
        for i, j in enumerate(js):
            ctx1[r, i * p + j] = 1.0
            atoms[r, i * p + j] = gap
    atoms[:, d] = -1.0
    norm = np.sqrt(s * gap ** 2 + 1.0)
    scale = 1.0 / norm if norm > 1 else 1.0
    atoms *= scale
    env = SparseLinearEnv(FeatureMap((ctx0, ctx1)), ContextDistribution(np.array([0.5, 0.5])),
                          ParamSupport.uniform(atoms), s + 1, noise or NoiseModel(), name="theorem3",
                          meta={"p": p, "s": s, "n": n, "kappa": kappa, "gap": gap, "d": d,
                                "theta_scale": scale, "corners": corners,
                                "informative_labels": list(range(1, ctx0.shape[0])),
                                "safe_label": 0})
    return env


def make_hypercube_features(d: int) -> FeatureMap:
    return FeatureMap((hypercube_corners(d),))


def check_sparse_optimal_actions(env: SparseLinearEnv, s: int | None = None) -> tuple[bool, list[tuple[int, int, int]]]:
    """Whether every atom's optimal action in every context has at most ``s`` nonzero features.

    Violations are ``(atom, context, action position)`` triples.
    """
    s = env.s if s is None else s
    best = best_actions(env)
    bad = []
    for m, t in enumerate(env.features.table):
        nnz = np.count_nonzero(t, axis=1)
        for i in range(best.shape[0]):
            j = int(best[i, m])
            if nnz[j] > s:
                bad.append((i, m, j))
    return not bad, bad


def lemma4_bounds(env_or_d, c_min_value: float, s: int | None = None,
                  rmax: float | None = None) -> tuple[float, float]:
    """``((R_max^2 + 1) d / 2, s^2 / (4 C_min))``; the second is inf when ``C_min = 0``."""
    if isinstance(env_or_d, SparseLinearEnv):
        d = env_or_d.d
        s = env_or_d.s if s is None else s
        rmax = r_max(env_or_d) if rmax is None else rmax
    else:
        d = int(env_or_d)
        if s is None or rmax is None:
            raise ValueError("s and rmax are required when passing a dimension")
    squared = (rmax ** 2 + 1.0) * d / 2.0
    cubic = s ** 2 / (4.0 * c_min_value) if c_min_value > 0 else float("inf")
    return squared, cubic


def random_sparse_env(rng: np.random.Generator, m: int, k: int, d: int, s: int, n_atoms: int,
                      noise: NoiseModel | None = None) -> SparseLinearEnv:
    """Random features in [-1, 1] and random s-sparse unit-ball atoms."""
    feats = tuple(rng.uniform(-1, 1, size=(k, d)) for _ in range(m))
    atoms = np.zeros((n_atoms, d))
    for i in range(n_atoms):
        idx = rng.choice(d, size=s, replace=False)
        atoms[i, idx] = rng.normal(size=s)
        atoms[i] *= rng.uniform(0.3, 1.0) / np.linalg.norm(atoms[i])
    xi = ContextDistribution(rng.dirichlet(np.ones(m)))
    return SparseLinearEnv(FeatureMap(feats), xi, ParamSupport(atoms, rng.dirichlet(np.ones(n_atoms))),
                           s, noise or NoiseModel(), name="random_sparse")


# -- file formats -----------------------------------------------------------

def read_features(path) -> FeatureMap:
    """Header ``M k d`` then one line ``m a v1 .. vd`` per (context, action)."""
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{path}: empty feature file")
    m, k, d = (int(x) for x in lines[0].split())
    table = [dict() for _ in range(m)]
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != d + 2:
            raise ValueError(f"{path}: expected {d + 2} fields, got {ln!r}")
        ctx, a = int(parts[0]), int(parts[1])
        if not (0 <= ctx < m and 0 <= a < k):
            raise ValueError(f"{path}: index out of range in {ln!r}")
        table[ctx][a] = [float(v) for v in parts[2:]]
    rows = []
    for ctx, entries in enumerate(table):
        if not entries:
            raise ValueError(f"{path}: context {ctx} has no actions")
        rows.append(np.array([entries[a] for a in sorted(entries)]))
    return FeatureMap(tuple(rows))


def write_features(features: FeatureMap, path) -> None:
    k = max(t.shape[0] for t in features.table)
    lines = [f"{features.n_contexts} {k} {features.d}"]
    for m, t in enumerate(features.table):
        for a, row in enumerate(t):
            lines.append(" ".join([str(m), str(a)] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")
