"""Mutual information between an action's observation and a learning target.

The target is a deterministic function of the unknown atom: the optimal
action of one context, the optimal policy map, or the atom itself.  Given the
posterior, the observation of an action is a Gaussian mixture with one
component per atom, so

    I(Z; O) = sum_{z,g} P(z, g) E_{O ~ g}[log p(O | z) - log p(O)]

where ``g`` ranges over the distinct observation means.  Atoms sharing a mean
are merged first; when the merged means span at most two dimensions the
expectation is taken with a tensor Gauss-Hermite rule, otherwise by Monte
Carlo.  Noiseless observations reduce to entropies of a discrete joint law.
All quantities are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import Environment, Posterior, best_actions, entropy, policy_labels

LOG_BASE = "e"
PRUNE = 1e-12
_MERGE_TOL = 1e-12
_EXACT_TOL = 1e-9


@dataclass(frozen=True)
class InfoGainConfig:
    estimator: str = "quadrature"
    quadrature_nodes: int = 64
    mc_samples: int = 4096
    floor: float = 1e-12
    target: str = "optimal_action"
    mc_seed: int = 0

    def __post_init__(self):
        if self.estimator not in ("quadrature", "monte_carlo"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.target not in ("optimal_action", "optimal_policy", "parameter"):
            raise ValueError(f"unknown target {self.target!r}")
        if self.quadrature_nodes < 8:
            raise ValueError("quadrature_nodes must be at least 8")
        if self.mc_samples < 256:
            raise ValueError("mc_samples must be at least 256")
        if not self.floor > 0:
            raise ValueError("floor must be positive")


@lru_cache(maxsize=16)
def _hermite(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights with E[f(Z)] ~ sum_i w_i f(x_i) for Z ~ N(0, 1)."""
    x, w = np.polynomial.hermite.hermgauss(k)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


@lru_cache(maxsize=16)
def _hermite_grid(k: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _hermite(k)
    if dim == 1:
        return x[:, None], w
    xx, yy = np.meshgrid(x, x, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1), np.outer(w, w).ravel()


def _lse(a: np.ndarray, axis: int, overwrite: bool = False) -> np.ndarray:
    """log-sum-exp along ``axis``; all -inf slices give -inf.

    With ``overwrite`` the input may be used as scratch space.
    """
    # numpy reduces a short trailing axis slowly; reducing over leading slabs is ~3x faster
    moved = np.moveaxis(a, axis, 0)
    a = moved if overwrite and moved.flags.c_contiguous else np.array(moved, order="C")
    m = np.maximum.reduce(a, axis=0)
    m[~np.isfinite(m)] = 0.0
    a -= m
    np.exp(a, out=a)
    out = np.add.reduce(a, axis=0)
    with np.errstate(divide="ignore"):
        np.log(out, out=out)
    out += m
    return out


def _prune(weights: np.ndarray) -> np.ndarray:
    keep = np.flatnonzero(weights >= PRUNE)
    return keep


def _dense_labels(labels: np.ndarray) -> tuple[np.ndarray, int]:
    uniq, inv = np.unique(labels, return_inverse=True)
    return inv.ravel(), uniq.size


def _group_rows(mu: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Merge atoms whose observation means coincide up to ``tol``."""
    scale = max(1.0, float(np.max(np.abs(mu))) if mu.size else 1.0)
    key = np.round(mu / (tol * scale)).astype(np.int64) if tol > 0 else mu
    _, first, gid = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return mu[first], gid.ravel()


def _joint(w: np.ndarray, z: np.ndarray, n_z: int, gid: np.ndarray, n_g: int) -> np.ndarray:
    return np.bincount(z * n_g + gid, weights=w, minlength=n_z * n_g).reshape(n_z, n_g)


def _xlogx(p: np.ndarray, axis=None) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return t.sum(axis=axis)


def _discrete_information(joint: np.ndarray) -> float:
    """I(Z; G) for a joint probability table."""
    return float(_xlogx(joint) - _xlogx(joint.sum(1)) - _xlogx(joint.sum(0)))


def _project(nu: np.ndarray, sigma: float) -> np.ndarray:
    """Coordinates of the group means in the span of their differences, unit noise."""
    d = (nu - nu[0]) / sigma
    if d.shape[1] == 1:
        return d
    _, s, vt = np.linalg.svd(d[1:], full_matrices=False)
    tol = max(d.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > max(tol, 1e-12)))
    return d @ vt[:rank].T


def _gaussian_pairs(joint: np.ndarray, coords: np.ndarray, cfg: InfoGainConfig,
                    rng: np.random.Generator | None) -> tuple[float, float]:
    """Estimate sum_{z,g} P(z,g) E_g[log p(O|z) - log p(O)] for unit-noise groups."""
    n_g, r = coords.shape
    if r == 0 or n_g < 2:
        return 0.0, 0.0
    pg = joint.sum(0)
    pz = joint.sum(1)
    if cfg.estimator == "quadrature" and r <= 2:
        offsets, omega = _hermite_grid(cfg.quadrature_nodes, r)
        mc = False
    else:
        if rng is None:
            rng = np.random.default_rng(cfg.mc_seed)
        half_n = max(4, -(-cfg.mc_samples // (2 * n_g)))
        # antithetic pairs (e, -e) cancel the odd part of the integrand
        offsets = rng.standard_normal((n_g, half_n, r))
        omega = np.full(2 * half_n, 1.0 / (2 * half_n))
        mc = True
    # squared distance from c_g + e to c_j is |c_g - c_j|^2 + 2 e.(c_g - c_j) + |e|^2
    sq = np.sum(coords ** 2, axis=1)
    dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * coords @ coords.T, 0.0)
    np.fill_diagonal(dist, 0.0)
    if offsets.ndim == 2:
        offsets = np.broadcast_to(offsets, (n_g,) + offsets.shape)
    n_o = offsets.shape[1]
    # component index j leads so the log-sum-exp over j runs over contiguous slabs
    ec_half = (coords @ offsets.reshape(-1, r).T).reshape(n_g, n_g, n_o)
    self_half = np.einsum("gpr,gr->gp", offsets, coords)
    if mc:
        # the mirrored draws only flip the sign of every inner product
        n_p = 2 * n_o
        ec = np.empty((n_g, n_g, n_p))
        ec[:, :, :n_o] = ec_half
        np.negative(ec_half, out=ec[:, :, n_o:])
        ec_self = np.concatenate([self_half, -self_half], axis=1)
    else:
        n_p, ec, ec_self = n_o, ec_half, self_half
    with np.errstate(divide="ignore"):
        log_pg = np.log(pg)
        log_cond = np.log(joint / pz[:, None])
    # log N(c_g + e; c_j) = -|e|^2/2 - e.c_g + e.c_j - |c_g - c_j|^2/2 (dropping constants);
    # the (g, p) part is common to every j and cancels in the integrand
    inner = ec
    inner += (log_pg[:, None] - 0.5 * dist.T)[:, :, None]
    zi, gi = np.nonzero(joint > 0)
    # when z pins down the component, log p(O|z) is that component's own term
    single = (joint > 0).sum(1)[zi] == 1
    lp_pair = np.empty((zi.size, n_p))
    lp_pair[single] = 0.0
    multi = ~single
    if multi.any():
        # inner - log_pg recovers e.c_j - |c_g - c_j|^2/2 for each component j
        shift = (log_cond[zi[multi]] - log_pg).T[:, :, None]
        lp_pair[multi] = _lse(inner[:, gi[multi], :] + shift, axis=0, overwrite=True) - ec_self[gi[multi]]
    lp_all = _lse(inner, axis=0, overwrite=True) - ec_self
    # F[g, p]: per-sample integrand for samples drawn from component g (|e|^2 terms cancel)
    pzg = joint[zi, gi] / pg[gi]
    onehot = np.zeros((n_g, zi.size))
    onehot[gi, np.arange(zi.size)] = pzg
    f = onehot @ lp_pair - lp_all
    per_group = f @ omega
    value = float(pg @ per_group)
    if not mc:
        return value, 0.0
    h = f.shape[1] // 2
    pair_means = 0.5 * (f[:, :h] + f[:, h:])
    var = np.var(pair_means, axis=1, ddof=1)
    se = float(np.sqrt(np.sum(pg ** 2 * var) / h))
    return value, se


def mixture_information(weights, labels, means, noise, cfg: InfoGainConfig | None = None,
                        rng: np.random.Generator | None = None, return_se: bool = False):
    """I(Z; O) where atom ``i`` has weight ``weights[i]``, target value ``labels[i]``
    and ``O ~ N(means[i], std^2 I)`` (or exactly ``means[i]`` when noiseless).

    With ``return_se`` the Monte-Carlo standard error is returned as well (zero
    for quadrature and noiseless evaluation).
    """
    cfg = cfg or InfoGainConfig()
    w = np.asarray(weights, dtype=float)
    mu = np.asarray(means, dtype=float)
    if mu.ndim == 1:
        mu = mu[:, None]
    keep = _prune(w)
    w = w[keep] / w[keep].sum()
    z, n_z = _dense_labels(np.asarray(labels)[keep])
    mu = mu[keep]
    value, se = 0.0, 0.0
    if n_z > 1 and mu.shape[1] > 0:
        tol = _EXACT_TOL if noise.noiseless else _MERGE_TOL
        nu, gid = _group_rows(mu, tol)
        joint = _joint(w, z, n_z, gid, nu.shape[0])
        if nu.shape[0] > 1:
            if noise.noiseless:
                value = _discrete_information(joint)
            else:
                value, se = _gaussian_pairs(joint, _project(nu, noise.std), cfg, rng)
    value = max(value, 0.0)
    if value < cfg.floor:
        value = 0.0
    return (value, se) if return_se else value


def _scalar_groups(mu: np.ndarray, noise) -> tuple[np.ndarray, int]:
    """Group ids per (action, atom) for scalar means ``mu`` of shape (actions, atoms)."""
    n_a = mu.shape[0]
    order = np.argsort(mu, axis=1, kind="stable")
    srt = np.take_along_axis(mu, order, axis=1)
    tol = _EXACT_TOL if noise.noiseless else _MERGE_TOL * np.maximum(1.0, np.abs(srt[:, 1:]))
    new = np.diff(srt, axis=1) > tol
    gid_sorted = np.concatenate([np.zeros((n_a, 1), dtype=np.int64), np.cumsum(new, axis=1)], axis=1)
    gid = np.empty_like(gid_sorted)
    np.put_along_axis(gid, order, gid_sorted, axis=1)
    return gid, int(gid_sorted[:, -1].max()) + 1


def _scalar_batch(w: np.ndarray, z: np.ndarray, n_z: int, mu: np.ndarray, noise,
                  cfg: InfoGainConfig, budget: int = 4_000_000) -> np.ndarray:
    """Information for many scalar observations at once; ``mu`` is (actions, atoms)."""
    gid, n_g = _scalar_groups(mu, noise)
    step = max(1, budget // max(n_g * n_g * cfg.quadrature_nodes + n_z * n_g, 1))
    if mu.shape[0] > step:
        return np.concatenate([_scalar_batch(w, z, n_z, mu[i:i + step], noise, cfg, budget)
                               for i in range(0, mu.shape[0], step)])
    n_a, n = mu.shape
    rows = np.repeat(np.arange(n_a), n)
    flat = (rows * n_z + np.tile(z, n_a)) * n_g + gid.ravel()
    joint = np.bincount(flat, weights=np.tile(w, n_a), minlength=n_a * n_z * n_g).reshape(n_a, n_z, n_g)
    out = np.zeros(n_a)
    if n_g == 1:
        return out
    if noise.noiseless:
        hz = _xlogx(joint.sum(2), axis=1)
        hg = _xlogx(joint.sum(1), axis=1)
        hzg = _xlogx(joint.reshape(n_a, -1), axis=1)
        return hzg - hz - hg
    nu = np.zeros((n_a, n_g))
    nu[rows, gid.ravel()] = mu.ravel()
    nu = nu / noise.std
    pg = joint.sum(1)
    x, omega = _hermite(cfg.quadrature_nodes)
    pts = nu[:, :, None] + x[None, None, :]
    half = -0.5 * (pts[:, :, :, None] - nu[:, None, None, :]) ** 2
    with np.errstate(divide="ignore"):
        log_pg = np.log(pg)
        pz = joint.sum(2)
        log_cond = np.log(joint / np.where(pz > 0, pz, 1.0)[:, :, None])
    lp_all = _lse(half + log_pg[:, None, None, :], axis=3, overwrite=True)
    e_all = np.einsum("ag,agk,k->a", pg, lp_all, omega)
    ai, zi, gi = np.nonzero(joint > 0)
    single = (joint > 0).sum(2)[ai, zi] == 1
    e_z = np.empty(ai.size)
    # a single component: E[log phi] under its own law, integrated by the same rule
    e_z[single] = -0.5 * float(omega @ x ** 2)
    multi = ~single
    if multi.any():
        lp = _lse(half[ai[multi], gi[multi]] + log_cond[ai[multi], zi[multi]][:, None, :], axis=2,
                  overwrite=True)
        e_z[multi] = lp @ omega
    e_pair = np.bincount(ai, weights=joint[ai, zi, gi] * e_z, minlength=n_a)
    return e_pair - e_all


def _target_labels(post: Posterior, env: Environment, target: str, context: int | None) -> np.ndarray:
    if target == "parameter":
        return np.arange(post.support.size)
    if target == "optimal_policy":
        return policy_labels(env)[1]
    return np.argmax(env.reward_table(context), axis=1)


def information_gains(post: Posterior, env: Environment, actions, labels: np.ndarray,
                      cfg: InfoGainConfig | None = None,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """Gain of playing each action label in ``actions`` about the atom labelling ``labels``."""
    cfg = cfg or InfoGainConfig()
    actions = np.asarray(actions, dtype=int).ravel()
    out = np.zeros(actions.size)
    keep = _prune(post.weights)
    w = post.weights[keep] / post.weights[keep].sum()
    z, n_z = _dense_labels(np.asarray(labels)[keep])
    if n_z < 2 or actions.size == 0:
        return out
    means = env.means[keep]
    scalar_pos, scalar_coord = [], []
    multi: dict[tuple, list[int]] = {}
    for pos, a in enumerate(actions):
        ids = env.revealed(int(a))
        if ids.size == 0:
            continue
        if ids.size == 1 and (cfg.estimator == "quadrature" or env.noise.noiseless):
            scalar_pos.append(pos)
            scalar_coord.append(int(ids[0]))
        else:
            multi.setdefault(tuple(int(i) for i in ids), []).append(pos)
    if scalar_pos:
        # de-duplicate coordinates so each distinct mixture is evaluated once
        coords, inv = np.unique(scalar_coord, return_inverse=True)
        vals = _scalar_batch(w, z, n_z, means[:, coords].T, env.noise, cfg)
        out[scalar_pos] = vals[inv]
    for ids, positions in multi.items():
        out[positions] = mixture_information(w, z, means[:, list(ids)], env.noise, cfg, rng)
    out = np.maximum(out, 0.0)
    out[out < cfg.floor] = 0.0
    return out


def cond_info_gain(post: Posterior, context: int, env: Environment,
                   cfg: InfoGainConfig | None = None,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Gain about the current context's optimal action, one entry per action of ``context``."""
    labels = _target_labels(post, env, "optimal_action", context)
    return information_gains(post, env, env.contexts[context], labels, cfg, rng)


def _all_labels(post: Posterior, env: Environment, labels: np.ndarray, cfg, rng) -> np.ndarray:
    playable = np.unique(np.concatenate(env.contexts))
    out = np.zeros(env.n_actions)
    out[playable] = information_gains(post, env, playable, labels, cfg, rng)
    return out


def split_by_context(env: Environment, values: np.ndarray) -> list[np.ndarray]:
    """Per-context views of a vector indexed by action label."""
    values = np.asarray(values, dtype=float)
    return [values[c] for c in env.contexts]


def marg_info_gain(post: Posterior, env: Environment, cfg: InfoGainConfig | None = None,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Gain about the optimal policy map, indexed by action label.

    Entries for labels that are not playable in any context are 0.  Use
    ``split_by_context`` to get the per-context vectors.
    """
    return _all_labels(post, env, _target_labels(post, env, "optimal_policy", None), cfg, rng)


def param_info_gain(post: Posterior, env: Environment, cfg: InfoGainConfig | None = None,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Gain about the atom index, indexed by action label."""
    return _all_labels(post, env, _target_labels(post, env, "parameter", None), cfg, rng)


def action_gain(post: Posterior, env: Environment, action: int, cfg: InfoGainConfig | None = None,
                rng: np.random.Generator | None = None) -> float:
    """Marginal gain (or parameter gain, per ``cfg.target``) of the single label ``action``."""
    cfg = cfg or InfoGainConfig()
    target = "parameter" if cfg.target == "parameter" else "optimal_policy"
    labels = _target_labels(post, env, target, None)
    return float(information_gains(post, env, [action], labels, cfg, rng)[0])


def policy_entropy(post: Posterior, env: Environment) -> float:
    """Entropy (nats) of the posterior law of the optimal policy map."""
    _, labels = policy_labels(env)
    return entropy(np.bincount(labels, weights=post.weights))


def optimal_action_entropy(post: Posterior, context: int, env: Environment) -> float:
    best = np.argmax(env.reward_table(context), axis=1)
    return entropy(np.bincount(best, weights=post.weights))


def kl_obs_given_opt(post: Posterior, context: int, action: int, opt_action: int,
                     env: Environment, cfg: InfoGainConfig | None = None) -> float:
    """KL between the law of ``Y_action`` given ``a* = opt_action`` and its marginal law.

    ``action`` and ``opt_action`` are action labels of ``context``.
    """
    cfg = cfg or InfoGainConfig()
    j_opt = env.local_index(context, opt_action)
    env.local_index(context, action)
    best = best_actions(env)[:, context]
    keep = _prune(post.weights)
    w = post.weights[keep] / post.weights[keep].sum()
    cond_mask = best[keep] == j_opt
    p_cond = w[cond_mask].sum()
    if p_cond <= 0:
        raise ValueError(f"P(a* = {opt_action}) is zero; conditional law undefined")
    mu = env.means[keep][:, [action]]
    tol = _EXACT_TOL if env.noise.noiseless else _MERGE_TOL
    nu, gid = _group_rows(mu, tol)
    n_g = nu.shape[0]
    pg = np.bincount(gid, weights=w, minlength=n_g)
    qg = np.bincount(gid[cond_mask], weights=w[cond_mask], minlength=n_g) / p_cond
    if n_g == 1:
        return 0.0
    if env.noise.noiseless:
        m = qg > 0
        return float(max(np.sum(qg[m] * np.log(qg[m] / pg[m])), 0.0))
    coords = _project(nu, env.noise.std)
    x, omega = _hermite(cfg.quadrature_nodes)
    pts = coords[:, None, 0] + x[None, :]
    half = -0.5 * (pts[:, :, None] - coords[None, None, :, 0]) ** 2
    with np.errstate(divide="ignore"):
        lq = _lse(half + np.log(qg), axis=2, overwrite=True)
        lp = _lse(half + np.log(pg), axis=2, overwrite=True)
    return float(max(np.sum(qg * ((lq - lp) @ omega)), 0.0))


def info_gain(post: Posterior, env: Environment, cfg: InfoGainConfig | None = None,
              context: int | None = None, rng: np.random.Generator | None = None):
    """Dispatch on ``cfg.target``; the action target needs ``context``."""
    cfg = cfg or InfoGainConfig()
    if cfg.target == "optimal_action":
        if context is None:
            raise ValueError("optimal_action target needs a context")
        return cond_info_gain(post, context, env, cfg, rng)
    if cfg.target == "optimal_policy":
        return marg_info_gain(post, env, cfg, rng)
    return param_info_gain(post, env, cfg, rng)
