"""Information-ratio minimizers and the agents built on them.

Both ratios only depend on a policy through the pair (D, G) of expected
regret and expected gain, and ``max(0, D - alpha)^lam / G`` is increasing in D
and decreasing in G.  The optimum therefore sits on the upper-left boundary of
the image of the policy set in the (D, G) plane:

* one context: the image is the convex hull of the points (delta_a, gain_a),
  so enumerating action pairs with the best mixing weight is exact;
* several contexts: the image is the Minkowski sum of the xi-weighted hulls,
  whose upper frontier is walked edge by edge in order of decreasing slope.

Frank-Wolfe over the product of simplices is kept as an independent solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .core import (ContextDistribution, Environment, Policy, Posterior,
                   optimal_action_probs, regret_vector)
from .infogain import InfoGainConfig, cond_info_gain, marg_info_gain, param_info_gain

AGENT_TAGS = ("conditional_ids", "contextual_ids", "sampled_contextual_ids",
              "thompson", "uniform", "ts_mixture")


@dataclass(frozen=True)
class IRConfig:
    alpha: float = 0.0
    lam: int = 2
    fw_max_iters: int = 500
    fw_tol: float = 1e-7
    info_floor: float = 1e-12

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError("alpha must be a finite nonnegative number")
        if self.lam not in (2, 3):
            raise ValueError("lambda must be 2 or 3")
        if self.fw_max_iters < 1 or not self.fw_tol > 0 or not self.info_floor > 0:
            raise ValueError("fw_max_iters, fw_tol and info_floor must be positive")


@dataclass(frozen=True)
class AgentKind:
    tag: str
    w: int = 1
    epsilon: float = 0.0
    explore_policy: Policy | None = None

    def __post_init__(self):
        if self.tag not in AGENT_TAGS:
            raise ValueError(f"unknown agent {self.tag!r}")
        if self.w < 1:
            raise ValueError("w must be at least 1")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.tag == "ts_mixture" and self.epsilon > 0 and self.explore_policy is None:
            raise ValueError("ts_mixture with epsilon > 0 needs an explore policy")

    @classmethod
    def conditional(cls) -> "AgentKind":
        return cls("conditional_ids")

    @classmethod
    def contextual(cls) -> "AgentKind":
        return cls("contextual_ids")

    @classmethod
    def sampled(cls, w: int) -> "AgentKind":
        return cls("sampled_contextual_ids", w=w)

    @classmethod
    def thompson(cls) -> "AgentKind":
        return cls("thompson")

    @classmethod
    def uniform(cls) -> "AgentKind":
        return cls("uniform")

    @classmethod
    def ts_mixture(cls, epsilon: float, explore_policy: Policy) -> "AgentKind":
        return cls("ts_mixture", epsilon=epsilon, explore_policy=explore_policy)


@dataclass(frozen=True, eq=False)
class IRSolution:
    """Minimizer together with its ratio, (D, G) coordinates and fallback flag."""

    policy: object
    ratio: float
    expected_regret: float
    expected_gain: float
    exhausted: bool = False


def ratio_value(d: float, g: float, alpha: float, lam: int) -> float:
    """``max(0, d - alpha)^lam / g`` with 0 for a zero numerator and inf for ``g <= 0``."""
    x = d - alpha
    if x <= 0:
        return 0.0
    if g <= 0:
        return float("inf")
    return float(x ** lam / g)


def _clean_gain(gain, floor: float) -> np.ndarray:
    g = np.asarray(gain, dtype=float).ravel()
    if not np.all(np.isfinite(g)) or np.any(g < 0):
        raise ValueError("information gains must be finite and nonnegative")
    return np.where(g < floor, 0.0, g)


def _clean_delta(delta) -> np.ndarray:
    d = np.asarray(delta, dtype=float).ravel()
    if d.size == 0 or not np.all(np.isfinite(d)):
        raise ValueError("regret vector must be nonempty and finite")
    return d


def _greedy_row(delta: np.ndarray) -> np.ndarray:
    row = np.zeros(delta.size)
    row[int(np.argmin(delta))] = 1.0
    return row


def minimize_cir(delta, gain, cfg: IRConfig | None = None, full: bool = False):
    """Minimize ``max(0, delta.pi - alpha)^lam / gain.pi`` over the simplex.

    Every pair of actions is scanned with the mixing weight chosen from
    {0, 1, stationary point, hinge}; the winner has at most two nonzero
    entries.  Among zero-ratio candidates the one with the largest gain wins.
    """
    cfg = cfg or IRConfig()
    d = _clean_delta(delta)
    g = _clean_gain(gain, cfg.info_floor)
    if d.shape != g.shape:
        raise ValueError("delta and gain differ in length")
    k = d.size
    alpha, lam = cfg.alpha, cfg.lam
    if not np.any(g > 0):
        row = _greedy_row(d)
        sol = IRSolution(row, ratio_value(float(d @ row), 0.0, alpha, lam), float(d @ row), 0.0, True)
        return sol if full else sol.policy
    ii, jj = np.triu_indices(k, 1)
    ii = np.concatenate([np.arange(k), ii])
    jj = np.concatenate([np.arange(k), jj])
    dd = d[ii] - d[jj]
    dg = g[ii] - g[jj]
    x0 = d[jj] - alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        u_stat = (x0 * dg - lam * dd * g[jj]) / ((lam - 1) * dd * dg)
        u_hinge = -x0 / dd
    u = np.stack([np.zeros_like(dd), np.ones_like(dd), u_stat, u_hinge], axis=1)
    u = np.where(np.isfinite(u), np.clip(u, 0.0, 1.0), 0.0)
    x = x0[:, None] + u * dd[:, None]
    hinge = np.zeros_like(u, dtype=bool)
    hinge[:, 3] = np.isfinite(u_hinge) & (u_hinge >= 0) & (u_hinge <= 1)
    x = np.where(hinge, 0.0, x)
    gg = g[jj][:, None] + u * dg[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(x <= 0, 0.0, np.where(gg > 0, np.maximum(x, 0.0) ** lam / gg, np.inf))
    h, gg, u = h.ravel(), gg.ravel(), u.ravel()
    best = int(np.lexsort((-gg, h))[0])
    p, c = divmod(best, 4)
    row = np.zeros(k)
    row[ii[p]] += u[best]
    row[jj[p]] += 1.0 - u[best]
    dv, gv = float(d @ row), float(g @ row)
    exhausted = gv < cfg.info_floor
    if exhausted:
        row = _greedy_row(d)
        dv, gv = float(d @ row), float(g @ row)
    sol = IRSolution(row, ratio_value(dv, gv, alpha, lam), dv, gv, exhausted)
    return sol if full else sol.policy


def _xi_array(xi, m: int) -> np.ndarray:
    p = xi.probs if isinstance(xi, ContextDistribution) else np.asarray(xi, dtype=float).ravel()
    if p.size != m:
        raise ValueError("context distribution length differs from the number of regret vectors")
    return p


def _hull_edges(d: np.ndarray, g: np.ndarray) -> tuple[int, list[tuple[int, int]]]:
    """Start vertex (min regret, then max gain) and the rising edges of the upper hull."""
    order = np.lexsort((np.arange(d.size), -g, d))
    start = int(order[0])
    # keep the highest point of every distinct regret value
    pts: list[int] = []
    for a in order:
        if pts and d[a] == d[pts[-1]]:
            continue
        pts.append(int(a))
    hull: list[int] = []
    for a in pts:
        while len(hull) >= 2:
            o, b = hull[-2], hull[-1]
            cross = (d[b] - d[o]) * (g[a] - g[o]) - (g[b] - g[o]) * (d[a] - d[o])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(a)
    edges = []
    for a, b in zip(hull[:-1], hull[1:]):
        if g[b] <= g[a]:
            break
        edges.append((a, b))
    return start, edges


def _segment_best(x0: float, g0: float, dd: float, dg: float, lam: int) -> tuple[float, float]:
    """Minimize ``(x0 + t dd)^lam / (g0 + t dg)`` over t in [0, 1] with x0 > 0."""
    cands = [0.0, 1.0]
    den = (lam - 1) * dd * dg
    if den != 0:
        t = (x0 * dg - lam * g0 * dd) / den
        if 0 < t < 1:
            cands.append(t)
    best_t, best_h = 0.0, np.inf
    for t in cands:
        gg = g0 + t * dg
        h = (x0 + t * dd) ** lam / gg if gg > 0 else np.inf
        if h < best_h:
            best_t, best_h = t, h
    return best_t, best_h


def _frontier(ds, gs, p, active, cfg: IRConfig):
    alpha, lam = cfg.alpha, cfg.lam
    rows = [np.zeros(d.size) for d in ds]
    cur = {}
    edges = []
    for m in active:
        start, e = _hull_edges(ds[m], gs[m])
        cur[m] = start
        for pos, (a, b) in enumerate(e):
            dd = p[m] * (ds[m][b] - ds[m][a])
            dg = p[m] * (gs[m][b] - gs[m][a])
            edges.append((-dg / dd, m, pos, a, b, dd, dg))
    edges.sort(key=lambda r: (r[0], r[1], r[2]))
    D = float(sum(p[m] * ds[m][cur[m]] for m in active))
    G = float(sum(p[m] * gs[m][cur[m]] for m in active))
    stop_at, stop_t = len(edges), 0.0
    if D <= alpha:
        for idx, (_, m, _, a, b, dd, dg) in enumerate(edges):
            if D + dd <= alpha:
                D, G = D + dd, G + dg
                continue
            stop_at, stop_t = idx, (alpha - D) / dd
            break
    else:
        best_h = (D - alpha) ** lam / G if G > 0 else np.inf
        stop_at = 0
        for idx, (_, m, _, a, b, dd, dg) in enumerate(edges):
            t, h = _segment_best(D - alpha, G, dd, dg, lam)
            if h < best_h:
                best_h, stop_at, stop_t = h, idx, t
                if t == 1.0:
                    stop_at, stop_t = idx + 1, 0.0
            D, G = D + dd, G + dg
    for idx in range(min(stop_at, len(edges))):
        cur[edges[idx][1]] = edges[idx][4]
    for m in active:
        rows[m][cur[m]] = 1.0
    if stop_at < len(edges) and stop_t > 0:
        _, m, _, a, b, _, _ = edges[stop_at]
        rows[m][:] = 0.0
        rows[m][a] = 1.0 - stop_t
        rows[m][b] = stop_t
    return rows


def _fw_value(D: float, G: float, alpha: float, lam: int) -> float:
    return ratio_value(D, G, alpha, lam)


def _frank_wolfe(ds, gs, p, active, cfg: IRConfig):
    alpha, lam = cfg.alpha, cfg.lam
    rows = [_greedy_row(d) for d in ds]
    d0 = sum(p[m] * ds[m].min() for m in active)
    if d0 <= alpha:
        # zero ratio is attainable: maximize gain subject to D <= alpha
        sizes = [ds[m].size for m in active]
        c = -np.concatenate([p[m] * gs[m] for m in active])
        a_ub = np.concatenate([p[m] * ds[m] for m in active])[None, :]
        a_eq = np.zeros((len(active), sum(sizes)))
        off = np.cumsum([0] + sizes)
        for i in range(len(active)):
            a_eq[i, off[i]:off[i + 1]] = 1.0
        res = linprog(c, A_ub=a_ub, b_ub=[alpha], A_eq=a_eq, b_eq=np.ones(len(active)),
                      bounds=(0, None), method="highs")
        for i, m in enumerate(active):
            r = np.maximum(res.x[off[i]:off[i + 1]], 0.0)
            rows[m] = r / r.sum()
        return rows, 0
    for m in active:
        rows[m] = np.full(ds[m].size, 1.0 / ds[m].size)
    it = 0
    for it in range(1, cfg.fw_max_iters + 1):
        D = sum(p[m] * ds[m] @ rows[m] for m in active)
        G = sum(p[m] * gs[m] @ rows[m] for m in active)
        x = D - alpha
        h = x ** lam / G
        gd, gg = lam * x ** (lam - 1) / G, -x ** lam / G ** 2
        verts, gap, dD, dG = {}, 0.0, 0.0, 0.0
        for m in active:
            score = gd * ds[m] + gg * gs[m]
            j = int(np.argmin(score))
            verts[m] = j
            gap += p[m] * (score @ rows[m] - score[j])
            dD += p[m] * (ds[m][j] - ds[m] @ rows[m])
            dG += p[m] * (gs[m][j] - gs[m] @ rows[m])
        if gap <= cfg.fw_tol * max(1.0, h):
            break
        t, _ = _segment_best(x, G, dD, dG, lam)
        if t <= 0:
            break
        for m in active:
            rows[m] = (1 - t) * rows[m]
            rows[m][verts[m]] += t
    return rows, it


def minimize_mir(deltas: Sequence, gains: Sequence, xi, cfg: IRConfig | None = None,
                 method: str = "frontier", full: bool = False):
    """Minimize ``max(0, E_xi[delta.pi] - alpha)^lam / E_xi[gain.pi]`` over policies.

    ``deltas`` and ``gains`` hold one vector per context.  Contexts with zero
    probability are left out of the objective and get greedy rows.
    ``method="frank_wolfe"`` runs the iterative solver instead of the exact
    frontier walk.
    """
    cfg = cfg or IRConfig()
    ds = [_clean_delta(d) for d in deltas]
    gs = [_clean_gain(g, cfg.info_floor) for g in gains]
    if len(ds) != len(gs) or any(a.shape != b.shape for a, b in zip(ds, gs)):
        raise ValueError("deltas and gains must match context by context")
    p = _xi_array(xi, len(ds))
    active = [m for m in range(len(ds)) if p[m] > 0]
    if not active:
        raise ValueError("context distribution has no mass")
    if method == "frontier":
        rows = _frontier(ds, gs, p, active, cfg)
    elif method == "frank_wolfe":
        rows, _ = _frank_wolfe(ds, gs, p, active, cfg)
    else:
        raise ValueError(f"unknown method {method!r}")
    for m in range(len(ds)):
        if p[m] == 0:
            rows[m] = _greedy_row(ds[m])
    D = float(sum(p[m] * ds[m] @ rows[m] for m in active))
    G = float(sum(p[m] * gs[m] @ rows[m] for m in active))
    exhausted = G < cfg.info_floor
    if exhausted:
        rows = [_greedy_row(d) for d in ds]
        D = float(sum(p[m] * ds[m] @ rows[m] for m in active))
        G = float(sum(p[m] * gs[m] @ rows[m] for m in active))
    rows = [np.maximum(r, 0.0) / np.maximum(r, 0.0).sum() for r in rows]
    sol = IRSolution(Policy(tuple(rows)), ratio_value(D, G, cfg.alpha, cfg.lam), D, G, exhausted)
    return sol if full else sol.policy


def realized_ratio(policy, deltas, gains, xi=None, cfg: IRConfig | None = None) -> float:
    """Evaluate the conditional ratio (vector input) or the marginal ratio (Policy input)."""
    cfg = cfg or IRConfig()
    if isinstance(policy, Policy):
        p = _xi_array(xi, len(policy))
        D = sum(p[m] * (_clean_delta(deltas[m]) @ policy[m]) for m in range(len(policy)))
        G = sum(p[m] * (_clean_gain(gains[m], cfg.info_floor) @ policy[m]) for m in range(len(policy)))
    else:
        row = np.asarray(policy, dtype=float).ravel()
        D = _clean_delta(deltas) @ row
        G = _clean_gain(gains, cfg.info_floor) @ row
    return ratio_value(float(D), float(G), cfg.alpha, cfg.lam)


def ts_policy(post: Posterior, env: Environment) -> Policy:
    """Thompson sampling as a policy: each row is the law of that context's optimal action."""
    rows = []
    for m in range(env.n_contexts):
        r = optimal_action_probs(post, m, env)
        rows.append(r / r.sum())
    return Policy(tuple(rows))


def policy_gains(post: Posterior, env: Environment, ig_cfg: InfoGainConfig | None = None,
                 rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Per-context gains used by contextual agents (policy target unless ``parameter`` is asked)."""
    ig_cfg = ig_cfg or InfoGainConfig()
    fn = param_info_gain if ig_cfg.target == "parameter" else marg_info_gain
    vec = fn(post, env, ig_cfg, rng)
    return [vec[c] for c in env.contexts]


def all_regrets(post: Posterior, env: Environment) -> list[np.ndarray]:
    return [regret_vector(post, m, env) for m in range(env.n_contexts)]


def sampled_mir_policy(post: Posterior, env: Environment, xi: ContextDistribution, w: int,
                       cfg: IRConfig | None, rng: np.random.Generator,
                       ig_cfg: InfoGainConfig | None = None, contexts: Sequence[int] | None = None,
                       deltas=None, gains=None, full: bool = False):
    """Minimize the ratio under the empirical law of ``w`` contexts drawn from ``xi``.

    ``contexts`` replaces the random draw (useful to enumerate every context once).
    Contexts that were never drawn get greedy rows.
    """
    if w < 1:
        raise ValueError("w must be at least 1")
    if contexts is None:
        contexts = [xi.sample(rng) for _ in range(w)]
    counts = np.bincount(np.asarray(contexts, dtype=int), minlength=env.n_contexts).astype(float)
    emp = counts / counts.sum()
    if deltas is None:
        deltas = all_regrets(post, env)
    if gains is None:
        gains = policy_gains(post, env, ig_cfg)
    return minimize_mir(deltas, gains, emp, cfg, full=full)


@dataclass(frozen=True, eq=False)
class Decision:
    """Chosen action plus the quantities the harness logs for the round."""

    action: int
    row: np.ndarray
    ratio: float = float("nan")
    exhausted: bool = False
    policy: Policy | None = None
    deltas: list = field(default_factory=list)
    gains: list = field(default_factory=list)


def _sample_row(row: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(row)
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), row.size - 1))


def _ts_choice(post: Posterior, env: Environment, context: int, rng: np.random.Generator) -> tuple[int, np.ndarray]:
    i = post.sample_atom(rng)
    j = int(np.argmax(env.reward_table(context)[i]))
    row = optimal_action_probs(post, context, env)
    return j, row / row.sum()


def decide(agent: AgentKind, post: Posterior, env: Environment, context: int,
           cfg: IRConfig | None, rng: np.random.Generator,
           ig_cfg: InfoGainConfig | None = None,
           ig_rng: np.random.Generator | None = None) -> Decision:
    """Pick an action for ``context`` and report the policy that produced it."""
    cfg = cfg or IRConfig()
    ig_cfg = ig_cfg or InfoGainConfig()
    acts = env.contexts[env._check_context(context)]
    tag = agent.tag
    if tag == "conditional_ids":
        delta = regret_vector(post, context, env)
        gain = cond_info_gain(post, context, env, ig_cfg, ig_rng)
        sol = minimize_cir(delta, gain, cfg, full=True)
        j = _sample_row(sol.policy, rng)
        return Decision(int(acts[j]), sol.policy, sol.ratio, sol.exhausted,
                        deltas=[delta], gains=[gain])
    if tag in ("contextual_ids", "sampled_contextual_ids"):
        deltas = all_regrets(post, env)
        gains = policy_gains(post, env, ig_cfg, ig_rng)
        if tag == "contextual_ids":
            sol = minimize_mir(deltas, gains, env.xi, cfg, full=True)
        else:
            sol = sampled_mir_policy(post, env, env.xi, agent.w, cfg, rng,
                                     deltas=deltas, gains=gains, full=True)
        row = sol.policy[context]
        j = _sample_row(row, rng)
        return Decision(int(acts[j]), row, sol.ratio, sol.exhausted, sol.policy, deltas, gains)
    if tag == "uniform":
        row = np.full(acts.size, 1.0 / acts.size)
        return Decision(int(acts[int(rng.integers(acts.size))]), row)
    if tag == "thompson":
        j, row = _ts_choice(post, env, context, rng)
        return Decision(int(acts[j]), row)
    # ts_mixture
    explore = rng.random() < agent.epsilon
    j, ts_row = _ts_choice(post, env, context, rng)
    row = ts_row if agent.explore_policy is None else (
        (1 - agent.epsilon) * ts_row + agent.epsilon * agent.explore_policy[context])
    if explore:
        j = _sample_row(agent.explore_policy[context], rng)
    return Decision(int(acts[j]), row)


def act(agent: AgentKind, post: Posterior, env: Environment, context: int,
        cfg: IRConfig | None, rng: np.random.Generator,
        ig_cfg: InfoGainConfig | None = None) -> int:
    """Action label chosen by ``agent`` in ``context``."""
    return decide(agent, post, env, context, cfg, rng, ig_cfg).action
