"""Finite-support Bayesian state for contextual bandits.

A belief over the unknown parameter is a probability vector over a fixed
list of candidate parameter vectors (atoms).  Everything the decision layer
needs (one-step regret, the law of the optimal action or the optimal policy,
exact Bayes updates) is computed by enumerating atoms.

Action labels are global integers.  ``Environment.contexts[m]`` lists the
labels playable in context ``m``; policies and regret vectors are indexed by
position inside that list.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

WEIGHT_TOL = 1e-9
UNDERFLOW = 1e-300
NOISELESS_MATCH = 1e-9


class DegeneratePosteriorError(ValueError):
    """Raised when an observation has zero likelihood under every atom."""


def _as_prob_vector(values: Sequence[float], what: str) -> np.ndarray:
    p = np.asarray(values, dtype=float).ravel()
    if p.size == 0:
        raise ValueError(f"{what}: empty probability vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"{what}: entries must be finite and nonnegative")
    if abs(p.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"{what}: sums to {p.sum()!r}, expected 1")
    return p


@dataclass(frozen=True, eq=False)
class ParamSupport:
    """Candidate parameter vectors with their prior weights."""

    params: np.ndarray
    prior_weights: np.ndarray

    def __post_init__(self):
        params = np.atleast_2d(np.asarray(self.params, dtype=float))
        if params.shape[0] == 0:
            raise ValueError("ParamSupport needs at least one atom")
        if not np.all(np.isfinite(params)):
            raise ValueError("ParamSupport: non-finite parameter entry")
        weights = _as_prob_vector(self.prior_weights, "prior_weights")
        if weights.size != params.shape[0]:
            raise ValueError("prior_weights length does not match the number of atoms")
        params.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "prior_weights", weights)

    @classmethod
    def uniform(cls, params) -> "ParamSupport":
        params = np.atleast_2d(np.asarray(params, dtype=float))
        n = params.shape[0]
        return cls(params, np.full(n, 1.0 / n))

    @property
    def size(self) -> int:
        return self.params.shape[0]

    @property
    def dim(self) -> int:
        return self.params.shape[1]

    def prior(self) -> "Posterior":
        return Posterior(self, self.prior_weights)


@dataclass(frozen=True, eq=False)
class Posterior:
    support: ParamSupport
    weights: np.ndarray

    def __post_init__(self):
        w = _as_prob_vector(self.weights, "posterior weights")
        if w.size != self.support.size:
            raise ValueError("posterior weights do not match the support size")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def point_mass(cls, support: ParamSupport, index: int) -> "Posterior":
        w = np.zeros(support.size)
        w[index] = 1.0
        return cls(support, w)

    def sample_atom(self, rng: np.random.Generator) -> int:
        # inverse-CDF keeps the draw reproducible across numpy versions
        cdf = np.cumsum(self.weights)
        return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), cdf.size - 1))


@dataclass(frozen=True, eq=False)
class ContextDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = _as_prob_vector(self.probs, "context distribution")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, m: int) -> "ContextDistribution":
        return cls(np.full(m, 1.0 / m))

    @property
    def n_contexts(self) -> int:
        return self.probs.size

    def sample(self, rng: np.random.Generator) -> int:
        cdf = np.cumsum(self.probs)
        return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), cdf.size - 1))


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian reward noise; ``kind="noiseless"`` gives exact observations."""

    kind: str = "gaussian"
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "noiseless"):
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.std > 0:
            raise ValueError("Gaussian noise std must be positive")

    @property
    def noiseless(self) -> bool:
        return self.kind == "noiseless"

    @classmethod
    def exact(cls) -> "NoiseModel":
        return cls(kind="noiseless", std=0.0)


@dataclass(frozen=True, eq=False)
class Observation:
    """What the agent sees after playing ``chosen_action``."""

    chosen_action: int
    ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=int).ravel()
        values = np.asarray(self.values, dtype=float).ravel()
        if ids.shape != values.shape:
            raise ValueError("observation ids and values differ in length")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)

    @property
    def revealed(self) -> list[tuple[int, float]]:
        return list(zip(self.ids.tolist(), self.values.tolist()))


@dataclass(frozen=True, eq=False)
class Policy:
    """One probability row per context, indexed by position in ``contexts[m]``."""

    rows: tuple

    def __post_init__(self):
        rows = tuple(_as_prob_vector(r, f"policy row {i}") for i, r in enumerate(self.rows))
        object.__setattr__(self, "rows", rows)

    def __getitem__(self, m: int) -> np.ndarray:
        return self.rows[m]

    def __len__(self) -> int:
        return len(self.rows)

    @classmethod
    def uniform(cls, env: "Environment") -> "Policy":
        return cls(tuple(np.full(len(a), 1.0 / len(a)) for a in env.contexts))

    @classmethod
    def deterministic(cls, env: "Environment", choice: Sequence[int]) -> "Policy":
        rows = []
        for m, j in enumerate(choice):
            r = np.zeros(len(env.contexts[m]))
            r[j] = 1.0
            rows.append(r)
        return cls(tuple(rows))


class Environment:
    """Contextual bandit description shared by the graph and sparse-linear families.

    Subclasses provide ``mean_rewards`` (atoms x actions table of f) and
    ``revealed`` (labels whose noisy rewards are observed when playing an action).
    Reward of action ``a`` observed as coordinate ``a`` always has mean
    ``mean_rewards(theta)[a]``.
    """

    def __init__(self, contexts, xi: ContextDistribution, support: ParamSupport,
                 noise: NoiseModel | None = None, name: str = "", meta: dict | None = None):
        self.contexts = tuple(np.asarray(c, dtype=int).ravel() for c in contexts)
        if not self.contexts or any(c.size == 0 for c in self.contexts):
            raise ValueError("every context needs at least one action")
        if xi.n_contexts != len(self.contexts):
            raise ValueError("context distribution length differs from the number of contexts")
        self.xi = xi
        self.support = support
        self.noise = noise if noise is not None else NoiseModel()
        self.name = name
        self.meta = dict(meta or {})
        self.means = np.asarray(self.mean_rewards(support.params), dtype=float)
        self.means.setflags(write=False)
        labels = np.concatenate(self.contexts)
        if labels.min() < 0 or labels.max() >= self.n_actions:
            raise ValueError("context refers to an unknown action label")
        self._reward_tables = tuple(np.ascontiguousarray(self.means[:, c]) for c in self.contexts)

    # -- subclass hooks -------------------------------------------------
    @property
    def n_actions(self) -> int:
        raise NotImplementedError

    def mean_rewards(self, params: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def revealed(self, action: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def noise_dim(self) -> int:
        """Length of the per-round noise vector drawn by the simulator."""
        return self.n_actions

    # -- shared helpers -------------------------------------------------
    @property
    def n_contexts(self) -> int:
        return len(self.contexts)

    def reward_table(self, context: int) -> np.ndarray:
        """``f(context, a, theta_i)`` with shape (atoms, |A^context|)."""
        return self._reward_tables[self._check_context(context)]

    def local_index(self, context: int, action: int) -> int:
        hits = np.flatnonzero(self.contexts[context] == action)
        if hits.size == 0:
            raise ValueError(f"action {action} is not playable in context {context}")
        return int(hits[0])

    def observe(self, action: int, true_means: np.ndarray, noise: np.ndarray) -> Observation:
        """Observation for ``action`` given the true mean vector and a noise draw.

        ``noise`` is indexed by coordinate label so that the draw does not depend
        on which action was played.
        """
        ids = self.revealed(action)
        vals = true_means[ids]
        if not self.noise.noiseless:
            vals = vals + self.noise.std * noise[ids]
        return Observation(action, ids, vals)

    def _check_context(self, context: int) -> int:
        if not 0 <= context < len(self.contexts):
            raise IndexError(f"context {context} out of range")
        return context


def _log_likelihood(env: Environment, obs: Observation) -> np.ndarray:
    if obs.ids.size and (obs.ids.min() < 0 or obs.ids.max() >= env.n_actions):
        raise ValueError("observation refers to an unknown action label")
    if not np.all(np.isfinite(obs.values)):
        raise ValueError("observation contains a NaN or infinite reward")
    mu = env.means[:, obs.ids]
    resid = obs.values[None, :] - mu
    if env.noise.noiseless:
        ok = np.all(np.abs(resid) <= NOISELESS_MATCH, axis=1)
        return np.where(ok, 0.0, -np.inf)
    return -0.5 * np.sum((resid / env.noise.std) ** 2, axis=1)


def _reweight(log_w: np.ndarray) -> np.ndarray:
    top = np.max(log_w)
    if not np.isfinite(top):
        raise DegeneratePosteriorError("observation has zero likelihood under every atom")
    w = np.exp(log_w - top)
    w[w < UNDERFLOW] = 0.0
    return w / w.sum()


def posterior_update(post: Posterior, context: int, obs: Observation, env: Environment) -> Posterior:
    """Exact Bayes update of the atom weights; the input posterior is untouched."""
    env._check_context(context)
    if obs.chosen_action not in env.contexts[context]:
        raise ValueError(f"action {obs.chosen_action} is not playable in context {context}")
    with np.errstate(divide="ignore"):
        log_w = np.log(post.weights)
    return Posterior(post.support, _reweight(log_w + _log_likelihood(env, obs)))


def batch_update(post: Posterior, steps, env: Environment) -> Posterior:
    """Single update with the concatenated likelihood of ``(context, obs)`` pairs."""
    with np.errstate(divide="ignore"):
        log_w = np.log(post.weights)
    for context, obs in steps:
        env._check_context(context)
        log_w = log_w + _log_likelihood(env, obs)
    return Posterior(post.support, _reweight(log_w))


def best_actions(env: Environment) -> np.ndarray:
    """Per atom and context, position of the optimal action (lowest index on ties)."""
    return np.stack([np.argmax(t, axis=1) for t in env._reward_tables], axis=1)


def optimal_action_probs(post: Posterior, context: int, env: Environment) -> np.ndarray:
    table = env.reward_table(context)
    best = np.argmax(table, axis=1)
    return np.bincount(best, weights=post.weights, minlength=table.shape[1])


def policy_labels(env: Environment) -> tuple[np.ndarray, np.ndarray]:
    """Group atoms by their induced optimal policy map.

    Returns ``(maps, labels)`` where ``maps[g]`` is the action position chosen in
    every context by group ``g`` and ``labels[i]`` is the group of atom ``i``.
    """
    maps, labels = np.unique(best_actions(env), axis=0, return_inverse=True)
    return maps, labels.ravel()


def optimal_policy_posterior(post: Posterior, env: Environment) -> list[tuple[tuple[int, ...], float]]:
    maps, labels = policy_labels(env)
    probs = np.bincount(labels, weights=post.weights, minlength=maps.shape[0])
    return [(tuple(int(a) for a in maps[g]), float(probs[g]))
            for g in range(maps.shape[0]) if probs[g] > 0]


def regret_vector(post: Posterior, context: int, env: Environment) -> np.ndarray:
    """Posterior expected one-step regret of each action in ``context``."""
    table = env.reward_table(context)
    gaps = table.max(axis=1, keepdims=True) - table
    return np.maximum(post.weights @ gaps, 0.0)


def r_max(env: Environment, support: ParamSupport | None = None) -> float:
    """Largest absolute expected reward over atoms and playable actions."""
    if support is None or support is env.support:
        means = env.means
    else:
        means = np.asarray(env.mean_rewards(support.params))
    cols = np.unique(np.concatenate(env.contexts))
    return float(np.max(np.abs(means[:, cols]))) if means.size else 0.0


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats; zero entries contribute nothing."""
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))
