"""Small environment constructors shared by the test modules."""

from __future__ import annotations

import numpy as np

from ctxids.core import ContextDistribution, NoiseModel, ParamSupport
from ctxids.graphenv import FeedbackGraph, GraphBanditEnv
from ctxids.sparseenv import FeatureMap, SparseLinearEnv


def full_graph_env(atoms, contexts=None, xi=None, noise=None, adjacency=None):
    """Graph environment where, by default, every action only reveals itself."""
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    k = atoms.shape[1]
    adj = np.eye(k, dtype=bool) if adjacency is None else np.asarray(adjacency, dtype=bool)
    contexts = contexts or [np.arange(k)]
    xi = xi or ContextDistribution.uniform(len(contexts))
    return GraphBanditEnv(FeedbackGraph(k, adj), contexts, xi, ParamSupport.uniform(atoms),
                          noise or NoiseModel())


def linear_env(features, atoms, s=None, xi=None, noise=None):
    feats = FeatureMap(tuple(np.asarray(f, dtype=float) for f in features))
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    xi = xi or ContextDistribution.uniform(feats.n_contexts)
    s = s or feats.d
    return SparseLinearEnv(feats, xi, ParamSupport.uniform(atoms), s, noise or NoiseModel())


def canonical_env():
    """Fixed two-context instance (M=2, k=3 per context, 3 atoms) used by the optimizer tests."""
    atoms = np.array([[0.9, 0.5, 0.1, 0.2, 0.6, 0.4],
                      [0.3, 0.8, 0.2, 0.7, 0.1, 0.4],
                      [0.1, 0.4, 0.6, 0.5, 0.5, 0.9]])
    contexts = [np.array([0, 1, 2]), np.array([3, 4, 5])]
    return full_graph_env(atoms, contexts=contexts, xi=ContextDistribution(np.array([0.6, 0.4])))


# acceptance criteria report filled by test_acceptance: criterion id -> (passed, detail)
ACCEPTANCE: dict = {}
