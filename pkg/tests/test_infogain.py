from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid
from scipy.stats import norm

from ctxids.core import (ContextDistribution, NoiseModel, ParamSupport, Posterior, optimal_action_probs,
                         r_max)
from ctxids.graphenv import FeedbackGraph, GraphBanditEnv, make_example1, make_theorem2_instance
from ctxids.infogain import (InfoGainConfig, cond_info_gain, kl_obs_given_opt, marg_info_gain,
                             mixture_information, optimal_action_entropy, param_info_gain,
                             policy_entropy, split_by_context)
from ctxids.sparseenv import random_sparse_env

from helpers import full_graph_env

# accuracy we claim for Gauss-Hermite evaluation of scalar and 2-d mixtures
QUAD_TOL = 1e-7
MC = InfoGainConfig(estimator="monte_carlo")


def _xlogy_ratio(a, b):
    out = np.zeros_like(a)
    m = a > 0
    out[m] = a[m] * np.log(a[m] / b[m])
    return out


def grid_mi(w, labels, mus, sigma, step=1e-3):
    """I(Z; Y) by trapezoid integration of the scalar mixture densities."""
    w, labels, mus = np.asarray(w, float), np.asarray(labels), np.asarray(mus, float)
    y = np.arange(mus.min() - 12 * sigma, mus.max() + 12 * sigma, step)
    dens = norm.pdf(y[None, :], loc=mus[:, None], scale=sigma)
    p = w @ dens
    total = 0.0
    for z in np.unique(labels):
        sel = labels == z
        pz = w[sel].sum()
        joint = w[sel] @ dens[sel]
        total += trapezoid(_xlogy_ratio(joint, pz * p), y)
    return total


def grid_kl(q_w, p_w, mus, sigma, step=1e-3):
    y = np.arange(mus.min() - 12 * sigma, mus.max() + 12 * sigma, step)
    dens = norm.pdf(y[None, :], loc=mus[:, None], scale=sigma)
    return trapezoid(_xlogy_ratio(q_w @ dens, p_w @ dens), y)


def test_config_validation():
    with pytest.raises(ValueError):
        InfoGainConfig(estimator="exact")
    with pytest.raises(ValueError):
        InfoGainConfig(target="reward")
    with pytest.raises(ValueError):
        InfoGainConfig(mc_samples=10)


# -- estimator oracles ------------------------------------------------------

TWO_ATOM_CASES = [(w, mu, s) for w in (0.5, 0.2, 0.9, 0.01) for mu, s in
                  (((0.0, 1.0), 1.0), ((0.0, 0.1), 1.0), ((-1.0, 2.0), 0.5), ((0.3, 0.7), 2.0),
                   ((0.0, 5.0), 1.0))]


@pytest.mark.parametrize("w,mu,sigma", TWO_ATOM_CASES)
def test_quadrature_matches_dense_grid(w, mu, sigma):
    assert len(TWO_ATOM_CASES) == 20
    weights = np.array([w, 1 - w])
    got = mixture_information(weights, [0, 1], np.array(mu), NoiseModel("gaussian", sigma))
    assert abs(got - grid_mi(weights, [0, 1], np.array(mu), sigma)) <= 1e-6


def test_quadrature_matches_grid_with_shared_labels(rng):
    for _ in range(10):
        w = rng.dirichlet(np.ones(4))
        mus = rng.uniform(-2, 2, size=4)
        labels = np.array([0, 0, 1, 2])
        got = mixture_information(w, labels, mus, NoiseModel("gaussian", 0.8))
        assert abs(got - grid_mi(w, labels, mus, 0.8)) <= 1e-6


def mc_quadrature_cases(n_cases=200):
    """(quadrature, mc, se) on random scalar mixtures with fixed seeds."""
    out = []
    for case in range(n_cases):
        rng = np.random.default_rng([7, case])
        n = int(rng.integers(2, 6))
        w = rng.dirichlet(np.ones(n))
        labels = rng.integers(0, n, size=n)
        mus = rng.uniform(-2, 2, size=n)
        noise = NoiseModel("gaussian", float(rng.uniform(0.3, 2.0)))
        quad = mixture_information(w, labels, mus, noise)
        mc, se = mixture_information(w, labels, mus, noise, MC, np.random.default_rng([8, case]),
                                     return_se=True)
        out.append((quad, mc, se))
    return np.array(out)


def test_monte_carlo_error_is_calibrated():
    res = mc_quadrature_cases()
    live = res[:, 2] > 0
    z = (res[live, 1] - res[live, 0]) / res[live, 2]
    assert np.all(res[~live, 0] == res[~live, 1])
    # unbiased with a standard error that matches the spread of the estimates
    assert abs(z.mean()) < 3 / np.sqrt(z.size)
    assert 0.8 < z.std() < 1.2
    # 3-SE misses are rare events (expected 0.27% per case); P(>= 5 of 200) < 0.3%
    assert np.sum(np.abs(z) > 3) <= 4


def test_monte_carlo_is_reproducible():
    args = (np.array([0.3, 0.7]), [0, 1], np.array([[0.0, 1.0, 0.5], [1.0, 0.0, 0.2]]), NoiseModel())
    a = mixture_information(*args, MC, np.random.default_rng(3))
    b = mixture_information(*args, MC, np.random.default_rng(3))
    assert a == b and a > 0


def test_two_dimensional_quadrature_matches_monte_carlo(rng):
    w = rng.dirichlet(np.ones(3))
    mus = rng.uniform(-1, 1, size=(3, 2))
    quad = mixture_information(w, [0, 1, 1], mus, NoiseModel())
    mc, se = mixture_information(w, [0, 1, 1], mus, NoiseModel(),
                                 InfoGainConfig(estimator="monte_carlo", mc_samples=65536), rng,
                                 return_se=True)
    assert abs(quad - mc) <= 3 * se


def test_noiseless_binary_gain_is_entropy():
    env = make_example1(2)
    env = GraphBanditEnv(env.graph, env.contexts, env.xi,
                         ParamSupport(env.support.params, np.array([0.3, 0.7])), env.noise)
    post = env.support.prior()
    gain = param_info_gain(post, env)
    h = -(0.3 * np.log(0.3) + 0.7 * np.log(0.7))
    assert gain[2] == pytest.approx(h, abs=1e-12)  # label k = 2 reveals context 0


# -- per-target gains -------------------------------------------------------

def test_point_mass_gives_zero_gains():
    env = make_theorem2_instance(8, 100)
    pm = Posterior.point_mass(env.support, 2)
    assert np.all(param_info_gain(pm, env) == 0)
    assert np.all(marg_info_gain(pm, env) == 0)
    assert np.all(cond_info_gain(pm, 1, env) == 0)
    assert policy_entropy(pm, env) == 0


def test_single_context_marginal_equals_conditional(rng):
    for _ in range(10):
        atoms = rng.normal(size=(5, 4))
        env = full_graph_env(atoms)
        post = Posterior(env.support, rng.dirichlet(np.ones(5)))
        np.testing.assert_allclose(marg_info_gain(post, env), cond_info_gain(post, 0, env), atol=1e-12)


def test_same_policy_map_gives_zero_marginal_gain():
    env = full_graph_env([[1.0, 0.0, 0.5], [2.0, 0.3, -1.0], [1.5, 1.0, 0.0]])
    assert np.all(marg_info_gain(env.support.prior(), env) == 0)
    assert np.any(param_info_gain(env.support.prior(), env) > 0)


def test_example1_gains():
    k = 32
    env = make_example1(k)
    post = env.support.prior()
    rev = env.meta["revealing_action"]
    ctx2 = 1
    cond = cond_info_gain(post, ctx2, env)
    assert np.all(cond == 0)
    marg = marg_info_gain(post, env)
    assert marg[rev] == pytest.approx(np.log(k), abs=1e-12)


def test_theorem2_revealing_arm_informative():
    k = 16
    env = make_theorem2_instance(k, 1000)
    marg = marg_info_gain(env.support.prior(), env)
    assert marg[k - 1] > 0
    assert marg[k - 2] == 0 and marg[0] == 0


def test_policy_entropy_cases(rng):
    env = make_theorem2_instance(9, 100)
    assert policy_entropy(env.support.prior(), env) == pytest.approx(np.log(6), abs=1e-12)
    for _ in range(100):
        e = full_graph_env(rng.normal(size=(6, 5)), contexts=[np.array([0, 1, 2]), np.array([2, 3, 4])])
        post = Posterior(e.support, rng.dirichlet(np.ones(6)))
        assert policy_entropy(post, e) <= 2 * np.log(3) + 1e-12


def test_kl_obs_given_opt_cases():
    env = full_graph_env([[1.0, 0.0], [0.0, 1.0]], adjacency=np.ones((2, 2), dtype=bool))
    post = env.support.prior()
    a = kl_obs_given_opt(post, 0, 0, 0, env)
    b = kl_obs_given_opt(post, 0, 0, 1, env)
    assert a == pytest.approx(b, abs=1e-12) and a > 0
    oracle = grid_kl(np.array([1.0, 0.0]), np.array([0.5, 0.5]), np.array([1.0, 0.0]), 1.0)
    assert a == pytest.approx(oracle, abs=1e-6)
    pm = Posterior.point_mass(env.support, 0)
    assert kl_obs_given_opt(pm, 0, 1, 0, env) == 0.0
    with pytest.raises(ValueError):
        kl_obs_given_opt(pm, 0, 1, 1, env)


def test_kl_obs_given_opt_mixture_oracle(rng):
    atoms = np.array([[1.0, 0.2], [0.8, -0.4], [0.0, 0.9], [0.1, 1.3]])
    env = full_graph_env(atoms, noise=NoiseModel("gaussian", 0.6))
    w = np.array([0.1, 0.4, 0.3, 0.2])
    post = Posterior(env.support, w)
    # a* = 0 for atoms 0, 1; a* = 1 for atoms 2, 3
    q = np.where(np.array([1, 1, 0, 0]) == 1, w, 0.0)
    q /= q.sum()
    got = kl_obs_given_opt(post, 0, 1, 0, env)
    assert got == pytest.approx(grid_kl(q, w, atoms[:, 1], 0.6), abs=1e-6)


# -- invariants -------------------------------------------------------------

def _low_degree_env(rng):
    """Random graph env whose actions reveal at most two rewards (quadrature regime)."""
    k = int(rng.integers(3, 6))
    adj = np.zeros((k, k), dtype=bool)
    for i in range(k):
        adj[i, rng.choice(k, size=int(rng.integers(1, 3)), replace=False)] = True
    contexts = [np.sort(rng.choice(k, size=int(rng.integers(2, k + 1)), replace=False)) for _ in range(2)]
    atoms = rng.uniform(-1, 1, size=(int(rng.integers(2, 6)), k))
    xi = ContextDistribution(rng.dirichlet(np.ones(2)))
    return GraphBanditEnv(FeedbackGraph(k, adj), contexts, xi,
                          ParamSupport(atoms, rng.dirichlet(np.ones(atoms.shape[0]))),
                          NoiseModel("gaussian", float(rng.uniform(0.5, 1.5))))


def _random_env(case):
    rng = np.random.default_rng([11, case])
    if case % 2:
        return random_sparse_env(rng, 2, 3, 3, 2, int(rng.integers(2, 6)))
    return _low_degree_env(rng)


def test_data_processing_chain():
    for case in range(200):
        env = _random_env(case)
        post = env.support.prior()
        par = param_info_gain(post, env)
        pol = marg_info_gain(post, env)
        assert np.all(par >= pol - 2 * QUAD_TOL), case
        for m in range(env.n_contexts):
            cond = cond_info_gain(post, m, env)
            assert np.all(split_by_context(env, pol)[m] >= cond - 2 * QUAD_TOL), (case, m)


@given(st.integers(0, 10_000))
def test_gain_bounds(seed):
    env = _random_env(seed)
    post = env.support.prior()
    rmax = r_max(env)
    for m in range(env.n_contexts):
        gain = cond_info_gain(post, m, env)
        assert np.all(np.isfinite(gain)) and np.all(gain >= 0)
        assert np.all(gain <= optimal_action_entropy(post, m, env) + QUAD_TOL)
        # Pinsker-style lower bound on each action's gain
        p_opt = optimal_action_probs(post, m, env)
        best = np.argmax(env.reward_table(m), axis=1)
        w = post.weights
        for pos, a in enumerate(env.contexts[m]):
            ya = env.means[:, env.revealed(int(a))]
            if ya.shape[1] != 1:
                continue
            mean_all = w @ ya[:, 0]
            lb = 0.0
            for j in np.flatnonzero(p_opt > 0):
                sel = best == j
                lb += p_opt[j] * (w[sel] @ ya[sel, 0] / w[sel].sum() - mean_all) ** 2
            # Y_a is sub-Gaussian with variance proxy R^2 + sigma^2
            lb /= 2.0 * (rmax ** 2 + env.noise.std ** 2)
            assert gain[pos] >= lb - QUAD_TOL


def test_pinsker_factor_four_is_too_large():
    # two atoms at +-m with unit noise: the gain is about m^2 / 2, not 2 m^2
    m = 0.1
    gain = mixture_information(np.array([0.5, 0.5]), [0, 1], np.array([m, -m]), NoiseModel())
    spread = m ** 2
    assert gain < 2.0 / (m ** 2 + 1) * spread
    assert gain >= spread / (2.0 * (m ** 2 + 1))
