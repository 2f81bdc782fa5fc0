"""Conditional and contextual information-directed sampling on finite-support Bayesian bandits."""

from .core import (ContextDistribution, DegeneratePosteriorError, Environment, NoiseModel, Observation,
                   ParamSupport, Policy, Posterior, optimal_action_probs, optimal_policy_posterior,
                   posterior_update, r_max, regret_vector)
from .graphenv import (FeedbackGraph, GraphBanditEnv, classify_observability, explorability_graph,
                       graph_metrics, independence_number, make_example1, make_example2,
                       make_theorem2_instance, weak_domination_number)
from .ids import (AgentKind, IRConfig, act, minimize_cir, minimize_mir, realized_ratio,
                  sampled_mir_policy, ts_policy)
from .infogain import (InfoGainConfig, cond_info_gain, kl_obs_given_opt, marg_info_gain,
                       param_info_gain, policy_entropy)
from .sparseenv import (FeatureMap, SparseLinearEnv, c_min, check_sparse_optimal_actions,
                        lemma4_bounds, make_theorem3_instance)

__version__ = "0.1.0"

__all__ = [
    "AgentKind", "ContextDistribution", "DegeneratePosteriorError", "Environment", "FeatureMap",
    "FeedbackGraph", "GraphBanditEnv", "IRConfig", "InfoGainConfig", "NoiseModel", "Observation",
    "ParamSupport", "Policy", "Posterior", "SparseLinearEnv", "act", "c_min",
    "check_sparse_optimal_actions", "classify_observability", "cond_info_gain", "explorability_graph",
    "graph_metrics", "independence_number", "kl_obs_given_opt", "lemma4_bounds", "make_example1",
    "make_example2", "make_theorem2_instance", "make_theorem3_instance", "marg_info_gain",
    "minimize_cir", "minimize_mir", "optimal_action_probs", "optimal_policy_posterior",
    "param_info_gain", "policy_entropy", "posterior_update", "r_max", "realized_ratio",
    "regret_vector", "sampled_mir_policy", "ts_policy", "weak_domination_number",
]
