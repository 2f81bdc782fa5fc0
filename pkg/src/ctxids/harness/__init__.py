"""Simulation harness: configs, seeded episodes, experiments, bound curves and audits."""

from .audit import AuditReport, adaptivity_check, audit_lemmas, env_metrics
from .bounds import bound_overlays, graph_curve, sparse_curve, theorem1_curve
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .oracle import oracle_gridsearch_cir, oracle_gridsearch_mir
from .runner import EpisodeError, TrajectoryRecord, run_episode, run_experiment

__all__ = [
    "AuditReport", "ConfigError", "EpisodeError", "ExperimentConfig", "TrajectoryRecord",
    "adaptivity_check", "audit_lemmas", "bound_overlays", "env_metrics", "graph_curve",
    "load_config", "oracle_gridsearch_cir", "oracle_gridsearch_mir", "parse_config",
    "run_episode", "run_experiment", "sparse_curve", "theorem1_curve",
]
