"""Experiment configuration: YAML schema, environment and agent construction."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..core import ContextDistribution, Environment, NoiseModel, ParamSupport, Policy, r_max
from ..graphenv import (GraphBanditEnv, explorability_graph, make_example1, make_example2,
                        make_theorem2_instance, random_graph_env, read_graph, read_xi)
from ..ids import AGENT_TAGS, AgentKind, IRConfig
from ..infogain import InfoGainConfig
from ..sparseenv import SparseLinearEnv, make_theorem3_instance, random_sparse_env, read_features

SCHEMA_VERSION = 1
ENV_KINDS = ("theorem2", "example1", "example2", "theorem3", "graph_file", "sparse_file",
             "random_graph", "random_sparse")


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    params: dict = field(default_factory=dict)
    base_dir: str = "."


@dataclass(frozen=True)
class AgentSpec:
    """Agent settings as written in the config; ``resolve_agent`` makes them concrete."""

    name: str
    tag: str
    ir: IRConfig
    alpha_auto: bool = False
    w: int = 1
    epsilon: float = 0.0
    explore: str = "uniform"


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvSpec
    agents: tuple
    horizon: int
    seeds: tuple
    estimator: InfoGainConfig = InfoGainConfig()
    output_dir: str | None = None
    bound_overlays: bool = False
    workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not self.agents:
            raise ConfigError("at least one agent is required")
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ConfigError("agent names must be unique")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


def _noise(params: dict) -> NoiseModel:
    if params.get("noiseless", False):
        return NoiseModel.exact()
    return NoiseModel("gaussian", float(params.get("noise_std", 1.0)))


def _resolve(base: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base, path)


def _support(params: dict, dim: int) -> ParamSupport:
    if "atoms" in params:
        atoms = np.array(params["atoms"], dtype=float)
        prior = params.get("prior")
        return ParamSupport.uniform(atoms) if prior is None else ParamSupport(atoms, np.array(prior, dtype=float))
    spec = params.get("random_atoms")
    if spec is None:
        raise ConfigError("file environments need 'atoms' or 'random_atoms'")
    rng = np.random.default_rng(int(spec.get("seed", 0)))
    count = int(spec.get("count", 8))
    scale = float(spec.get("scale", 1.0))
    atoms = np.clip(rng.normal(0.0, 0.5 * scale, size=(count, dim)), -scale, scale)
    sparsity = spec.get("sparsity")
    if sparsity is not None:
        for row in atoms:
            row[rng.choice(dim, size=dim - int(sparsity), replace=False)] = 0.0
            nrm = np.linalg.norm(row)
            if nrm > 1:
                row /= nrm
    return ParamSupport.uniform(atoms)


def build_env(spec: EnvSpec, horizon: int) -> Environment:
    """Instantiate the environment described by ``spec``."""
    p = dict(spec.params)
    kind = spec.kind
    try:
        if kind == "theorem2":
            return make_theorem2_instance(int(p.get("k", 64)), int(p.get("n", horizon)), _noise(p))
        if kind == "example1":
            return make_example1(int(p.get("k", 32)))
        if kind == "example2":
            return make_example2(int(p.get("k", 16)), int(p.get("n", horizon)), float(p.get("c_rev", 1.0)),
                                 float(p.get("c_gap", 1.0)), _noise(p))
        if kind == "theorem3":
            gap = p.get("gap")
            return make_theorem3_instance(int(p.get("p", 8)), int(p.get("s", 2)), int(p.get("n", horizon)),
                                          float(p.get("kappa", 1.0)), None if gap is None else float(gap),
                                          str(p.get("corners", "auto")), _noise(p))
        if kind == "graph_file":
            g = read_graph(_resolve(spec.base_dir, p["graph"]))
            if "xi" in p:
                contexts, xi = read_xi(_resolve(spec.base_dir, p["xi"]), g.k)
            else:
                contexts, xi = [np.arange(g.k)], ContextDistribution.uniform(1)
            return GraphBanditEnv(g, contexts, xi, _support(p, g.k), _noise(p), name="graph_file")
        if kind == "sparse_file":
            feats = read_features(_resolve(spec.base_dir, p["features"]))
            if "xi" in p:
                _, xi = read_xi(_resolve(spec.base_dir, p["xi"]), 1)
            else:
                xi = ContextDistribution.uniform(feats.n_contexts)
            return SparseLinearEnv(feats, xi, _support(p, feats.d), int(p["s"]), _noise(p), name="sparse_file")
        if kind == "random_graph":
            rng = np.random.default_rng(int(p.get("seed", 0)))
            return random_graph_env(rng, int(p.get("k", 6)), int(p.get("M", 2)), int(p.get("n_atoms", 6)),
                                    str(p.get("graph_kind", "strong")), _noise(p), float(p.get("scale", 1.0)))
        if kind == "random_sparse":
            rng = np.random.default_rng(int(p.get("seed", 0)))
            return random_sparse_env(rng, int(p.get("M", 2)), int(p.get("k", 4)), int(p.get("d", 6)),
                                     int(p.get("s", 2)), int(p.get("n_atoms", 6)), _noise(p))
    except KeyError as exc:
        raise ConfigError(f"environment {kind!r} is missing parameter {exc}") from exc
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot build environment {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown environment kind {kind!r}; expected one of {ENV_KINDS}")


def resolve_ir(agent: AgentSpec, env: Environment, horizon: int) -> IRConfig:
    """Replace an ``alpha: auto`` setting by ``2 R_max / sqrt(n)``."""
    if not agent.alpha_auto:
        return agent.ir
    return replace(agent.ir, alpha=2.0 * r_max(env) / np.sqrt(horizon))


def explore_policy(env: Environment, how: str) -> Policy:
    if how == "uniform":
        return Policy.uniform(env)
    if how == "explorability":
        if not isinstance(env, GraphBanditEnv):
            raise ConfigError("the explorability policy needs a graph environment")
        _, rows = explorability_graph(env.graph, env.contexts, env.xi)
        return Policy(tuple(rows))
    raise ConfigError(f"unknown explore policy {how!r}")


def resolve_agent(agent: AgentSpec, env: Environment, horizon: int) -> tuple[AgentKind, IRConfig]:
    explore = explore_policy(env, agent.explore) if agent.tag == "ts_mixture" else None
    kind = AgentKind(agent.tag, w=agent.w, epsilon=agent.epsilon, explore_policy=explore)
    return kind, resolve_ir(agent, env, horizon)


def _agent(raw: dict) -> AgentSpec:
    if "name" not in raw or "kind" not in raw:
        raise ConfigError("every agent needs 'name' and 'kind'")
    tag = raw["kind"]
    if tag not in AGENT_TAGS:
        raise ConfigError(f"unknown agent kind {tag!r}")
    alpha = raw.get("alpha", 0.0)
    auto = alpha == "auto"
    try:
        ir = IRConfig(alpha=0.0 if auto else float(alpha), lam=int(raw.get("lambda", 2)),
                      fw_max_iters=int(raw.get("fw_max_iters", 500)), fw_tol=float(raw.get("fw_tol", 1e-7)),
                      info_floor=float(raw.get("info_floor", 1e-12)))
        spec = AgentSpec(str(raw["name"]), tag, ir, auto, int(raw.get("w", 1)),
                         float(raw.get("epsilon", 0.0)), str(raw.get("explore", "uniform")))
        # validates w and epsilon without the environment-dependent explore policy
        AgentKind(tag, w=spec.w, epsilon=spec.epsilon if tag != "ts_mixture" else 0.0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"agent {raw.get('name')!r}: {exc}") from exc
    if not 0.0 <= spec.epsilon <= 1.0:
        raise ConfigError(f"agent {spec.name!r}: epsilon must lie in [0, 1]")
    if spec.explore not in ("uniform", "explorability"):
        raise ConfigError(f"agent {spec.name!r}: unknown explore policy {spec.explore!r}")
    return spec


def parse_config(raw: dict[str, Any], base_dir: str = ".") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    env_raw = raw.get("env")
    if not isinstance(env_raw, dict) or "kind" not in env_raw:
        raise ConfigError("'env' must be a mapping with a 'kind'")
    if env_raw["kind"] not in ENV_KINDS:
        raise ConfigError(f"unknown environment kind {env_raw['kind']!r}")
    env = EnvSpec(env_raw["kind"], dict(env_raw.get("params") or {}), base_dir)
    agents_raw = raw.get("agents")
    if not isinstance(agents_raw, list) or not agents_raw:
        raise ConfigError("'agents' must be a nonempty list")
    agents = [_agent(a) for a in agents_raw]
    seeds = raw.get("seeds")
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("'seeds' must be a list of integers or a count")
    est = dict(raw.get("estimator") or {})
    try:
        ig = InfoGainConfig(**est)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"estimator: {exc}") from exc
    try:
        horizon = int(raw["horizon"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("'horizon' must be an integer") from exc
    out = raw.get("output_dir")
    cfg = ExperimentConfig(env, tuple(agents), horizon, tuple(seeds), ig,
                           None if out is None else _resolve(base_dir, str(out)),
                           bool(raw.get("bound_overlays", False)),
                           int(raw.get("workers", 1)), version)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    return parse_config(raw, str(Path(path).resolve().parent))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Plain-data echo of a config (written next to the outputs)."""
    return {
        "schema_version": cfg.schema_version,
        "env": {"kind": cfg.env.kind, "params": cfg.env.params},
        "agents": [{"name": a.name, "kind": a.tag, "alpha": "auto" if a.alpha_auto else a.ir.alpha,
                    "lambda": a.ir.lam, "w": a.w, "epsilon": a.epsilon, "explore": a.explore}
                   for a in cfg.agents],
        "horizon": cfg.horizon,
        "seeds": list(cfg.seeds),
        "estimator": {"estimator": cfg.estimator.estimator, "quadrature_nodes": cfg.estimator.quadrature_nodes,
                      "mc_samples": cfg.estimator.mc_samples, "floor": cfg.estimator.floor,
                      "target": cfg.estimator.target, "mc_seed": cfg.estimator.mc_seed},
        "bound_overlays": cfg.bound_overlays,
        "workers": cfg.workers,
    }
