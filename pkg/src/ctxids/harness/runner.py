"""Seeded simulation of one agent, and multi-seed experiments with persisted outputs."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import Environment, Policy, posterior_update, regret_vector
from ..ids import AgentKind, IRConfig, decide, realized_ratio, ts_policy
from ..infogain import (LOG_BASE, InfoGainConfig, action_gain, marg_info_gain, param_info_gain,
                       policy_entropy)

log = logging.getLogger(__name__)

# fixed labels for the per-seed random streams
CONTEXT_STREAM, NOISE_STREAM, AGENT_STREAM, ESTIMATOR_STREAM, PRIOR_STREAM = 1, 2, 3, 4, 5

CSV_COLUMNS = ("t", "seed", "agent", "context", "action", "reward", "instant_regret", "cum_regret",
               "info_gain", "cum_info_gain", "info_ratio")
SUMMARY_COLUMNS = ("agent", "t", "mean_cum_regret", "std_cum_regret", "n_seeds")


class EpisodeError(RuntimeError):
    """Failure inside an episode, tagged with the round where it happened."""

    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"round {round_index}: {type(cause).__name__}: {cause}")
        self.round_index = round_index


def streams(seed: int) -> dict[str, np.random.Generator]:
    return {name: np.random.default_rng([seed, label]) for name, label in
            (("context", CONTEXT_STREAM), ("noise", NOISE_STREAM), ("agent", AGENT_STREAM),
             ("estimator", ESTIMATOR_STREAM), ("prior", PRIOR_STREAM))}


@dataclass(eq=False)
class TrajectoryRecord:
    """Per-round log of one episode.

    ``instant_regret`` is the posterior-expected regret of the played action;
    ``true_regret`` uses the sampled true parameter.  ``info_gain`` is the gain
    about the optimal policy of the observation actually received (or the
    parameter, when that is the configured target).
    """

    agent: str
    seed: int
    true_atom: int
    context: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    instant_regret: np.ndarray
    true_regret: np.ndarray
    info_gain: np.ndarray
    info_ratio: np.ndarray
    policy_gain: np.ndarray
    entropy: np.ndarray
    exhausted: np.ndarray
    revealed: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.context.size)

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.instant_regret)

    @property
    def cum_info_gain(self) -> np.ndarray:
        return np.cumsum(self.info_gain)

    def rows(self):
        cr, cg = self.cum_regret, self.cum_info_gain
        for t in range(self.n):
            yield (t + 1, self.seed, self.agent, int(self.context[t]), int(self.action[t]),
                   _fmt(self.reward[t]), _fmt(self.instant_regret[t]), _fmt(cr[t]),
                   _fmt(self.info_gain[t]), _fmt(cg[t]), _fmt(self.info_ratio[t]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.rows())
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {"agent": self.agent, "seed": self.seed, "true_atom": self.true_atom, "log_base": LOG_BASE,
                "policy_gain": [float(x) for x in self.policy_gain],
                "entropy": [float(x) for x in self.entropy],
                "true_regret": [float(x) for x in self.true_regret],
                "exhausted": [bool(x) for x in self.exhausted],
                "meta": self.meta}


def _fmt(x: float) -> str:
    x = float(x)
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _policy_for_logging(kind: AgentKind, post, env, decision) -> Policy | None:
    if decision.policy is not None:
        return decision.policy
    if kind.tag == "thompson":
        return ts_policy(post, env)
    if kind.tag == "uniform":
        return Policy.uniform(env)
    if kind.tag == "ts_mixture":
        ts = ts_policy(post, env)
        if kind.explore_policy is None or kind.epsilon == 0:
            return ts
        return Policy(tuple((1 - kind.epsilon) * ts[m] + kind.epsilon * kind.explore_policy[m]
                            for m in range(env.n_contexts)))
    return None


def run_episode(env: Environment, agent: AgentKind, n: int, seed: int,
                ir_cfg: IRConfig | None = None, ig_cfg: InfoGainConfig | None = None,
                name: str | None = None, true_atom: int | None = None,
                diagnostics: bool = False) -> TrajectoryRecord:
    """Simulate ``n`` rounds; the result depends only on the arguments.

    The context, noise, agent, estimator and true-parameter draws come from
    separate streams keyed by ``seed``.  A full noise vector is drawn every
    round, so the noise seen by an action does not depend on the agent.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    ir_cfg = ir_cfg or IRConfig()
    ig_cfg = ig_cfg or InfoGainConfig()
    rs = streams(seed)
    if true_atom is None:
        true_atom = env.support.prior().sample_atom(rs["prior"])
    true_means = env.means[true_atom]
    post = env.support.prior()
    gain_fn = param_info_gain if ig_cfg.target == "parameter" else marg_info_gain
    cols = {k: np.zeros(n) for k in ("reward", "instant_regret", "true_regret", "info_gain",
                                     "info_ratio", "policy_gain", "entropy")}
    context = np.zeros(n, dtype=int)
    action = np.zeros(n, dtype=int)
    exhausted = np.zeros(n, dtype=bool)
    revealed, diag = [], []
    for t in range(n):
        try:
            s = env.xi.sample(rs["context"])
            noise = rs["noise"].standard_normal(env.noise_dim)
            cols["entropy"][t] = policy_entropy(post, env)
            dec = decide(agent, post, env, s, ir_cfg, rs["agent"], ig_cfg, rs["estimator"])
            j = env.local_index(s, dec.action)
            if agent.tag == "conditional_ids":
                # no policy over all contexts: log the played action's own marginal gain
                delta = dec.deltas[0]
                cols["info_ratio"][t] = dec.ratio
                cols["instant_regret"][t] = delta[j]
                cols["info_gain"][t] = action_gain(post, env, dec.action, ig_cfg, rs["estimator"])
                pol = gains = deltas = None
            else:
                if dec.policy is not None:
                    gains, deltas = dec.gains, dec.deltas
                else:
                    vec = gain_fn(post, env, ig_cfg, rs["estimator"])
                    gains = [vec[c] for c in env.contexts]
                    deltas = [regret_vector(post, m, env) for m in range(env.n_contexts)]
                pol = _policy_for_logging(agent, post, env, dec)
                cols["info_ratio"][t] = realized_ratio(pol, deltas, gains, env.xi, ir_cfg)
                cols["policy_gain"][t] = sum(env.xi.probs[m] * float(gains[m] @ pol[m])
                                             for m in range(env.n_contexts))
                cols["instant_regret"][t] = deltas[s][j]
                cols["info_gain"][t] = gains[s][j]
            table = true_means[env.contexts[s]]
            cols["true_regret"][t] = table.max() - true_means[dec.action]
            obs = env.observe(dec.action, true_means, noise)
            cols["reward"][t] = true_means[dec.action] + (0.0 if env.noise.noiseless
                                                          else env.noise.std * noise[dec.action])
            context[t], action[t], exhausted[t] = s, dec.action, dec.exhausted
            revealed.append(obs.revealed)
            if diagnostics:
                diag.append({"deltas": deltas, "gains": gains, "policy": pol, "row": dec.row})
            post = posterior_update(post, s, obs, env)
        except Exception as exc:  # noqa: BLE001 - re-raised with the round attached
            raise EpisodeError(t + 1, exc) from exc
    meta = {"alpha": ir_cfg.alpha, "lambda": ir_cfg.lam, "kind": agent.tag, "n": n}
    return TrajectoryRecord(name or agent.tag, seed, int(true_atom), context, action, cols["reward"],
                            cols["instant_regret"], cols["true_regret"], cols["info_gain"],
                            cols["info_ratio"], cols["policy_gain"], cols["entropy"], exhausted,
                            revealed, meta, diag)


# -- experiments ------------------------------------------------------------

@dataclass(eq=False)
class ExperimentResult:
    records: dict
    summary: list
    failures: dict
    metrics: dict
    bounds: dict | None = None


def _run_cell(cfg, agent_index: int, seed: int) -> TrajectoryRecord:
    from .config import build_env, resolve_agent
    env = build_env(cfg.env, cfg.horizon)
    spec = cfg.agents[agent_index]
    kind, ir = resolve_agent(spec, env, cfg.horizon)
    rec = run_episode(env, kind, cfg.horizon, seed, ir, cfg.estimator, name=spec.name)
    rec.revealed = []
    return rec


def _safe_cell(args):
    cfg, i, seed = args
    try:
        return ("ok", _run_cell(cfg, i, seed))
    except Exception as exc:  # noqa: BLE001 - recorded per cell, the run continues
        return ("error", f"{type(exc).__name__}: {exc}")


def summarize(records: dict, agents, seeds) -> list[tuple]:
    """Mean and std of cumulative regret per (agent, t), folded in (agent, seed) order."""
    rows = []
    for name in agents:
        curves = [records[(name, s)].cum_regret for s in seeds if (name, s) in records]
        if not curves:
            continue
        mat = np.vstack(curves)
        mean = mat.mean(axis=0)
        std = mat.std(axis=0, ddof=1) if mat.shape[0] > 1 else np.zeros(mat.shape[1])
        for t in range(mat.shape[1]):
            rows.append((name, t + 1, _fmt(mean[t]), _fmt(std[t]), mat.shape[0]))
    return rows


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_experiment(cfg, workers: int | None = None, write: bool = True) -> ExperimentResult:
    """Run every (agent, seed) cell, aggregate, and write outputs under ``cfg.output_dir``."""
    from .audit import env_metrics
    from .bounds import bound_overlays
    workers = cfg.workers if workers is None else workers
    cells = [(cfg, i, s) for i in range(len(cfg.agents)) for s in cfg.seeds]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_safe_cell, cells))
    else:
        outcomes = [_safe_cell(c) for c in cells]
    records, failures = {}, {}
    for (c, i, s), (status, value) in zip(cells, outcomes):
        key = (cfg.agents[i].name, s)
        if status == "ok":
            records[key] = value
        else:
            failures[f"{key[0]}/seed{s}"] = value
            log.error("cell %s seed %s failed: %s", key[0], s, value)
    names = [a.name for a in cfg.agents]
    summary = summarize(records, names, cfg.seeds)
    from .config import build_env
    metrics = env_metrics(build_env(cfg.env, cfg.horizon), cfg.horizon)
    bounds = None
    if cfg.bound_overlays:
        bounds = bound_overlays(cfg.horizon, metrics)
    result = ExperimentResult(records, summary, failures, metrics, bounds)
    if write and cfg.output_dir:
        write_outputs(cfg, result)
    return result


def write_outputs(cfg, result: ExperimentResult) -> None:
    from .config import config_to_dict
    out = Path(cfg.output_dir)
    traj = out / "trajectories"
    traj.mkdir(parents=True, exist_ok=True)
    for (name, seed), rec in result.records.items():
        stem = f"{name}_seed{seed}"
        (traj / f"{stem}.csv").write_text(rec.to_csv())
        side = rec.sidecar()
        side["env_metrics"] = result.metrics
        (traj / f"{stem}.metrics.json").write_text(json.dumps(side, indent=1, sort_keys=True))
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, result.summary)
    (out / "config.json").write_text(json.dumps(config_to_dict(cfg), indent=1, sort_keys=True))
    if result.failures:
        (out / "failures.json").write_text(json.dumps(result.failures, indent=1, sort_keys=True))
    if result.bounds is not None:
        cols = list(result.bounds["curves"].keys())
        rows = [[t] + [_fmt(result.bounds["curves"][c][i]) for c in cols]
                for i, t in enumerate(result.bounds["t"])]
        write_csv(out / "bounds.csv", ["t"] + cols, rows)


def read_trajectory(path) -> dict:
    """Load a trajectory CSV and its metrics sidecar (if present) into arrays."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trajectory")
    data = {c: np.array([float(r[c]) for r in rows]) for c in CSV_COLUMNS if c != "agent"}
    data["agent"] = rows[0]["agent"]
    side = path.with_name(path.name[:-4] + ".metrics.json") if path.suffix == ".csv" else None
    data["sidecar"] = json.loads(side.read_text()) if side is not None and side.exists() else {}
    return data
