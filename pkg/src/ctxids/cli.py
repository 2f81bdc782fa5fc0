"""Command-line entry point: run, metrics, design, oracle, audit."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_AUDIT = 0, 1, 2, 3

log = logging.getLogger("ctxids")


def _cmd_run(args) -> int:
    from .harness.config import load_config
    from .harness.runner import run_experiment
    cfg = load_config(args.config)
    if args.out:
        from dataclasses import replace
        cfg = replace(cfg, output_dir=args.out)
    if cfg.output_dir is None:
        raise _ConfigProblem("no output directory: pass --out or set output_dir")
    res = run_experiment(cfg, workers=args.workers)
    final = {}
    for agent, t, mean, std, n_seeds in res.summary:
        if t == cfg.horizon:
            final[agent] = (mean, std, n_seeds)
    for agent, (mean, std, n_seeds) in final.items():
        print(f"{agent}: mean cumulative regret {float(mean):.4f} (std {float(std):.4f}, {n_seeds} seeds)")
    print(f"outputs written to {cfg.output_dir}")
    if res.failures:
        for cell, msg in res.failures.items():
            print(f"failed: {cell}: {msg}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_metrics(args) -> int:
    from .core import ContextDistribution
    from .graphenv import graph_metrics, read_graph, read_xi
    g = read_graph(args.graph)
    if args.xi:
        contexts, xi = read_xi(args.xi, g.k)
    else:
        contexts, xi = [np.arange(g.k)], ContextDistribution.uniform(1)
    gm = graph_metrics(g, contexts, xi)
    out = {"k": g.k, "beta": gm.beta, "delta": gm.delta, "graph_class": gm.observability.graph_class,
           "observability": list(gm.observability.labels), "vartheta": gm.vartheta,
           "witness": [r.tolist() for r in gm.witness]}
    print(json.dumps(out, indent=1))
    return EXIT_OK


def _cmd_design(args) -> int:
    from .core import ContextDistribution
    from .graphenv import read_xi
    from .sparseenv import c_min, read_features
    feats = read_features(args.features)
    if args.xi:
        _, xi = read_xi(args.xi, 1)
        if xi.n_contexts != feats.n_contexts:
            raise _ConfigProblem("context distribution and feature file disagree on the number of contexts")
    else:
        xi = ContextDistribution.uniform(feats.n_contexts)
    res = c_min(feats, xi, max_iters=args.max_iters, tol=args.tol)
    out = {"c_min": res.value, "certificate_gap": res.certificate_gap, "iterations": res.iterations,
           "rank_deficient": res.rank_deficient, "witness": [list(map(float, r)) for r in res.witness.rows]}
    print(json.dumps(out, indent=1))
    return EXIT_OK


def _cmd_oracle(args) -> int:
    """Cross-check both minimizers against the grid search at the prior of the configured environment."""
    from .harness.config import build_env, load_config, resolve_agent
    from .harness.oracle import GridTooLargeError, grid_size, oracle_gridsearch_mir
    from .ids import all_regrets, minimize_cir, minimize_mir, policy_gains, realized_ratio
    from .infogain import cond_info_gain
    cfg = load_config(args.config)
    env = build_env(cfg.env, cfg.horizon)
    post = env.support.prior()
    deltas = all_regrets(post, env)
    gains = policy_gains(post, env, cfg.estimator, np.random.default_rng([0, 4]))
    sizes = [d.size for d in deltas]
    steps = int(round(1 / args.resolution))
    while steps > 1 and grid_size(sizes, steps) > args.max_points:
        steps //= 2
    bad = 0
    for spec in cfg.agents:
        _, ir = resolve_agent(spec, env, cfg.horizon)
        try:
            grid = oracle_gridsearch_mir(deltas, gains, env.xi, ir.alpha, ir.lam, 1.0 / steps, args.max_points)
        except GridTooLargeError as exc:
            print(f"{spec.name}: skipped ({exc})")
            continue
        pol = minimize_mir(deltas, gains, env.xi, ir)
        val = realized_ratio(pol, deltas, gains, env.xi, ir)
        ok = val <= grid.value + args.tol
        bad += not ok
        print(f"{spec.name}: MIR minimizer {val:.8g}, grid ({grid.points} points) {grid.value:.8g}: "
              f"{'ok' if ok else 'WORSE THAN GRID'}")
        for m in range(env.n_contexts):
            g = cond_info_gain(post, m, env, cfg.estimator, np.random.default_rng([0, 4, m]))
            cgrid = oracle_gridsearch_mir([deltas[m]], [g], [1.0], ir.alpha, ir.lam, 1.0 / steps, args.max_points)
            row = minimize_cir(deltas[m], g, ir)
            cval = realized_ratio(row, deltas[m], g, None, ir)
            cok = cval <= cgrid.value + args.tol
            bad += not cok
            print(f"  context {m}: CIR minimizer {cval:.8g}, grid {cgrid.value:.8g}: "
                  f"{'ok' if cok else 'WORSE THAN GRID'}")
    return EXIT_OK if bad == 0 else EXIT_AUDIT


def _cmd_audit(args) -> int:
    from .harness.audit import audit_lemmas
    from .harness.runner import read_trajectory
    trajs = [read_trajectory(p) for p in args.trajectory]
    metrics = trajs[0]["sidecar"].get("env_metrics")
    if args.metrics:
        metrics = json.loads(Path(args.metrics).read_text())
    if not metrics:
        raise _ConfigProblem("no environment metrics: the trajectory has no sidecar; pass --metrics")
    report = audit_lemmas(trajs, metrics, n=args.n)
    for line in report.lines():
        print(line)
    if args.json:
        Path(args.json).write_text(json.dumps(report.to_dict(), indent=1))
    return EXIT_OK if report.ok else EXIT_AUDIT


class _ConfigProblem(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctxids", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    m = sub.add_parser("metrics", help="graph metrics for a graph file")
    m.add_argument("--graph", required=True)
    m.add_argument("--xi")
    d = sub.add_parser("design", help="C_min and its witness policy for a feature file")
    d.add_argument("--features", required=True)
    d.add_argument("--xi")
    d.add_argument("--max-iters", type=int, default=2000)
    d.add_argument("--tol", type=float, default=1e-9)
    o = sub.add_parser("oracle", help="grid-search cross-checks at the prior")
    o.add_argument("--config", required=True)
    o.add_argument("--resolution", type=float, default=0.02)
    o.add_argument("--max-points", type=int, default=2_000_000)
    o.add_argument("--tol", type=float, default=1e-5)
    a = sub.add_parser("audit", help="lemma checks on trajectory files")
    a.add_argument("--trajectory", required=True, nargs="+")
    a.add_argument("--metrics")
    a.add_argument("--n", type=int)
    a.add_argument("--json")
    return p


def main(argv=None) -> int:
    from .harness.config import ConfigError
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "metrics": _cmd_metrics, "design": _cmd_design,
                "oracle": _cmd_oracle, "audit": _cmd_audit}
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return handlers[args.command](args)
    except (ConfigError, _ConfigProblem, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # malformed input files surface as ValueError from the readers
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - mapped to the runtime exit code
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
