"""Environment metrics and numerical audits of the information-ratio and information-gain lemmas."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import Environment, r_max
from ..graphenv import GraphBanditEnv, graph_metrics
from ..ids import IRConfig, minimize_mir, realized_ratio
from ..infogain import policy_entropy
from ..sparseenv import SparseLinearEnv, c_min, lemma4_bounds

# relative slack on ratio comparisons (solver and estimator rounding)
RATIO_RTOL = 1e-9
GAIN_TOL = 1e-6


def env_metrics(env: Environment, horizon: int | None = None) -> dict:
    """Plain-data summary of the quantities the bounds and audits need."""
    k = max(len(c) for c in env.contexts)
    out = {"name": env.name, "M": env.n_contexts, "k": int(env.n_actions), "k_context": int(k),
           "r_max": float(r_max(env)), "prior_policy_entropy": float(policy_entropy(env.support.prior(), env)),
           "n": horizon}
    if isinstance(env, GraphBanditEnv):
        gm = graph_metrics(env.graph, env.contexts, env.xi)
        out.update(kind="graph", beta=gm.beta, delta=gm.delta, vartheta=float(gm.vartheta),
                   graph_class=gm.observability.graph_class,
                   observability=list(gm.observability.labels))
    elif isinstance(env, SparseLinearEnv):
        res = c_min(env.features, env.xi)
        squared, cubic = lemma4_bounds(env, res.value)
        out.update(kind="sparse", d=int(env.d), s=int(env.s), c_min=float(res.value),
                   c_min_gap=float(res.certificate_gap), lemma4_squared=squared,
                   lemma4_cubic=None if not np.isfinite(cubic) else cubic)
    else:
        out["kind"] = "generic"
    return out


# -- bound formulas ---------------------------------------------------------

def lemma1_bound(rmax: float, beta: int, k: int, eps: float) -> float:
    """4(R^2+1)/(1-eps) * beta * log(4k^2/(beta eps))."""
    if not 0 < eps < 1:
        return float("inf")
    return 4 * (rmax ** 2 + 1) / (1 - eps) * beta * np.log(4 * k ** 2 / (beta * eps))


def lemma2_bound(rmax: float, vartheta: float) -> float:
    """(R^3 + R)/vartheta."""
    return (rmax ** 3 + rmax) / vartheta if vartheta > 0 else float("inf")


def lemma3_bound(M: int, k: int, prior_entropy: float) -> float:
    return min(M * np.log(k), prior_entropy)


def lemma5_bound(d: int, s: int, n: int) -> float:
    """2 s log(d sqrt(n)/s)."""
    return 2 * s * np.log(d * np.sqrt(n) / s)


# -- audit ------------------------------------------------------------------

@dataclass
class AuditCheck:
    name: str
    scope: str  # "round" or "cumulative"
    checked: int
    violations: int
    worst_margin: float  # min over checked items of bound - value (negative means violated)
    worst_round: int | None = None
    note: str = ""
    advisory: bool = False  # reported but not counted: a single path cannot violate an expectation bound


@dataclass
class AuditReport:
    checks: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return sum(c.violations for c in self.checks if not c.advisory)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {"violations": self.violations, "checks": [asdict(c) for c in self.checks]}

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "ok" if c.violations == 0 else ("exceeded (advisory)" if c.advisory else "VIOLATED")
            where = "" if c.worst_round is None else f" (worst at round {c.worst_round})"
            out.append(f"{c.name}: {status}, {c.violations}/{c.checked} violations, "
                       f"worst margin {c.worst_margin:.6g}{where}{'; ' + c.note if c.note else ''}")
        return out


def _round_check(name: str, values: np.ndarray, bound: float, mask: np.ndarray, note: str = "") -> AuditCheck:
    vals = values[mask]
    rounds = np.flatnonzero(mask) + 1
    if vals.size == 0:
        return AuditCheck(name, "round", 0, 0, float("inf"), None, note or "no applicable rounds")
    slack = RATIO_RTOL * max(1.0, abs(bound))
    margin = bound - vals
    bad = margin < -slack
    worst = int(np.argmin(margin))
    return AuditCheck(name, "round", int(vals.size), int(bad.sum()), float(margin[worst]),
                      int(rounds[worst]), note)


def _cum_check(name: str, paths: np.ndarray, bound: float, tol: float, note: str = "") -> AuditCheck:
    """Mean cumulative gain against an expectation bound, allowing 3 standard errors of the mean.

    With one trajectory there is no standard error and the check is advisory.
    """
    n_paths = paths.shape[0]
    cum = paths.mean(axis=0)
    se = paths.std(axis=0, ddof=1) / np.sqrt(n_paths) if n_paths > 1 else np.zeros(cum.size)
    margin = bound - cum
    bad = margin < -(tol + 3 * se)
    worst = int(np.argmin(margin))
    note = f"{note}, mean of {n_paths} trajectories" + ("" if n_paths > 1 else ", single path")
    return AuditCheck(name, "cumulative", int(cum.size), int(bad.sum()), float(margin[worst]), worst + 1, note,
                      advisory=n_paths == 1)


def _as_traj(rec) -> dict:
    """Accept a TrajectoryRecord or the dict returned by ``read_trajectory``."""
    if isinstance(rec, dict):
        side = rec.get("sidecar", {})
        pg = side.get("policy_gain")
        return {"info_ratio": np.asarray(rec["info_ratio"], dtype=float),
                "info_gain": np.asarray(rec["info_gain"], dtype=float),
                "policy_gain": None if pg is None else np.asarray(pg, dtype=float),
                "meta": side.get("meta", {})}
    return {"info_ratio": rec.info_ratio, "info_gain": rec.info_gain, "policy_gain": rec.policy_gain,
            "meta": rec.meta}


def _cum_gain(t: dict) -> np.ndarray:
    # the policy-averaged gain is the lemma's summand; the played-action gain has the same mean
    kind = t["meta"].get("kind")
    use_policy = t["policy_gain"] is not None and kind in ("contextual_ids", "sampled_contextual_ids",
                                                           "thompson", "uniform", "ts_mixture")
    return np.cumsum(t["policy_gain"] if use_policy else t["info_gain"])


def audit_lemmas(records, metrics: dict, n: int | None = None, gain_tol: float = GAIN_TOL) -> AuditReport:
    """Check logged ratios and gains against the lemma bounds.

    Ratio bounds are checked on every round of every trajectory produced by a
    contextual IDS agent whose (alpha, lambda) matches the lemma.  Cumulative
    gain bounds hold in expectation, so they are checked on the mean over the
    given trajectories with a 3-standard-error allowance; with a single
    trajectory they are advisory.
    """
    if not isinstance(records, (list, tuple)):
        records = [records]
    trajs = [_as_traj(r) for r in records]
    report = AuditReport()
    if not trajs:
        return report
    n = n or metrics.get("n") or trajs[0]["info_ratio"].size
    eps = 1.0 / np.sqrt(n)
    rmax = float(metrics["r_max"])
    kind = metrics.get("kind")
    ratios, lam2, lam3 = [], [], []
    for t in trajs:
        meta = t["meta"]
        ctx = meta.get("kind") == "contextual_ids"
        alpha = float(meta.get("alpha", 0.0))
        lam = int(meta.get("lambda", 2))
        ok_alpha = alpha >= 2 * eps * rmax * (1 - 1e-12)
        ratios.append(t["info_ratio"])
        lam2.append(np.full(t["info_ratio"].size, ctx and lam == 2 and ok_alpha))
        lam3.append(np.full(t["info_ratio"].size, ctx and lam == 3 and ok_alpha))
    ratios = np.concatenate(ratios)
    lam2, lam3 = np.concatenate(lam2), np.concatenate(lam3)
    if kind == "graph":
        if metrics.get("graph_class") == "strongly_observable" and metrics.get("beta") is not None:
            b = lemma1_bound(rmax, metrics["beta"], metrics["k"], eps)
            report.checks.append(_round_check("lemma1_squared_ratio", ratios, b, lam2,
                                              f"bound {b:.6g}, eps = {eps:.6g}"))
        if metrics.get("graph_class") == "weakly_observable":
            b = lemma2_bound(rmax, metrics["vartheta"])
            report.checks.append(_round_check("lemma2_cubic_ratio", ratios, b, lam3, f"bound {b:.6g}"))
    if kind == "sparse":
        b = (rmax ** 2 + 1) * metrics["d"] / 2
        # the alpha = 0 bound also caps every alpha >= 0 minimizer
        mask = np.concatenate([np.full(t["info_ratio"].size, t["meta"].get("kind") == "contextual_ids"
                                       and int(t["meta"].get("lambda", 2)) == 2) for t in trajs])
        report.checks.append(_round_check("lemma4_squared_ratio", ratios, b, mask, f"bound {b:.6g}"))
    lengths = {t["info_gain"].size for t in trajs}
    if len(lengths) == 1:
        paths = np.vstack([_cum_gain(t) for t in trajs])
        b3 = lemma3_bound(metrics["M"], metrics["k_context"], metrics["prior_policy_entropy"])
        report.checks.append(_cum_check("lemma3_cumulative_gain", paths, b3, 5 * gain_tol, f"bound {b3:.6g}"))
        if kind == "sparse":
            b5 = lemma5_bound(metrics["d"], metrics["s"], n)
            report.checks.append(_cum_check("lemma5_cumulative_gain", paths, b5, 5 * gain_tol, f"bound {b5:.6g}"))
    return report


def adaptivity_check(deltas, gains, xi, alpha: float = 0.0, lams=(2, 3)) -> dict:
    """Slack of (D(pi_2) - alpha)_+ <= 2^(1-2/lam) G(pi_2)^(1/lam) Psi_lam(q_lam)^(1/lam).

    ``pi_2`` minimizes the lambda = 2 ratio and ``q_lam`` the lambda ratio.
    Returns ``{lam: rhs - lhs}``; a negative entry means the inequality failed.
    """
    p = np.asarray(getattr(xi, "probs", xi), dtype=float)
    pi2 = minimize_mir(deltas, gains, p, IRConfig(alpha=alpha, lam=2))
    D = sum(p[m] * float(deltas[m] @ pi2[m]) for m in range(p.size))
    G = sum(p[m] * float(gains[m] @ pi2[m]) for m in range(p.size))
    lhs = max(D - alpha, 0.0)
    out = {}
    for lam in lams:
        cfg = IRConfig(alpha=alpha, lam=lam)
        q = minimize_mir(deltas, gains, p, cfg)
        psi = realized_ratio(q, deltas, gains, p, cfg)
        if not np.isfinite(psi):
            out[lam] = float("inf")
            continue
        out[lam] = 2 ** (1 - 2 / lam) * G ** (1 / lam) * psi ** (1 / lam) - lhs
    return out
