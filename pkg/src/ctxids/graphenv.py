"""Contextual bandits with directed feedback graphs.

Playing action ``a`` reveals the noisy reward of every out-neighbour of ``a``
(``a`` itself only when it has a self-loop).  Rewards are ``f(m, a, theta) =
theta[a]``, so the parameter has one coordinate per vertex.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ContextDistribution, Environment, NoiseModel, ParamSupport
from .lp import simplex_max

BETA_CAP = 40
DELTA_CAP = 24


@dataclass(frozen=True, eq=False)
class FeedbackGraph:
    """``adjacency[i, j]`` is True iff playing ``i`` reveals the reward of ``j``."""

    k: int
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if self.k < 1 or adj.shape != (self.k, self.k):
            raise ValueError("adjacency must be a k x k matrix with k >= 1")
        adj = adj.copy()
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, k: int, edges) -> "FeedbackGraph":
        adj = np.zeros((k, k), dtype=bool)
        for i, j in edges:
            if not (0 <= i < k and 0 <= j < k):
                raise ValueError(f"edge ({i}, {j}) outside 0..{k - 1}")
            adj[i, j] = True
        return cls(k, adj)

    def out_neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def in_neighbors(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[:, j])

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]


class GraphBanditEnv(Environment):
    def __init__(self, graph: FeedbackGraph, contexts, xi: ContextDistribution,
                 support: ParamSupport, noise: NoiseModel | None = None,
                 name: str = "graph", meta: dict | None = None):
        self.graph = graph
        if support.dim != graph.k:
            raise ValueError("graph environments need one parameter coordinate per vertex")
        self._out = tuple(graph.out_neighbors(i) for i in range(graph.k))
        super().__init__(contexts, xi, support, noise, name, meta)

    @property
    def n_actions(self) -> int:
        return self.graph.k

    def mean_rewards(self, params: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(params, dtype=float))

    def revealed(self, action: int) -> np.ndarray:
        return self._out[action]


# -- graph metrics ----------------------------------------------------------

STRONG, WEAK, UNOBSERVABLE = "strong", "weak", "unobservable"


@dataclass(frozen=True)
class Observability:
    labels: tuple
    graph_class: str

    @property
    def weak_vertices(self) -> list[int]:
        return [i for i, lab in enumerate(self.labels) if lab == WEAK]


def classify_observability(g: FeedbackGraph) -> Observability:
    """Strong: self-loop, or in-edges from every other vertex; weak: observable otherwise."""
    labels = []
    adj = g.adjacency
    for i in range(g.k):
        inn = adj[:, i]
        if not inn.any():
            labels.append(UNOBSERVABLE)
        elif adj[i, i] or all(inn[j] for j in range(g.k) if j != i):
            labels.append(STRONG)
        else:
            labels.append(WEAK)
    if UNOBSERVABLE in labels:
        cls = "unobservable"
    elif WEAK in labels:
        cls = "weakly_observable"
    else:
        cls = "strongly_observable"
    return Observability(tuple(labels), cls)


def _conflict_masks(g: FeedbackGraph) -> list[int]:
    adj = g.adjacency | g.adjacency.T
    masks = []
    for i in range(g.k):
        row = adj[i].copy()
        row[i] = False
        masks.append(sum(1 << int(j) for j in np.flatnonzero(row)))
    return masks


def _clique_cover_bound(cand: int, nbr: list[int]) -> int:
    """Greedy cover of ``cand`` by cliques of the conflict graph; bounds any independent set."""
    count = 0
    while cand:
        v = (cand & -cand).bit_length() - 1
        clique_cands = cand & nbr[v]
        cand &= ~(1 << v)
        while clique_cands:
            u = (clique_cands & -clique_cands).bit_length() - 1
            cand &= ~(1 << u)
            clique_cands &= nbr[u]
        count += 1
    return count


def independence_number(g: FeedbackGraph, cap: int = BETA_CAP) -> int:
    """Largest set of vertices with no edge, in either direction, between two of them."""
    if g.k > cap:
        raise ValueError(f"k = {g.k} exceeds the exact-search cap {cap}; raise the cap to proceed")
    nbr = _conflict_masks(g)
    best = 0

    def search(cand: int, size: int) -> None:
        nonlocal best
        if cand == 0:
            best = max(best, size)
            return
        if size + _clique_cover_bound(cand, nbr) <= best:
            return
        # branch on the candidate with most conflicts inside the candidate set
        bits = [(bin(nbr[v] & cand).count("1"), v) for v in range(g.k) if cand >> v & 1]
        deg, v = max(bits)
        if deg == 0:
            best = max(best, size + bin(cand).count("1"))
            return
        search(cand & ~(1 << v) & ~nbr[v], size + 1)
        search(cand & ~(1 << v), size)

    search((1 << g.k) - 1, 0)
    return best


def weak_domination_number(g: FeedbackGraph, cap: int = DELTA_CAP) -> int | None:
    """Smallest vertex set whose out-neighbourhoods cover all weakly observable vertices."""
    if g.k > cap:
        raise ValueError(f"k = {g.k} exceeds the exact-search cap {cap}; raise the cap to proceed")
    weak = classify_observability(g).weak_vertices
    if not weak:
        return None
    coverers = {}
    for w in weak:
        c = g.in_neighbors(w)
        if c.size == 0:
            raise ValueError(f"weak vertex {w} has no in-neighbour")
        coverers[w] = [int(x) for x in c]
    cover = [sum(1 << weak.index(int(j)) for j in g.out_neighbors(i) if int(j) in weak)
             for i in range(g.k)]
    full = (1 << len(weak)) - 1
    best = len(weak)

    def search(covered: int, size: int) -> None:
        nonlocal best
        if covered == full:
            best = min(best, size)
            return
        if size + 1 >= best:
            return
        # branch on the uncovered vertex with the fewest coverers
        w = min((weak[i] for i in range(len(weak)) if not covered >> i & 1),
                key=lambda v: len(coverers[v]))
        for d in sorted(coverers[w], key=lambda x: -bin(cover[x] & ~covered).count("1")):
            search(covered | cover[d], size + 1)

    search(0, 0)
    return best


def explorability_graph(g: FeedbackGraph, contexts, xi: ContextDistribution) -> tuple[float, list[np.ndarray]]:
    """Max over policies of the least probability of observing any vertex.

    Returns the value and a witness policy (one row per context).
    """
    contexts = [np.asarray(c, dtype=int).ravel() for c in contexts]
    if any(c.size == 0 for c in contexts):
        raise ValueError("every context needs at least one action")
    p = xi.probs
    sizes = [c.size for c in contexts]
    nv = sum(sizes) + 1
    A, b = [], []
    for d in range(g.k):
        row = np.zeros(nv)
        row[-1] = 1.0
        off = 0
        for m, acts in enumerate(contexts):
            row[off:off + acts.size] = -p[m] * g.adjacency[acts, d]
            off += acts.size
        A.append(row)
        b.append(0.0)
    off = 0
    for acts in contexts:
        row = np.zeros(nv)
        row[off:off + acts.size] = 1.0
        A.append(row)
        b.append(1.0)
        off += acts.size
    c = np.zeros(nv)
    c[-1] = 1.0
    res = simplex_max(c, np.array(A), np.array(b))
    rows, off = [], 0
    for acts in contexts:
        r = res.x[off:off + acts.size].copy()
        off += acts.size
        # leftover mass only adds coverage, so the value is unchanged
        r[0] += max(0.0, 1.0 - r.sum())
        rows.append(r / r.sum())
    return float(min(max(res.value, 0.0), 1.0)), rows


def coverage(g: FeedbackGraph, contexts, xi: ContextDistribution, rows) -> np.ndarray:
    """Probability that each vertex is observed under the policy ``rows``."""
    out = np.zeros(g.k)
    for m, acts in enumerate(contexts):
        out += xi.probs[m] * (np.asarray(rows[m]) @ g.adjacency[np.asarray(acts, dtype=int)])
    return out


@dataclass(frozen=True, eq=False)
class GraphMetrics:
    beta: int | None
    delta: int | None
    observability: Observability
    vartheta: float
    witness: list


def graph_metrics(g: FeedbackGraph, contexts=None, xi: ContextDistribution | None = None,
                  beta_cap: int = BETA_CAP, delta_cap: int = DELTA_CAP) -> GraphMetrics:
    """All graph summaries; ``beta``/``delta`` are None when the graph exceeds a cap."""
    if contexts is None:
        contexts = [np.arange(g.k)]
    if xi is None:
        xi = ContextDistribution.uniform(len(contexts))
    beta = independence_number(g, beta_cap) if g.k <= beta_cap else None
    obs = classify_observability(g)
    delta = weak_domination_number(g, delta_cap) if g.k <= delta_cap else None
    vt, witness = explorability_graph(g, contexts, xi)
    return GraphMetrics(beta, delta, obs, vt, witness)


# -- instances --------------------------------------------------------------

def make_theorem2_instance(k: int, n: int, noise: NoiseModel | None = None) -> GraphBanditEnv:
    """Two contexts where only the revealing arm of context 0 carries information.

    Vertices 0..k-2 have self-loops, vertex k-1 reveals all of them.  Context 0
    offers {k-2, k-1}, context 1 offers {0, .., k-3}.  Atom ``i`` (for vertex
    ``i`` in 1..k-3) puts reward ``gamma`` on vertex ``i``; vertex k-1 pays
    ``gamma - 1`` and vertices 0 and k-2 pay 0.
    """
    if k < 5:
        raise ValueError("the construction needs k >= 5")
    if n < 1:
        raise ValueError("n must be positive")
    gamma = 0.5 * np.sqrt(k / n)
    edges = [(i, i) for i in range(k - 1)] + [(k - 1, j) for j in range(k - 1)]
    graph = FeedbackGraph.from_edges(k, edges)
    atoms = []
    for i in range(1, k - 2):
        theta = np.zeros(k)
        theta[i] = gamma
        theta[k - 1] = gamma - 1.0
        atoms.append(theta)
    support = ParamSupport.uniform(np.array(atoms))
    contexts = [np.array([k - 2, k - 1]), np.arange(k - 2)]
    return GraphBanditEnv(graph, contexts, ContextDistribution(np.array([0.5, 0.5])), support,
                          noise or NoiseModel(), name="theorem2",
                          meta={"k": k, "n": n, "gamma": gamma, "revealing_action": k - 1,
                                "safe_action": k - 2})


def make_example1(k: int) -> GraphBanditEnv:
    """Noiseless two-context instance with a costly revealing action in context 1.

    Labels 0..k-1 form context 0 (one of them pays 1, the others 0).  Context 1
    offers the revealing label ``k`` (pays -1, shows all of context 0) and the
    safe label ``k + 1`` (pays 0).
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    nv = k + 2
    edges = [(i, i) for i in range(k)] + [(k, j) for j in range(k)] + [(k + 1, k + 1)]
    graph = FeedbackGraph.from_edges(nv, edges)
    atoms = np.zeros((k, nv))
    atoms[np.arange(k), np.arange(k)] = 1.0
    atoms[:, k] = -1.0
    contexts = [np.arange(k), np.array([k, k + 1])]
    return GraphBanditEnv(graph, contexts, ContextDistribution.uniform(2), ParamSupport.uniform(atoms),
                          NoiseModel.exact(), name="example1",
                          meta={"k": k, "revealing_action": k, "safe_action": k + 1})


def make_example2(k: int, n: int, c_rev: float = 1.0, c_gap: float = 1.0,
                  noise: NoiseModel | None = None) -> GraphBanditEnv:
    """Noisy two-context instance where the free revealing action sits in the other context.

    Label 0 is context 0's only action and reveals context 1.  Context 1 offers
    labels 1..k-1 (one pays ``gap``, the rest 0) and the revealing label ``k``
    whose regret is ``c_rev * sqrt(k) * gap``, with ``gap = c_gap / sqrt(n)``.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    if not (c_rev > 0 and c_gap > 0):
        raise ValueError("c_rev and c_gap must be positive")
    gap = c_gap / np.sqrt(n)
    nv = k + 1
    ctx1 = list(range(1, k + 1))
    edges = [(0, j) for j in ctx1] + [(k, j) for j in ctx1] + [(i, i) for i in range(1, k)]
    graph = FeedbackGraph.from_edges(nv, edges)
    atoms = np.zeros((k - 1, nv))
    atoms[np.arange(k - 1), np.arange(1, k)] = gap
    atoms[:, k] = gap - c_rev * np.sqrt(k) * gap
    contexts = [np.array([0]), np.array(ctx1)]
    return GraphBanditEnv(graph, contexts, ContextDistribution.uniform(2), ParamSupport.uniform(atoms),
                          noise or NoiseModel(), name="example2",
                          meta={"k": k, "n": n, "c_rev": c_rev, "c_gap": c_gap, "gap": gap,
                                "revealing_action": k, "free_revealing_action": 0})


def random_graph(rng: np.random.Generator, k: int, kind: str = "strong",
                 edge_prob: float = 0.3, loop_prob: float = 0.5, max_tries: int = 1000) -> FeedbackGraph:
    """Random directed graph of the requested observability class.

    ``strong`` puts a self-loop on every vertex.  ``weak`` redraws until every
    vertex is observable and at least one is only weakly observable.
    """
    if kind == "strong":
        adj = rng.random((k, k)) < edge_prob
        np.fill_diagonal(adj, True)
        return FeedbackGraph(k, adj)
    if kind != "weak":
        raise ValueError(f"unknown graph kind {kind!r}")
    for _ in range(max_tries):
        adj = rng.random((k, k)) < edge_prob
        np.fill_diagonal(adj, rng.random(k) < loop_prob)
        g = FeedbackGraph(k, adj)
        if classify_observability(g).graph_class == "weakly_observable":
            return g
    raise RuntimeError("could not draw a weakly observable graph")


def random_contexts(rng: np.random.Generator, k: int, m: int, min_size: int = 2) -> list[np.ndarray]:
    """``m`` random action subsets whose union is every vertex."""
    while True:
        ctx = []
        for _ in range(m):
            size = int(rng.integers(min(min_size, k), k + 1))
            ctx.append(np.sort(rng.choice(k, size=size, replace=False)))
        if np.unique(np.concatenate(ctx)).size == k:
            return ctx


def random_graph_env(rng: np.random.Generator, k: int, m: int, n_atoms: int, kind: str = "strong",
                     noise: NoiseModel | None = None, scale: float = 1.0) -> GraphBanditEnv:
    """Random graph, contexts, Dirichlet context law and Gaussian atoms clipped to [-scale, scale]."""
    g = random_graph(rng, k, kind)
    contexts = random_contexts(rng, k, m)
    xi = ContextDistribution(rng.dirichlet(np.ones(m)))
    atoms = np.clip(rng.normal(0.0, 0.5 * scale, size=(n_atoms, k)), -scale, scale)
    prior = rng.dirichlet(np.ones(n_atoms))
    return GraphBanditEnv(g, contexts, xi, ParamSupport(atoms, prior), noise or NoiseModel(),
                          name=f"random_{kind}")


# -- file formats -----------------------------------------------------------

def _data_lines(path):
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def read_graph(path) -> FeedbackGraph:
    """First line ``k``, then ``i j`` per directed edge (zero-indexed); ``#`` starts a comment."""
    lines = list(_data_lines(path))
    if not lines:
        raise ValueError(f"{path}: empty graph file")
    k = int(lines[0])
    edges = []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: bad edge line {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return FeedbackGraph.from_edges(k, edges)


def write_graph(g: FeedbackGraph, path) -> None:
    lines = [str(g.k)] + [f"{i} {j}" for i, j in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_xi(path, k: int | None = None) -> tuple[list[np.ndarray], ContextDistribution]:
    """One context per line: ``prob a1 a2 ...``; omitted actions mean every label < k."""
    contexts, probs = [], []
    for line in _data_lines(path):
        parts = line.split()
        probs.append(float(parts[0]))
        if len(parts) > 1:
            contexts.append(np.array([int(a) for a in parts[1:]]))
        elif k is not None:
            contexts.append(np.arange(k))
        else:
            raise ValueError(f"{path}: context without actions and no k given")
    return contexts, ContextDistribution(np.array(probs))


def write_xi(contexts, xi: ContextDistribution, path) -> None:
    lines = [" ".join([repr(float(p))] + [str(int(a)) for a in c]) for p, c in zip(xi.probs, contexts)]
    Path(path).write_text("\n".join(lines) + "\n")
