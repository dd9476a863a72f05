"""The branched transport distance ``d_alpha`` between atomic measures."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import PreconditionError, SizeError
from ..exact_ot import solve_kantorovich, wasserstein
from ..geometry import AtomicMeasure
from .graph import BranchedGraph, gilbert_energy, graph_to_plan, net_terminals
from .optimize import batch_weiszfeld, harmonic_start, optimize_branch_points
from .topology import SteinerTopology, enumerate_topologies, tree_flow_masses

ENUMERATE_CAP = 6
SCREEN_MARGIN = 1e-3
SCREEN_KEEP = 8
TIE_RTOL = 1e-12


class DalphaResult(NamedTuple):
    value: float
    graph: BranchedGraph
    exact: bool
    stay: tuple[np.ndarray, np.ndarray]

    def plan(self):
        """A synchronized traffic plan realizing the optimal graph."""
        return graph_to_plan(self.graph, self.stay)


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise PreconditionError("alpha must lie in (0, 1]")


def _screen_and_polish(tops: list[SteinerTopology], terms, supply, alpha, tol,
                       keep: int = SCREEN_KEEP, margin: float = SCREEN_MARGIN, iters: int = 1000) -> tuple[float, BranchedGraph, int]:
    """Batch-screen topologies, then polish the most promising ones."""
    flows = [tree_flow_masses(t, supply) for t in tops]
    edges = np.stack([f[:, :2].astype(int) for f in flows])
    weights = np.stack([f[:, 2] for f in flows]) ** alpha
    n_free = tops[0].n_steiner
    x0 = np.stack([harmonic_start(terms, n_free, e) for e in edges])
    X, screened = batch_weiszfeld(terms, edges, weights, x0, iters=iters)
    order = np.argsort(screened, kind="stable")
    best = float(screened[order[0]])
    pick = [int(t) for r, t in enumerate(order) if r < keep or screened[t] <= best * (1 + margin)]
    results = []
    for t in pick:
        g = optimize_branch_points(tops[t], terms, supply, alpha, tol, x0=X[t])
        results.append((gilbert_energy(g, alpha), (tops[t].ident, t), g))
    low = min(r[0] for r in results)
    v, (_, t), g = min((r for r in results if r[0] <= low + TIE_RTOL * max(1.0, low)), key=lambda r: r[1])
    return v, g, t


def _edge_graph(terms, supply) -> BranchedGraph:
    src, dst = (0, 1) if supply[0] > 0 else (1, 0)
    return BranchedGraph(terms, supply, np.array([[src, dst]]), np.array([supply[src]]), 2)


def compute_dalpha(mu0: AtomicMeasure, mu1: AtomicMeasure, alpha: float, mode: str = "enumerate",
                   tol: float = 1e-10) -> DalphaResult:
    """Minimal Gilbert energy over transport networks from ``mu0`` to ``mu1``.

    ``enumerate`` tries every full Steiner topology on the terminals (at most
    six after merging shared points) and is exact up to the optimizer
    tolerance. ``heuristic`` returns an upper bound with ``exact=False``.
    """
    _check_alpha(alpha)
    if mode not in ("enumerate", "heuristic"):
        raise PreconditionError(f"unknown mode {mode!r}")
    terms, supply, stay_x, stay_m = net_terminals(mu0, mu1)
    stay = (stay_x, stay_m)
    n = len(terms)
    if n == 0:
        return DalphaResult(0.0, BranchedGraph.empty(mu0.dim), True, stay)
    if mode == "enumerate" and n > ENUMERATE_CAP:
        raise SizeError(f"{n} terminals exceed the enumeration cap of {ENUMERATE_CAP}; use mode='heuristic'")
    # Rebalance away rounding so tree fluxes are exact.
    supply = supply.copy()
    supply[np.argmax(np.abs(supply))] -= supply.sum()
    if n == 2:
        g = _edge_graph(terms, supply)
        return DalphaResult(gilbert_energy(g, alpha), g, True, stay)
    if mode == "enumerate":
        v, g, _ = _screen_and_polish(enumerate_topologies(n), terms, supply, alpha, tol)
        return DalphaResult(v, g, True, stay)
    v, g = _heuristic(terms, supply, alpha, tol)
    return DalphaResult(v, g, False, stay)


def dalpha_lower_bound(mu0: AtomicMeasure, mu1: AtomicMeasure, alpha: float) -> float:
    """``W_{1/alpha}(mu0, mu1)``, which never exceeds ``d_alpha``."""
    _check_alpha(alpha)
    return wasserstein(mu0, mu1, 1.0 / alpha)


# -- heuristic mode -----------------------------------------------------------

def _greedy_topology(terms: np.ndarray, supply: np.ndarray) -> SteinerTopology:
    """Agglomerative binary tree: repeatedly join the two closest cluster centroids."""
    n = len(terms)
    w = np.abs(supply)
    clusters = {i: (terms[i] * w[i], w[i]) for i in range(n)}
    children: dict[int, tuple[int, int]] = {}
    nxt = n
    while len(clusters) > 1:
        keys = sorted(clusters)
        cent = np.array([clusters[k][0] / clusters[k][1] for k in keys])
        dist = np.linalg.norm(cent[:, None] - cent[None, :], axis=2)
        dist[np.diag_indices(len(keys))] = np.inf
        a, b = np.unravel_index(int(np.argmin(dist)), dist.shape)
        ka, kb = keys[a], keys[b]
        clusters[nxt] = (clusters[ka][0] + clusters[kb][0], clusters[ka][1] + clusters[kb][1])
        del clusters[ka], clusters[kb]
        children[nxt] = (ka, kb)
        nxt += 1
    root = nxt - 1
    edges = [(p, c) for p, cs in children.items() if p != root for c in cs]
    edges.append(children[root])
    # internal ids n..2n-2 minus the root become Steiner ids n..2n-3
    relabel = {k: k for k in range(n)}
    for i, k in enumerate(sorted(k for k in children if k != root)):
        relabel[k] = n + i
    return SteinerTopology(n, n - 2, tuple((relabel[a], relabel[b]) for a, b in edges))


def _plan_topology(terms: np.ndarray, supply: np.ndarray, alpha: float) -> SteinerTopology:
    """Tree built from an acyclic Kantorovich vertex plan between the net parts.

    Plan components are chained by zero-flux edges, and every terminal of
    degree ``k >= 2`` is expanded into a chain of ``k - 1`` Steiner points so
    branching can happen away from the terminal.
    """
    src = np.flatnonzero(supply > 0)
    dst = np.flatnonzero(supply < 0)
    mu_s = AtomicMeasure.from_arrays(terms[src], supply[src])
    mu_t = AtomicMeasure.from_arrays(terms[dst], -supply[dst])
    sol = solve_kantorovich(mu_s, mu_t, 1.0 / alpha)
    n = len(terms)
    edges = [(int(src[i]), int(dst[k])) for i, k, _ in sol.plan.entries()]
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for a, b in edges:
        parent[find(a)] = find(b)
    roots = sorted({find(i) for i in range(n)})
    edges += list(zip(roots[:-1], roots[1:]))
    nbrs: dict[int, list[int]] = {i: [] for i in range(n)}
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    out = []
    port: dict[tuple[int, int], int] = {}
    nxt = n
    for v in range(n):
        nb = nbrs[v]
        if len(nb) < 2:
            for u in nb:
                port[(v, u)] = v
            continue
        chain = list(range(nxt, nxt + len(nb) - 1))
        nxt += len(chain)
        out.append((v, chain[0]))
        for i, u in enumerate(nb[:-1]):
            port[(v, u)] = chain[i]
            if i + 1 < len(chain):
                out.append((chain[i], chain[i + 1]))
        port[(v, nb[-1])] = chain[-1]
    for a, b in edges:
        out.append((port[(a, b)], port[(b, a)]))
    return SteinerTopology(n, nxt - n, tuple(out))


def _leaf_moves(top: SteinerTopology, leaf: int) -> list[SteinerTopology]:
    """Topologies obtained by re-attaching ``leaf`` to every other edge."""
    edges = list(top.edges)
    e_leaf = next(e for e in edges if leaf in e)
    s = e_leaf[0] if e_leaf[1] == leaf else e_leaf[1]
    if s < top.n_terminals:
        return []
    around = [e for e in edges if s in e and e != e_leaf]
    u, v = [a if b == s else b for a, b in around]
    rest = [e for e in edges if s not in e] + [(u, v)]
    out = []
    for i, (a, b) in enumerate(rest):
        if {a, b} == {u, v}:
            continue
        new = rest[:i] + rest[i + 1:] + [(a, s), (s, b), (leaf, s)]
        out.append(SteinerTopology(top.n_terminals, top.n_steiner, tuple(new)))
    return out


def _optimize(top, terms, supply, alpha, tol) -> tuple[float, BranchedGraph]:
    g = optimize_branch_points(top, terms, supply, alpha, tol)
    return gilbert_energy(g, alpha), g


def _heuristic(terms, supply, alpha, tol, rounds: int = 2) -> tuple[float, BranchedGraph]:
    n = len(terms)
    top = _greedy_topology(terms, supply)
    best_v, best_g = _optimize(top, terms, supply, alpha, tol)
    for _ in range(rounds):
        improved = False
        for leaf in range(n):
            moves = _leaf_moves(top, leaf)
            if not moves:
                continue
            v, g, k = _screen_and_polish(moves, terms, supply, alpha, tol, keep=2, margin=1e-6, iters=150)
            if v < best_v * (1 - 1e-12):
                best_v, best_g, top = v, g, moves[k]
                improved = True
        if not improved:
            break
    v, g = _optimize(_plan_topology(terms, supply, alpha), terms, supply, alpha, tol)
    if v < best_v:
        best_v, best_g = v, g
    return best_v, best_g
