"""Combinatorial Steiner trees over terminals and the unique flow they carry."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import BalanceError, PreconditionError


@dataclass(frozen=True)
class SteinerTopology:
    """Tree on nodes ``0..n_terminals-1`` (terminals) and ``n_terminals..`` (Steiner points).

    Steiner points have degree exactly 3. Terminals may be leaves or, for
    topologies built by the heuristic, interior nodes.
    """

    n_terminals: int
    n_steiner: int
    edges: tuple[tuple[int, int], ...]
    ident: int = 0

    def __post_init__(self):
        n = self.n_terminals + self.n_steiner
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        if n <= 1:
            if edges:
                raise PreconditionError("a single node cannot carry edges")
            return
        if len(edges) != n - 1:
            raise PreconditionError("a tree on n nodes has n - 1 edges")
        deg = np.zeros(n, dtype=int)
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in edges:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise PreconditionError(f"bad edge {(a, b)}")
            deg[a] += 1
            deg[b] += 1
            ra, rb = find(a), find(b)
            if ra == rb:
                raise PreconditionError("topology contains a cycle")
            parent[ra] = rb
        if np.any(deg[self.n_terminals:] != 3):
            raise PreconditionError("Steiner points must have degree 3")

    @property
    def n_nodes(self) -> int:
        return self.n_terminals + self.n_steiner


@lru_cache(maxsize=None)
def _full_edge_lists(n: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    if n <= 1:
        return ((),)
    if n == 2:
        return (((0, 1),),)
    # Steiner labels are negative during construction: -1, -2, ...
    trees = [[(0, -1), (1, -1), (2, -1)]]
    for k in range(3, n):
        s = -(k - 1)
        grown = []
        for tree in trees:
            for e, (a, b) in enumerate(tree):
                grown.append(tree[:e] + [(a, s), (s, b), (k, s)] + tree[e + 1:])
        trees = grown
    return tuple(tuple((a if a >= 0 else n - 1 - a, b if b >= 0 else n - 1 - b) for a, b in t) for t in trees)


def enumerate_topologies(n_terminals: int) -> list[SteinerTopology]:
    """All full Steiner topologies; there are ``(2n - 5)!!`` of them for ``n >= 3``.

    Topology ids follow the deterministic edge-insertion order.
    """
    if n_terminals < 0:
        raise PreconditionError("terminal count must be non-negative")
    n_steiner = max(n_terminals - 2, 0)
    return [SteinerTopology(n_terminals, n_steiner, edges, ident)
            for ident, edges in enumerate(_full_edge_lists(n_terminals))]


def tree_flow_masses(topology: SteinerTopology, terminal_masses, tol: float = 1e-9) -> np.ndarray:
    """Edge fluxes of the unique flow with divergence ``terminal_masses``.

    ``terminal_masses[i] > 0`` is a source, ``< 0`` a sink. Returns an
    ``(E, 3)`` array of ``(tail, head, flux)`` with ``flux >= 0``, oriented
    from the source side to the sink side and in the topology's edge order.
    """
    s = np.asarray(terminal_masses, dtype=float).reshape(-1)
    if len(s) != topology.n_terminals:
        raise PreconditionError("one mass per terminal required")
    scale = max(float(np.abs(s).sum()), 1e-300)
    if abs(float(s.sum())) > tol * max(1.0, scale):
        raise BalanceError(f"terminal masses do not balance (sum {float(s.sum()):.3g})")
    n = topology.n_nodes
    supply = np.zeros(n)
    supply[:len(s)] = s
    if not topology.edges:
        return np.zeros((0, 3))
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in topology.edges:
        adj[a].append(b)
        adj[b].append(a)
    parent = np.full(n, -1)
    order = [0]
    parent[0] = 0
    for u in order:
        for v in adj[u]:
            if parent[v] < 0:
                parent[v] = u
                order.append(v)
    sub = supply.copy()
    for v in reversed(order[1:]):
        sub[parent[v]] += sub[v]
    out = np.zeros((len(topology.edges), 3))
    for e, (a, b) in enumerate(topology.edges):
        child = b if parent[b] == a else a
        flux = sub[child]
        if abs(flux) <= 1e-15 * scale:
            out[e] = (a, b, 0.0)
        elif flux > 0:
            out[e] = (child, parent[child], flux)
        else:
            out[e] = (parent[child], child, -flux)
    return out
