"""Exact Kantorovich transport between atomic measures.

The solver is a transportation simplex on the dense cost matrix. It keeps a
spanning-tree basis of the bipartite source/target graph, so the returned
plan is always a vertex of the transport polytope and its support is a
forest with at most ``n + m - 1`` cells.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import BalanceError, ConvergenceError, DomainError, PreconditionError
from .geometry import AtomicMeasure

MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Sparse coupling: ``masses[r]`` moves from source atom ``rows[r]`` to target atom ``cols[r]``."""

    source: AtomicMeasure
    target: AtomicMeasure
    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray

    def __len__(self):
        return len(self.masses)

    def entries(self) -> list[tuple[int, int, float]]:
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.masses.tolist()))

    def distances(self) -> np.ndarray:
        return np.linalg.norm(self.source.positions[self.rows] - self.target.positions[self.cols], axis=1)

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self.source), len(self.target)))
        np.add.at(out, (self.rows, self.cols), self.masses)
        return out

    def check_marginals(self, tol: float = MASS_TOL) -> bool:
        d = self.dense()
        return (np.allclose(d.sum(axis=1), self.source.masses, atol=tol, rtol=0)
                and np.allclose(d.sum(axis=0), self.target.masses, atol=tol, rtol=0))


@dataclass(frozen=True, eq=False)
class OtSolution:
    plan: TransportPlan
    cost: float
    p: float
    is_vertex: bool = True


def cost_matrix(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return dist if p == 1 else dist ** p


def _check_pair(mu0: AtomicMeasure, mu1: AtomicMeasure, p: float) -> None:
    if not p >= 1:
        raise PreconditionError(f"exponent p must be >= 1, got {p}")
    if len(mu0) == 0 or len(mu1) == 0:
        raise DomainError("empty measure")
    if mu0.dim != mu1.dim:
        raise DomainError("measures live in different dimensions")
    if abs(mu0.total_mass - mu1.total_mass) > MASS_TOL:
        raise BalanceError(f"total masses differ: {mu0.total_mass!r} vs {mu1.total_mass!r}")


def _northwest_corner(supply: np.ndarray, demand: np.ndarray):
    """Staircase starting basis: exactly ``n + m - 1`` cells forming a tree."""
    n, m = len(supply), len(demand)
    flow = {}
    i = k = 0
    rs, rd = float(supply[0]), float(demand[0])
    while True:
        if i == n - 1 and k == m - 1:
            flow[(i, k)] = max(min(rs, rd), 0.0)
            break
        if (rs <= rd and i < n - 1) or k == m - 1:
            flow[(i, k)] = max(rs, 0.0)
            rd -= rs
            i += 1
            rs = float(supply[i])
        else:
            flow[(i, k)] = max(rd, 0.0)
            rs -= rd
            k += 1
            rd = float(demand[k])
    return flow


def _tree_path(adj, n, start, goal):
    """Node path in the basis tree; rows are ``0..n-1``, columns ``n..``."""
    prev = {start: None}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        if u == goal:
            break
        for v in adj[u]:
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path = []
    u = goal
    while u is not None:
        path.append(u)
        u = prev[u]
    return path[::-1]


def transportation_simplex(supply, demand, cost, max_pivots: int | None = None):
    """Solve ``min <cost, X>`` over couplings of ``supply`` and ``demand``.

    Returns a dict ``{(i, k): mass}`` holding the final basis (including
    degenerate zero cells). Entering cells are chosen by most negative
    reduced cost, ties broken lexicographically in ``(i, k)``; after a run of
    degenerate pivots the rule switches to Bland's to rule out cycling.
    """
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    flow = _northwest_corner(supply, demand)
    adj = [set() for _ in range(n + m)]
    for i, k in flow:
        adj[i].add(n + k)
        adj[n + k].add(i)
    scale = max(float(np.abs(cost).max()), 1e-300)
    tol = 1e-12 * scale
    if max_pivots is None:
        max_pivots = 50 * (n + m) * max(n, m) + 1000
    degenerate_run = 0
    for _ in range(max_pivots):
        u = np.zeros(n)
        v = np.zeros(m)
        done = np.zeros(n + m, dtype=bool)
        done[0] = True
        queue = deque([0])
        while queue:
            a = queue.popleft()
            for b in adj[a]:
                if done[b]:
                    continue
                if a < n:
                    v[b - n] = cost[a, b - n] - u[a]
                else:
                    u[b] = cost[b, a - n] - v[a - n]
                done[b] = True
                queue.append(b)
        reduced = cost - u[:, None] - v[None, :]
        if degenerate_run > n + m:
            neg = np.flatnonzero(reduced.ravel() < -tol)
            if len(neg) == 0:
                return flow
            flat = int(neg[0])
        else:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -tol:
                return flow
        ei, ek = divmod(flat, m)
        path = _tree_path(adj, n, ei, n + ek)
        cells = []
        for a, b in zip(path[:-1], path[1:]):
            cells.append((a, b - n) if a < n else (b, a - n))
        # The cycle is entering cell (+), then path cells alternating -, +, ...
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min(c for c in minus if flow[c] == theta)
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[(ei, ek)] = theta
        del flow[leaving]
        li, lk = leaving
        adj[li].discard(n + lk)
        adj[n + lk].discard(li)
        adj[ei].add(n + ek)
        adj[n + ek].add(ei)
        degenerate_run = degenerate_run + 1 if theta == 0.0 else 0
    raise ConvergenceError("transportation simplex hit its pivot cap", best=flow)


def solve_kantorovich(mu0: AtomicMeasure, mu1: AtomicMeasure, p: float = 1.0) -> OtSolution:
    """Optimal coupling for ``c(x, y) = |x - y|^p`` as a vertex of the polytope."""
    _check_pair(mu0, mu1, p)
    cost = cost_matrix(mu0.positions, mu1.positions, p)
    flow = transportation_simplex(mu0.masses, mu1.masses, cost)
    cells = sorted((c, w) for c, w in flow.items() if w > 0)
    rows = np.array([c[0] for c, _ in cells], dtype=int)
    cols = np.array([c[1] for c, _ in cells], dtype=int)
    masses = np.array([w for _, w in cells], dtype=float)
    plan = TransportPlan(mu0, mu1, rows, cols, masses)
    return OtSolution(plan, float(np.sum(masses * cost[rows, cols])), float(p), True)


def wasserstein(mu0: AtomicMeasure, mu1: AtomicMeasure, p: float = 1.0) -> float:
    """``W_p = (min cost) ** (1/p)``."""
    cost = solve_kantorovich(mu0, mu1, p).cost
    return max(cost, 0.0) ** (1.0 / p)


def w1_lower_bound_dual(mu0: AtomicMeasure, mu1: AtomicMeasure,
                        f: Callable[[np.ndarray], float], tol: float = 1e-9) -> float:
    """``int f dmu0 - int f dmu1`` for a 1-Lipschitz ``f``; never exceeds ``W_1``.

    Lipschitz continuity is checked on all pairs of atoms of both measures.
    """
    pts = np.vstack([mu0.positions, mu1.positions])
    vals = np.array([float(f(x)) for x in pts])
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    excess = np.abs(vals[:, None] - vals[None, :]) - dist
    if excess.max() > tol:
        raise PreconditionError(f"test function is not 1-Lipschitz on the atoms (excess {excess.max():.3g})")
    n = len(mu0)
    return float(np.dot(vals[:n], mu0.masses) - np.dot(vals[n:], mu1.masses))


def support_is_forest(rows, cols, n: int, m: int) -> bool:
    parent = list(range(n + m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, k in zip(rows, cols):
        a, b = find(int(i)), find(n + int(k))
        if a == b:
            return False
        parent[a] = b
    return True


def assert_acyclic_support(sol: OtSolution) -> bool:
    """True iff the plan support has at most ``n + m - 1`` cells and no cycle."""
    plan = sol.plan
    n, m = len(plan.source), len(plan.target)
    cells = set(zip(plan.rows.tolist(), plan.cols.tolist()))
    if len(cells) != len(plan) or len(plan) > n + m - 1:
        return False
    return support_is_forest(plan.rows, plan.cols, n, m)


def write_plan_csv(plan: TransportPlan, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "k", "mass", "distance"])
        for (i, k, mass), dist in zip(plan.entries(), plan.distances()):
            w.writerow([i, k, repr(mass), repr(float(dist))])


def read_plan_csv(path: str | Path, source: AtomicMeasure, target: AtomicMeasure) -> TransportPlan:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return TransportPlan(source, target,
                         np.array([int(r["i"]) for r in rows], dtype=int),
                         np.array([int(r["k"]) for r in rows], dtype=int),
                         np.array([float(r["mass"]) for r in rows]))


def plan_alpha_cost(plan: TransportPlan, alpha: float) -> float:
    """``sum M(i,k)^alpha * |x_i - y_k|``: the branched cost of routing each
    plan entry on its own straight edge."""
    return float(np.sum(plan.masses ** alpha * plan.distances()))
