"""Weighted directed transport graphs (Gilbert/Xia networks) and their plans."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BalanceError, PreconditionError
from ..geometry import AtomicMeasure, cluster_points
from ..traffic_plans import MassCurve, TrafficPlan

BALANCE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class BranchedGraph:
    """Straight-edge network carrying fluxes from ``mu0`` to ``mu1``.

    ``supply[v] = mu0({v}) - mu1({v})`` (zero at Steiner points); each edge
    ``(tail, head)`` carries ``flux > 0`` from tail to head, and at every
    vertex outflow minus inflow equals the supply.
    """

    vertices: np.ndarray
    supply: np.ndarray
    edges: np.ndarray
    flux: np.ndarray
    n_terminals: int

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        e = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        f = np.asarray(self.flux, dtype=float).reshape(-1)
        s = np.asarray(self.supply, dtype=float).reshape(-1)
        if len(s) != len(v) or len(f) != len(e):
            raise PreconditionError("graph arrays have inconsistent lengths")
        if len(e) and (e.min() < 0 or e.max() >= len(v)):
            raise PreconditionError("edge refers to a missing vertex")
        if np.any(f <= 0):
            raise PreconditionError("edges must carry positive flux")
        for name, arr in (("vertices", v), ("edges", e), ("flux", f), ("supply", s)):
            object.__setattr__(self, name, arr)
        residual = self.divergence() - s
        scale = max(1.0, float(np.abs(s).sum()))
        if len(residual) and np.abs(residual).max() > BALANCE_TOL * scale:
            raise BalanceError(f"Kirchhoff balance violated (residual {np.abs(residual).max():.3g})")

    def divergence(self) -> np.ndarray:
        out = np.zeros(len(self.vertices))
        np.add.at(out, self.edges[:, 0], self.flux)
        np.add.at(out, self.edges[:, 1], -self.flux)
        return out

    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def steiner_points(self) -> np.ndarray:
        return self.vertices[self.n_terminals:]

    @classmethod
    def empty(cls, dim: int) -> "BranchedGraph":
        return cls(np.zeros((0, dim)), np.zeros(0), np.zeros((0, 2), dtype=int), np.zeros(0), 0)


def gilbert_energy(g: BranchedGraph, alpha: float) -> float:
    """``sum_e flux_e ** alpha * length_e``."""
    if not 0 < alpha <= 1:
        raise PreconditionError("alpha must lie in (0, 1]")
    if len(g.flux) == 0:
        return 0.0
    return float(np.sum(g.flux ** alpha * g.lengths()))


def net_terminals(mu0: AtomicMeasure, mu1: AtomicMeasure):
    """Merge both supports and return ``(points, net supply, shared points, shared mass)``.

    Mass present in both measures at the same point stays put and never
    enters the network.
    """
    if mu0.dim != mu1.dim:
        raise PreconditionError("measures live in different dimensions")
    if abs(mu0.total_mass - mu1.total_mass) > BALANCE_TOL * max(1.0, mu0.total_mass):
        raise BalanceError(f"total masses differ: {mu0.total_mass!r} vs {mu1.total_mass!r}")
    pts = np.vstack([mu0.positions, mu1.positions])
    ext = float(np.max(pts.max(axis=0) - pts.min(axis=0))) or 1.0
    labels = cluster_points(pts, 1e-12 * ext)
    n = labels.max() + 1
    first = np.array([np.argmax(labels == g) for g in range(n)])
    src = np.zeros(n)
    dst = np.zeros(n)
    np.add.at(src, labels[:len(mu0)], mu0.masses)
    np.add.at(dst, labels[len(mu0):], mu1.masses)
    net = src - dst
    shared = np.minimum(src, dst)
    tiny = 1e-14 * max(mu0.total_mass, 1e-300)
    keep = np.abs(net) > tiny
    stay = shared > tiny
    return pts[first][keep], net[keep], pts[first][stay], shared[stay]


def _longest_arrival(g: BranchedGraph) -> np.ndarray:
    """Length of the longest directed path ending at each vertex."""
    n = len(g.vertices)
    lengths = g.lengths()
    indeg = np.zeros(n, dtype=int)
    out: list[list[int]] = [[] for _ in range(n)]
    for e, (a, b) in enumerate(g.edges.tolist()):
        out[a].append(e)
        indeg[b] += 1
    tau = np.zeros(n)
    ready = [v for v in range(n) if indeg[v] == 0]
    seen = 0
    while ready:
        u = ready.pop(0)
        seen += 1
        for e in out[u]:
            v = int(g.edges[e, 1])
            tau[v] = max(tau[v], tau[u] + lengths[e])
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(v)
    if seen != n:
        raise PreconditionError("graph has a directed cycle")
    return tau


def flow_paths(g: BranchedGraph) -> list[tuple[list[int], float]]:
    """Decompose the edge flow into source-to-sink vertex paths with masses."""
    flux = g.flux.copy()
    excess = g.supply.copy()
    scale = max(float(np.abs(g.supply).sum()), 1e-300)
    tol = 1e-13 * scale
    out_edges: list[list[int]] = [[] for _ in range(len(g.vertices))]
    for e, (a, _) in enumerate(g.edges.tolist()):
        out_edges[a].append(e)
    paths = []
    while True:
        starts = np.flatnonzero(excess > tol)
        if len(starts) == 0:
            break
        u = int(starts[0])
        verts, used = [u], []
        while excess[verts[-1]] >= -tol or len(verts) == 1:
            nxt = [e for e in out_edges[verts[-1]] if flux[e] > tol]
            if not nxt:
                break
            used.append(nxt[0])
            verts.append(int(g.edges[nxt[0], 1]))
        mass = min([excess[u], -excess[verts[-1]]] + [flux[e] for e in used])
        if mass <= tol:
            break
        for e in used:
            flux[e] -= mass
        excess[u] -= mass
        excess[verts[-1]] += mass
        paths.append((verts, float(mass)))
    return paths


def graph_to_plan(g: BranchedGraph, stay: tuple[np.ndarray, np.ndarray] | None = None) -> TrafficPlan:
    """A synchronized traffic plan realizing the graph flow.

    Every vertex ``v`` gets a departure time ``tau(v)`` (longest incoming
    path length, normalized to [0, 1]); all curves using an edge traverse it
    together at unit normalized speed and wait at its head until the head's
    departure time. Coincident curves therefore move together, and both
    plan energies equal the graph energy. ``stay`` adds motionless curves
    for mass shared by both endpoint measures.
    """
    curves = []
    paths = flow_paths(g) if len(g.edges) else []
    if paths:
        tau = _longest_arrival(g)
        lengths = dict(zip(map(tuple, g.edges.tolist()), g.lengths()))
        horizon = float(tau.max())
        for verts, mass in paths:
            times = [0.0]
            pts = [g.vertices[verts[0]]]

            def add(t, x):
                if t > times[-1] + 1e-12:
                    times.append(t)
                    pts.append(x)

            add(tau[verts[0]] / horizon, g.vertices[verts[0]])
            for a, b in zip(verts[:-1], verts[1:]):
                add((tau[a] + lengths[(a, b)]) / horizon, g.vertices[b])
                add(tau[b] / horizon, g.vertices[b])
            if times[-1] < 1.0 - 1e-12:
                times.append(1.0)
                pts.append(pts[-1])
            else:
                times[-1] = 1.0
            curves.append(MassCurve(np.array(times), np.array(pts), mass))
    if stay is not None:
        for x, m in zip(*stay):
            curves.append(MassCurve(np.array([0.0, 1.0]), np.array([x, x]), float(m)))
    return TrafficPlan(tuple(curves))


def write_graph_csv(g: BranchedGraph, dest: str | Path) -> None:
    d = g.dim
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"tail_x{c}" for c in range(d)] + [f"head_x{c}" for c in range(d)] + ["flux", "length"])
        for (a, b), f, ell in zip(g.edges.tolist(), g.flux, g.lengths()):
            w.writerow([*map(repr, g.vertices[a].tolist()), *map(repr, g.vertices[b].tolist()), repr(float(f)),
                        repr(float(ell))])


def read_graph_csv(src: str | Path) -> BranchedGraph:
    """Rebuild a graph from an edge list; vertex supplies follow from Kirchhoff."""
    with open(src, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, r)) for r in reader if r]
    d = sum(1 for h in header if h.startswith("tail_x"))
    if not rows:
        return BranchedGraph.empty(d)
    arr = np.array(rows)
    ends = np.vstack([arr[:, :d], arr[:, d:2 * d]])
    ext = float(np.max(ends.max(axis=0) - ends.min(axis=0))) or 1.0
    labels = cluster_points(ends, 1e-12 * ext)
    n = labels.max() + 1
    first = np.array([np.argmax(labels == k) for k in range(n)])
    edges = np.column_stack([labels[:len(arr)], labels[len(arr):]])
    flux = arr[:, 2 * d]
    supply = np.zeros(n)
    np.add.at(supply, edges[:, 0], flux)
    np.add.at(supply, edges[:, 1], -flux)
    return BranchedGraph(ends[first], supply, edges, flux, n)
