"""Steiner-point placement for a fixed tree topology.

With the topology fixed the edge fluxes are fixed, so the energy
``sum_e w_e |x_a - x_b|`` (``w_e = flux_e ** alpha``) is convex in the free
coordinates. We screen many topologies at once with a batched Weiszfeld
(iteratively reweighted least squares) sweep, then polish single candidates
with a damped Newton method. Steiner points that run into a neighbour are
merged, and merged points are released again when the first-order split
test says leaving the cluster lowers the energy.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConvergenceError, PreconditionError
from .graph import BranchedGraph
from .topology import SteinerTopology, tree_flow_masses

EPS_REG = 1e-12
MAX_ITER = 10_000
TIGHT_MERGE = 1e-10   # relative to the terminal extent
NEAR_MERGE = 1e-6
LOOSE_MERGE = 1e-3
SPLIT_STEP = 1e-6


def _extent(points: np.ndarray) -> float:
    if len(points) == 0:
        return 1.0
    ext = float(np.max(points.max(axis=0) - points.min(axis=0)))
    return ext if ext > 0 else 1.0


def _energy(P: np.ndarray, edges: np.ndarray, w: np.ndarray) -> float:
    if len(edges) == 0:
        return 0.0
    return float(np.sum(w * np.linalg.norm(P[edges[:, 0]] - P[edges[:, 1]], axis=1)))


def harmonic_start(fixed: np.ndarray, n_free: int, edges: np.ndarray) -> np.ndarray:
    """Free points placed at the unit-weight barycentric (Tutte) layout."""
    nf = len(fixed)
    d = fixed.shape[1]
    if n_free == 0:
        return np.zeros((0, d))
    A = np.eye(n_free) * 1e-9
    B = np.zeros((n_free, d)) + 1e-9 * fixed.mean(axis=0)
    for a, b in edges:
        for u, v in ((a, b), (b, a)):
            if u >= nf:
                A[u - nf, u - nf] += 1.0
                if v >= nf:
                    A[u - nf, v - nf] -= 1.0
                else:
                    B[u - nf] += fixed[v]
    return np.linalg.solve(A, B)


def batch_weiszfeld(fixed: np.ndarray, edges: np.ndarray, weights: np.ndarray, x0: np.ndarray,
                    iters: int = 1000, rtol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Run reweighted least squares on ``T`` topologies sharing the node layout.

    ``edges`` is ``(T, E, 2)``, ``weights`` ``(T, E)`` and ``x0``
    ``(T, n_free, d)``. Returns the final free positions and energies.
    """
    T, E, _ = edges.shape
    nf, d = fixed.shape
    k = x0.shape[1]
    scale = _extent(fixed)
    X = x0.copy()
    if k == 0:
        P = np.broadcast_to(fixed, (T, nf, d))
        return X, _batch_energy(P, edges, weights)
    tt = np.repeat(np.arange(T), E)
    ea = edges[:, :, 0].ravel()
    eb = edges[:, :, 1].ravel()
    a_free = ea >= nf
    b_free = eb >= nf
    both = a_free & b_free
    eye = np.eye(k)[None]
    prox = 1e-12 * max(float(weights.sum(axis=1).max()), 1e-300) / scale
    for _ in range(iters):
        P = np.concatenate([np.broadcast_to(fixed, (T, nf, d)), X], axis=1)
        diff = P[tt, ea] - P[tt, eb]
        ell = np.sqrt(np.sum(diff * diff, axis=1) + (EPS_REG * scale) ** 2)
        c = weights.ravel() / ell
        A = np.zeros((T, k, k))
        B = np.zeros((T, k, d))
        np.add.at(A, (tt[a_free], ea[a_free] - nf, ea[a_free] - nf), c[a_free])
        np.add.at(A, (tt[b_free], eb[b_free] - nf, eb[b_free] - nf), c[b_free])
        np.add.at(A, (tt[both], ea[both] - nf, eb[both] - nf), -c[both])
        np.add.at(A, (tt[both], eb[both] - nf, ea[both] - nf), -c[both])
        fa = a_free & ~b_free
        fb = b_free & ~a_free
        np.add.at(B, (tt[fa], ea[fa] - nf), c[fa, None] * fixed[eb[fa]])
        np.add.at(B, (tt[fb], eb[fb] - nf), c[fb, None] * fixed[ea[fb]])
        A += prox * eye
        B += prox * X
        Xn = np.linalg.solve(A, B)
        moved = float(np.abs(Xn - X).max())
        X = Xn
        if moved <= rtol * scale:
            break
    P = np.concatenate([np.broadcast_to(fixed, (T, nf, d)), X], axis=1)
    return X, _batch_energy(P, edges, weights)


def _batch_energy(P, edges, weights):
    T = P.shape[0]
    tt = np.arange(T)[:, None]
    diff = P[tt, edges[:, :, 0]] - P[tt, edges[:, :, 1]]
    return np.sum(weights * np.linalg.norm(diff, axis=2), axis=1)


class _TreeState:
    """Node positions plus a cluster map for merged (collapsed) nodes."""

    def __init__(self, fixed, free, edges, weights):
        self.nf = len(fixed)
        self.P = np.vstack([fixed, free]) if len(free) else fixed.copy()
        self.edges = edges
        self.w = weights
        self.rep = np.arange(len(self.P))
        self.scale = _extent(fixed)

    def active(self):
        A = self.rep[self.edges]
        keep = (A[:, 0] != A[:, 1]) & (self.w > 0)
        return A[keep], self.w[keep]

    def free_reps(self, ae) -> list[int]:
        return sorted({int(v) for v in ae.ravel() if v >= self.nf})

    def merge(self, u: int, v: int) -> bool:
        u, v = int(self.rep[u]), int(self.rep[v])
        if u == v or (u < self.nf and v < self.nf):
            return False
        target, loser = (u, v) if (u < self.nf or (v >= self.nf and u < v)) else (v, u)
        members = self.rep == loser
        self.rep[members] = target
        self.P[members] = self.P[target]
        return True

    def energy(self) -> float:
        ae, aw = self.active()
        return _energy(self.P, ae, aw)

    def sync(self):
        self.P[:] = self.P[self.rep]


def _grad_hess(P, nodes, ae, aw, floor):
    idx = {v: i for i, v in enumerate(nodes)}
    k, d = len(nodes), P.shape[1]
    g = np.zeros((k, d))
    H = np.zeros((k * d, k * d))
    eye = np.eye(d)
    for (a, b), w in zip(ae.tolist(), aw):
        diff = P[a] - P[b]
        ell = float(np.linalg.norm(diff))
        if ell <= floor:
            continue
        u = diff / ell
        h = (w / ell) * (eye - np.outer(u, u))
        ia, ib = idx.get(a), idx.get(b)
        if ia is not None:
            g[ia] += w * u
            H[ia * d:(ia + 1) * d, ia * d:(ia + 1) * d] += h
        if ib is not None:
            g[ib] -= w * u
            H[ib * d:(ib + 1) * d, ib * d:(ib + 1) * d] += h
        if ia is not None and ib is not None:
            H[ia * d:(ia + 1) * d, ib * d:(ib + 1) * d] -= h
            H[ib * d:(ib + 1) * d, ia * d:(ia + 1) * d] -= h
    return g, H


def _weiszfeld_step(P, nodes, ae, aw, scale) -> np.ndarray:
    """One reweighted least-squares update of the free points (never increases the energy)."""
    idx = {v: i for i, v in enumerate(nodes)}
    k, d = len(nodes), P.shape[1]
    A = np.zeros((k, k))
    B = np.zeros((k, d))
    for (a, b), w in zip(ae.tolist(), aw):
        c = w / max(float(np.linalg.norm(P[a] - P[b])), EPS_REG * scale)
        ia, ib = idx.get(a), idx.get(b)
        for i, j, other in ((ia, ib, b), (ib, ia, a)):
            if i is None:
                continue
            A[i, i] += c
            if j is None:
                B[i] += c * P[other]
            else:
                A[i, j] -= c
    return np.linalg.solve(A, B)


def _newton(state: _TreeState, tol: float, max_iter: int) -> tuple[bool, int]:
    """Damped Newton on the free cluster representatives; returns (converged, iterations)."""
    ae, aw = state.active()
    nodes = state.free_reps(ae)
    if not nodes:
        return True, 0
    P = state.P
    floor = TIGHT_MERGE * state.scale * 1e-3
    sel = np.array(nodes)
    stalled = 0
    for it in range(max_iter):
        g, H = _grad_hess(P, nodes, ae, aw, floor)
        if float(np.linalg.norm(g, axis=1).max()) <= tol:
            state.sync()
            return True, it
        e0 = _energy(P, ae, aw)
        gf = g.ravel()
        mu = 1e-12 * max(float(np.trace(H)) / len(H), 1e-300)
        accepted = False
        base = P[sel].copy()
        for _ in range(3):
            try:
                step = np.linalg.solve(H + mu * np.eye(len(H)), -gf)
            except np.linalg.LinAlgError:
                mu *= 1e4
                continue
            slope = float(gf @ step)
            if slope >= 0:
                mu *= 1e4
                continue
            if -slope <= 1e-13 * max(e0, 1e-300):
                # Energy differences are below rounding here; judge the
                # step by the gradient it leaves behind.
                P[sel] = base + step.reshape(-1, P.shape[1])
                g1, _ = _grad_hess(P, nodes, ae, aw, floor)
                if np.linalg.norm(g1) < np.linalg.norm(g):
                    accepted = True
                    break
                P[sel] = base
            t = 1.0
            while t > 1e-3:
                P[sel] = base + t * step.reshape(-1, P.shape[1])
                if _energy(P, ae, aw) <= e0 + 1e-4 * t * slope:
                    accepted = True
                    break
                t *= 0.25
            if accepted:
                break
            P[sel] = base
            mu *= 1e4
        if not accepted:
            P[sel] = _weiszfeld_step(P, nodes, ae, aw, state.scale)
            accepted = _energy(P, ae, aw) < e0
            if not accepted:
                P[sel] = base
        state.sync()
        if not accepted:
            return False, it
        if e0 - _energy(P, ae, aw) <= 1e-15 * max(e0, 1e-300):
            stalled += 1
            if stalled >= 3:
                return False, it
        else:
            stalled = 0
    return False, max_iter


def _merge_short(state: _TreeState, radius: float, only_shortest: bool = False) -> bool:
    ae, _ = state.active()
    if len(ae) == 0:
        return False
    ell = np.linalg.norm(state.P[ae[:, 0]] - state.P[ae[:, 1]], axis=1)
    free_end = (ae[:, 0] >= state.nf) | (ae[:, 1] >= state.nf)
    cand = np.flatnonzero(free_end & (ell < radius))
    if len(cand) == 0:
        return False
    if only_shortest:
        cand = cand[[int(np.argmin(ell[cand]))]]
    merged = False
    for e in cand:
        merged |= state.merge(*ae[e])
    return merged


def _prune_dangling(state: _TreeState) -> bool:
    """Free nodes with a single active edge sit best on their neighbour."""
    changed = False
    while True:
        ae, _ = state.active()
        deg = np.zeros(len(state.P), dtype=int)
        np.add.at(deg, ae.ravel(), 1)
        hit = False
        for a, b in ae.tolist():
            for u, v in ((a, b), (b, a)):
                if u >= state.nf and deg[u] == 1 and state.merge(u, v):
                    hit = changed = True
                    break
            if hit:
                break
        if not hit:
            return changed


def split_test(state: _TreeState, slack: float = 1e-9) -> list[tuple[int, np.ndarray]]:
    """Merged free nodes whose release lowers the energy, with release directions."""
    out = []
    for s in range(state.nf, len(state.P)):
        r = int(state.rep[s])
        if r == s:
            continue
        x = state.P[r]
        R = np.zeros(state.P.shape[1])
        c_in = 0.0
        for (a, b), w in zip(state.edges.tolist(), state.w):
            if w <= 0 or s not in (a, b):
                continue
            o = b if a == s else a
            ro = int(state.rep[o])
            diff = state.P[ro] - x
            dist = float(np.linalg.norm(diff))
            if ro == r or dist == 0.0:
                c_in += w
            else:
                R += w * diff / dist
        nR = float(np.linalg.norm(R))
        if nR > c_in + slack * max(c_in, nR, 1e-300):
            out.append((s, R / nR))
    return out


def polish_tree(fixed: np.ndarray, free0: np.ndarray, edges: np.ndarray, weights: np.ndarray,
                tol: float = 1e-10, max_iter: int = MAX_ITER) -> tuple[np.ndarray, np.ndarray, float]:
    """Minimize the weighted tree length over the free points.

    Returns ``(positions of all nodes, cluster representative per node,
    energy)``. Raises ConvergenceError carrying the best state on failure.
    """
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    state = _TreeState(np.asarray(fixed, float), np.asarray(free0, float), np.asarray(edges, int).reshape(-1, 2),
                       np.asarray(weights, float))
    budget = max_iter
    loose = False
    for _ in range(10 * len(state.P) + 40):
        _prune_dangling(state)
        _merge_short(state, TIGHT_MERGE * state.scale)
        ok, used = _newton(state, tol, min(budget, 15))
        budget -= max(used, 1)
        if not ok:
            # Newton stalls next to a kink: collapse short free edges and
            # let the split test undo any merge that was wrong.
            if (_merge_short(state, NEAR_MERGE * state.scale)
                    or _merge_short(state, LOOSE_MERGE * state.scale, only_shortest=True)):
                loose = True
                continue
        elif _merge_short(state, TIGHT_MERGE * state.scale):
            continue
        releases = split_test(state)
        if releases:
            for s, u in releases:
                state.rep[s] = s
                state.P[s] = state.P[s] + SPLIT_STEP * state.scale * u
            continue
        if ok:
            return state.P.copy(), state.rep.copy(), state.energy()
        if budget <= 0:
            break
    best = (state.P.copy(), state.rep.copy(), state.energy())
    raise ConvergenceError(f"branch point optimization did not converge (loose merges: {loose})", best=best)


def graph_from_tree(points: np.ndarray, rep: np.ndarray, n_terminals: int, supply: np.ndarray,
                    flows: np.ndarray) -> BranchedGraph:
    """Contract merged nodes and keep positive-flux edges."""
    keep_nodes = sorted({int(r) for r in rep[:n_terminals]} | {int(r) for r in rep})
    used = {int(v) for row in flows if row[2] > 0 for v in (rep[int(row[0])], rep[int(row[1])])}
    keep_nodes = [v for v in keep_nodes if v < n_terminals or v in used]
    index = {v: i for i, v in enumerate(keep_nodes)}
    sup = np.zeros(len(keep_nodes))
    for t in range(n_terminals):
        sup[index[int(rep[t])]] += supply[t]
    acc: dict[tuple[int, int], float] = {}
    for a, b, f in flows:
        if f <= 0:
            continue
        ra, rb = index[int(rep[int(a)])], index[int(rep[int(b)])]
        if ra == rb:
            continue
        if (rb, ra) in acc:
            acc[(rb, ra)] -= f
        else:
            acc[(ra, rb)] = acc.get((ra, rb), 0.0) + f
    edges, flux = [], []
    tiny = 1e-15 * max(float(np.abs(supply).sum()), 1e-300)
    for (a, b), f in acc.items():
        if f > tiny:
            edges.append((a, b))
            flux.append(f)
        elif f < -tiny:
            edges.append((b, a))
            flux.append(-f)
    return BranchedGraph(points[keep_nodes], sup, np.array(edges, dtype=int).reshape(-1, 2), np.array(flux),
                         n_terminals)


def optimize_branch_points(topology: SteinerTopology, terminals: np.ndarray, supply, alpha: float,
                           tol: float = 1e-10, x0: np.ndarray | None = None) -> BranchedGraph:
    """Optimal Steiner coordinates for ``topology`` as a balanced graph.

    ``terminals`` are the terminal positions and ``supply`` their net masses
    (sources positive). Collapsed Steiner points are merged into the node
    they hit, so the graph may have fewer vertices than the topology.
    """
    if not 0 < alpha <= 1:
        raise PreconditionError("alpha must lie in (0, 1]")
    terminals = np.atleast_2d(np.asarray(terminals, dtype=float))
    supply = np.asarray(supply, dtype=float)
    if len(terminals) != topology.n_terminals:
        raise PreconditionError("one position per terminal required")
    flows = tree_flow_masses(topology, supply)
    edges = flows[:, :2].astype(int)
    weights = flows[:, 2] ** alpha
    if x0 is None:
        x0 = harmonic_start(terminals, topology.n_steiner, edges)
    try:
        points, rep, _ = polish_tree(terminals, x0, edges, weights, tol)
    except ConvergenceError as exc:
        points, rep, _ = exc.best
        exc.best = graph_from_tree(points, rep, topology.n_terminals, supply, flows)
        raise
    return graph_from_tree(points, rep, topology.n_terminals, supply, flows)
