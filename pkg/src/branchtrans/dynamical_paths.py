"""Time-discretized atomic curves of measures ``(rho_t, q_t = v_t rho_t)``.

A :class:`DynamicalPath` is a list of slices at grid times ``t_0 = 0 < ... <
t_K = 1``. Slice ``k`` lists particles (position, mass, velocity) that move
in straight lines at constant velocity on ``[t_k, t_{k+1})``; ``links[k]``
says how the mass of slice ``k`` is redistributed among the particles of
slice ``k + 1``, so splits and merges only happen at grid times. Every
functional of the path is then an exact finite sum over intervals.

Particles in a slice are distinct as (position, velocity) pairs. Two of them
may share a position at the grid time itself (a split point), but they
separate immediately, so on the open interval each particle is one atom of
``rho_t``. The final slice carries the mass-weighted mean of incoming
velocities, which is what disintegrating the plan at ``t = 1`` gives.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import PreconditionError
from .exact_ot import wasserstein
from .geometry import AtomicMeasure, CellWeights, cluster_points
from .traffic_plans import TIME_TOL, TrafficPlan, common_times, positions_at

# Absorbing value for energies that are +infinity (non-atomic or singular flux).
INFINITE_ENERGY = math.inf
DEFAULT_GRID = 256
LINK_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class TimeSlice:
    time: float
    positions: np.ndarray
    masses: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.positions, dtype=float))
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        v = np.asarray(self.velocities, dtype=float).reshape(x.shape)
        if len(m) != len(x):
            raise PreconditionError("slice positions and masses differ in length")
        if np.any(m < 0) or not np.all(np.isfinite(v)):
            raise PreconditionError("slice masses must be non-negative and velocities finite")
        object.__setattr__(self, "positions", x)
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "time", float(self.time))

    @property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.velocities, axis=1)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def __len__(self):
        return len(self.masses)


@dataclass(frozen=True, eq=False)
class DynamicalPath:
    """Grid times, one slice per time, and mass links between consecutive slices.

    ``links[k]`` is an ``(r, 3)`` array of rows ``(i, j, mass)`` sending
    ``mass`` from particle ``i`` of slice ``k`` to particle ``j`` of slice
    ``k + 1``. Use :func:`check_path` to verify the physical invariants;
    the builders in this module always do.
    """

    times: np.ndarray
    slices: tuple[TimeSlice, ...]
    links: tuple[np.ndarray, ...]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(t) < 2 or len(self.slices) != len(t) or len(self.links) != len(t) - 1:
            raise PreconditionError("a path needs K+1 times, K+1 slices and K link tables")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "slices", tuple(self.slices))
        object.__setattr__(self, "links", tuple(np.asarray(a, dtype=float).reshape(-1, 3) for a in self.links))

    @property
    def K(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def dim(self) -> int:
        return self.slices[0].positions.shape[1]

    @property
    def total_mass(self) -> float:
        return self.slices[0].total_mass

    def scale(self) -> float:
        pts = np.vstack([s.positions for s in self.slices])
        ext = float(np.max(pts.max(axis=0) - pts.min(axis=0)))
        return ext if ext > 0 else 1.0


def check_path(path: DynamicalPath, tol: float | None = None) -> None:
    """Raise :class:`PreconditionError` unless the path is internally consistent."""
    t = path.times
    if abs(t[0]) > TIME_TOL or abs(t[-1] - 1.0) > TIME_TOL or np.any(np.diff(t) <= 0):
        raise PreconditionError("grid times must increase strictly from 0 to 1")
    for s, tk in zip(path.slices, t):
        if abs(s.time - tk) > TIME_TOL:
            raise PreconditionError("slice time does not match the grid")
    mass = path.total_mass
    for k, s in enumerate(path.slices):
        if abs(s.total_mass - mass) > 1e-9 * max(1.0, mass):
            raise PreconditionError(f"slice {k} carries mass {s.total_mass}, expected {mass}")
    if tol is None:
        tol = LINK_RTOL * path.scale()
    for k, links in enumerate(path.links):
        a, b = path.slices[k], path.slices[k + 1]
        i = links[:, 0].astype(int)
        j = links[:, 1].astype(int)
        w = links[:, 2]
        if np.any(w <= 0):
            raise PreconditionError(f"link table {k} has non-positive masses")
        out = np.zeros(len(a))
        inc = np.zeros(len(b))
        np.add.at(out, i, w)
        np.add.at(inc, j, w)
        mtol = 1e-9 * max(1.0, mass)
        if not (np.allclose(out, a.masses, atol=mtol, rtol=0) and np.allclose(inc, b.masses, atol=mtol, rtol=0)):
            raise PreconditionError(f"link table {k} does not conserve mass")
        arrive = a.positions[i] + a.velocities[i] * (t[k + 1] - t[k])
        gap = np.linalg.norm(arrive - b.positions[j], axis=1)
        if len(gap) and gap.max() > tol:
            raise PreconditionError(f"link table {k}: particle does not arrive where linked (gap {gap.max():.3g})")


# -- functionals --------------------------------------------------------------

def galpha(lam: AtomicMeasure | CellWeights, alpha: float) -> float:
    """``sum_i lambda_i ** alpha`` for atomic input; +inf for a diffuse one."""
    if not 0 < alpha < 1:
        raise PreconditionError("alpha must lie in (0, 1)")
    if isinstance(lam, CellWeights):
        return INFINITE_ENERGY if lam.total_mass > 0 else 0.0
    return float(np.sum(lam.masses ** alpha))


def slice_F(s: TimeSlice, alpha: float) -> float:
    """``sum_i |v_i| m_i ** alpha``; +inf if some zero-mass atom carries flux."""
    if not 0 < alpha <= 1:
        raise PreconditionError("alpha must lie in (0, 1]")
    speed = s.speeds
    moving = speed > 0
    if np.any(moving & (s.masses <= 0)):
        return INFINITE_ENERGY
    return float(np.sum(speed[moving] * s.masses[moving] ** alpha))


def velocity_norm(s: TimeSlice, p: float) -> float:
    """``||v||_{L^p(rho)}``."""
    return float(np.sum(s.masses * s.speeds ** p)) ** (1.0 / p)


def momentum_mass(s: TimeSlice) -> float:
    """``|q|(Omega) = ||v||_{L^1(rho)}``."""
    return float(np.sum(s.masses * s.speeds))


def total_F(path: DynamicalPath, alpha: float) -> float:
    """Exact time integral of :func:`slice_F` (piecewise constant in time)."""
    total = 0.0
    for s, dt in zip(path.slices[:-1], path.dt):
        f = slice_F(s, alpha)
        if f == INFINITE_ENERGY:
            return INFINITE_ENERGY
        total += f * dt
    return float(total)


def benamou_brenier_Ap(path: DynamicalPath, p: float) -> float:
    """``int sum_i m_i |v_i|^p dt``."""
    if not p >= 1:
        raise PreconditionError("p must be >= 1")
    return float(sum(np.sum(s.masses * s.speeds ** p) * dt for s, dt in zip(path.slices[:-1], path.dt)))


def integrated_velocity_norm(path: DynamicalPath, p: float) -> float:
    """``int ||v_t||_{L^p(rho_t)} dt``."""
    return float(sum(velocity_norm(s, p) * dt for s, dt in zip(path.slices[:-1], path.dt)))


def slice_F_profile(path: DynamicalPath, alpha: float) -> np.ndarray:
    return np.array([slice_F(s, alpha) for s in path.slices])


# -- continuity equation ------------------------------------------------------

@dataclass(frozen=True)
class TestFunction:
    """A smooth ``phi(t, x)`` with its partial derivatives, vectorized over points.

    ``value(t, X)`` and ``time_derivative(t, X)`` return shape ``(n,)``,
    ``gradient(t, X)`` returns ``(n, d)``.
    """

    __test__ = False  # keep pytest from collecting this class

    value: Callable[[float, np.ndarray], np.ndarray]
    time_derivative: Callable[[float, np.ndarray], np.ndarray]
    gradient: Callable[[float, np.ndarray], np.ndarray]


def continuity_residual(path: DynamicalPath, phi: TestFunction, nodes: int = 5,
                        endpoint_tol: float = 1e-12) -> float:
    """``int [ int d_t phi drho_t + int grad phi . dq_t ] dt`` by composite Gauss quadrature.

    Vanishes for paths that solve the continuity equation; a teleporting
    particle leaves a residual equal to the jump of ``phi`` it skips.
    """
    for s in path.slices:
        for t in (0.0, 1.0):
            if np.max(np.abs(phi.value(t, s.positions))) > endpoint_tol:
                raise PreconditionError("test function must vanish at t = 0 and t = 1")
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for s, t0, t1 in zip(path.slices[:-1], path.times[:-1], path.times[1:]):
        half = 0.5 * (t1 - t0)
        acc = 0.0
        for xi, wi in zip(xg, wg):
            t = t0 + half * (xi + 1.0)
            y = s.positions + s.velocities * (t - t0)
            g = phi.time_derivative(t, y) + np.sum(phi.gradient(t, y) * s.velocities, axis=1)
            acc += wi * float(np.dot(s.masses, g))
        total += half * acc
    return float(total)


# -- constructions --------------------------------------------------------------

def _arrival_velocities(prev: TimeSlice, links: np.ndarray, n_dst: int) -> np.ndarray:
    """Mass-weighted mean of incoming velocities at each destination particle."""
    i = links[:, 0].astype(int)
    j = links[:, 1].astype(int)
    w = links[:, 2]
    mom = np.zeros((n_dst, prev.velocities.shape[1]))
    mass = np.zeros(n_dst)
    np.add.at(mom, j, w[:, None] * prev.velocities[i])
    np.add.at(mass, j, w)
    return mom / np.where(mass > 0, mass, 1.0)[:, None]


def _links_from_labels(src: np.ndarray, dst: np.ndarray, w: np.ndarray) -> np.ndarray:
    table: dict[tuple[int, int], float] = {}
    for a, b, m in zip(src.tolist(), dst.tolist(), w.tolist()):
        table[(a, b)] = table.get((a, b), 0.0) + m
    return np.array([(a, b, m) for (a, b), m in sorted(table.items())], dtype=float).reshape(-1, 3)


def merged_times(*grids: np.ndarray) -> np.ndarray:
    t = np.unique(np.concatenate(grids))
    keep = np.concatenate([[True], np.diff(t) > TIME_TOL])
    t = t[keep]
    t[0], t[-1] = 0.0, 1.0
    return t


def plan_to_path(Q: TrafficPlan, K: int = DEFAULT_GRID) -> DynamicalPath:
    """Push a traffic plan forward to ``(rho_t, q_t)``.

    The grid is the uniform ``K``-interval grid refined by every curve
    breakpoint, so each curve is affine on each interval. Curves that
    coincide over a whole interval form one particle; its velocity is the
    common velocity of its curves.
    """
    if K < 1:
        raise PreconditionError("grid size K must be >= 1")
    times = merged_times(np.linspace(0.0, 1.0, K + 1), common_times(Q))
    snap = Q.snap()
    w = np.array([c.mass for c in Q.curves])
    slices: list[TimeSlice] = []
    links: list[np.ndarray] = []
    prev_labels = None
    x0 = positions_at(Q, times[0])
    for k in range(len(times) - 1):
        dt = times[k + 1] - times[k]
        x1 = positions_at(Q, times[k + 1])
        labels = cluster_points(np.hstack([x0, x1]), snap)
        n = labels.max() + 1
        first = np.array([np.argmax(labels == g) for g in range(n)])
        mass = np.zeros(n)
        np.add.at(mass, labels, w)
        slices.append(TimeSlice(times[k], x0[first], mass, (x1[first] - x0[first]) / dt))
        if prev_labels is not None:
            links.append(_links_from_labels(prev_labels, labels, w))
        prev_labels = labels
        x0 = x1
    labels = cluster_points(x0, snap)
    n = labels.max() + 1
    first = np.array([np.argmax(labels == g) for g in range(n)])
    mass = np.zeros(n)
    np.add.at(mass, labels, w)
    last_links = _links_from_labels(prev_labels, labels, w)
    links.append(last_links)
    slices.append(TimeSlice(1.0, x0[first], mass, _arrival_velocities(slices[-1], last_links, n)))
    path = DynamicalPath(times, tuple(slices), tuple(links))
    check_path(path)
    return path


def static_path(mu: AtomicMeasure, K: int = DEFAULT_GRID) -> DynamicalPath:
    """The constant path ``rho_t = mu``, ``q_t = 0``."""
    n = len(mu)
    ident = np.column_stack([np.arange(n), np.arange(n), mu.masses]).astype(float)
    times = np.linspace(0.0, 1.0, K + 1)
    slices = tuple(TimeSlice(t, mu.positions, mu.masses, np.zeros_like(mu.positions)) for t in times)
    return DynamicalPath(times, slices, (ident,) * K)


def _check_time_map(phi: Callable[[float], float], extra: np.ndarray) -> None:
    grid = np.unique(np.concatenate([np.linspace(0.0, 1.0, 2001), extra]))
    vals = np.array([float(phi(t)) for t in grid])
    if abs(vals[0]) > 1e-12 or abs(vals[-1] - 1.0) > 1e-12:
        raise PreconditionError("time map must fix 0 and 1")
    if np.any(np.diff(vals) <= 0):
        raise PreconditionError("time map must be strictly increasing")


def reparametrize(path: DynamicalPath, phi: Callable[[float], float] | None = None,
                  constant_speed: bool = False, alpha: float | None = None,
                  substeps: int = 1) -> DynamicalPath:
    """Return ``(rho_{phi(s)}, phi'(s) q_{phi(s)})`` on a new grid.

    New grid nodes are the preimages ``phi^{-1}(t_k)`` of the old ones,
    optionally subdivided ``substeps`` times; each particle keeps its
    straight-line trajectory, so ``total_F`` is unchanged exactly. With
    ``constant_speed=True`` (requires ``alpha``), ``phi`` is chosen from the
    cumulative ``slice_F`` so that ``slice_F`` is the same on every interval;
    intervals with no motion collapse to zero duration and are removed.
    """
    if constant_speed:
        if alpha is None:
            raise PreconditionError("constant_speed needs alpha")
        return _constant_speed(path, alpha)
    if phi is None:
        raise PreconditionError("a time map is required")
    if substeps < 1:
        raise PreconditionError("substeps must be >= 1")
    _check_time_map(phi, path.times)

    def inverse(t):
        if t <= 0.0:
            return 0.0
        if t >= 1.0:
            return 1.0
        return brentq(lambda s: phi(s) - t, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    s_nodes = np.array([inverse(t) for t in path.times])
    times, slices, links = [], [], []
    for k in range(path.K):
        old = path.slices[k]
        t0, t1 = path.times[k], path.times[k + 1]
        sub_s = np.linspace(s_nodes[k], s_nodes[k + 1], substeps + 1)
        sub_t = np.array([t0] + [float(phi(s)) for s in sub_s[1:-1]] + [t1])
        n = len(old)
        ident = np.column_stack([np.arange(n), np.arange(n), old.masses]).astype(float)
        for r in range(substeps):
            pos = old.positions + old.velocities * (sub_t[r] - t0)
            vel = old.velocities * ((sub_t[r + 1] - sub_t[r]) / (sub_s[r + 1] - sub_s[r]))
            times.append(sub_s[r])
            slices.append(TimeSlice(sub_s[r], pos, old.masses, vel))
            links.append(ident if r < substeps - 1 else path.links[k])
    return _finish(path, times, slices, links)


def _finish(path, times, slices, links) -> DynamicalPath:
    last = path.slices[-1]
    vel = _arrival_velocities(slices[-1], links[-1], len(last))
    slices.append(TimeSlice(1.0, last.positions, last.masses, vel))
    times.append(1.0)
    times[0] = 0.0
    out = DynamicalPath(np.array(times), tuple(slices), tuple(links))
    check_path(out)
    return out


def _compose(first: np.ndarray, second: np.ndarray, mid_masses: np.ndarray, n_src: int, n_dst: int) -> np.ndarray:
    a = np.zeros((n_src, len(mid_masses)))
    b = np.zeros((len(mid_masses), n_dst))
    np.add.at(a, (first[:, 0].astype(int), first[:, 1].astype(int)), first[:, 2])
    np.add.at(b, (second[:, 0].astype(int), second[:, 1].astype(int)), second[:, 2])
    c = a @ (b / mid_masses[:, None])
    i, j = np.nonzero(c > 0)
    return np.column_stack([i, j, c[i, j]]).astype(float)


def _constant_speed(path: DynamicalPath, alpha: float) -> DynamicalPath:
    F = np.array([slice_F(s, alpha) for s in path.slices[:-1]])
    work = F * path.dt
    total = float(work.sum())
    if total == 0.0 or not math.isfinite(total):
        return path
    keep = work > 0
    # Drop motionless intervals by folding their slice into the next one.
    slices = list(path.slices)
    links = list(path.links)
    kept_slices, kept_links, kept_idx = [], [], []
    pending = None  # links from the last kept slice onward
    for k in range(path.K):
        if not keep[k]:
            if pending is not None:
                pending = _compose(pending, links[k], slices[k].masses, len(kept_slices[-1]), len(slices[k + 1]))
            continue
        if pending is not None:
            kept_links.append(pending)
        kept_slices.append(slices[k])
        kept_idx.append(k)
        pending = links[k]
    cum = np.concatenate([[0.0], np.cumsum(work)]) / total
    times, new_slices = [], []
    for s, k in zip(kept_slices, kept_idx):
        ds = cum[k + 1] - cum[k]
        times.append(cum[k])
        new_slices.append(TimeSlice(cum[k], s.positions, s.masses, s.velocities * (path.dt[k] / ds)))
    kept_links.append(pending)
    return _finish(path, times, new_slices, kept_links)


def instantaneous_state(path: DynamicalPath, t: float) -> TimeSlice:
    """``(rho_t, v_t)`` at one instant, velocities averaged over coincident particles.

    This is the discrete disintegration formula: particles crossing the same
    point at time ``t`` form one atom whose velocity is their mass-weighted
    mean velocity.
    """
    if not 0.0 <= t <= 1.0:
        raise PreconditionError("t must lie in [0, 1]")
    k = min(int(np.searchsorted(path.times, t, side="right")) - 1, path.K)
    s = path.slices[k]
    pos = s.positions + s.velocities * (t - path.times[k]) if k < path.K else s.positions
    labels = cluster_points(pos, LINK_RTOL * path.scale())
    n = labels.max() + 1
    mass = np.zeros(n)
    mom = np.zeros((n, pos.shape[1]))
    np.add.at(mass, labels, s.masses)
    np.add.at(mom, labels, s.masses[:, None] * s.velocities)
    first = np.array([np.argmax(labels == g) for g in range(n)])
    return TimeSlice(t, pos[first], mass, mom / mass[:, None])


def measure_at(path: DynamicalPath, k: int) -> AtomicMeasure:
    s = path.slices[k]
    return AtomicMeasure.from_arrays(s.positions, s.masses)


def discrete_metric_derivative(path: DynamicalPath, p: float) -> list[float]:
    """``W_p(rho_{t_k}, rho_{t_{k+1}}) / (t_{k+1} - t_k)`` for every interval."""
    out = []
    prev = measure_at(path, 0)
    for k, dt in enumerate(path.dt):
        nxt = measure_at(path, k + 1)
        out.append(wasserstein(prev, nxt, p) / dt)
        prev = nxt
    return out


# -- CSV trajectories ----------------------------------------------------------

def write_path_csv(path: DynamicalPath, dest: str | Path) -> None:
    d = path.dim
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "atom"] + [f"x{c}" for c in range(d)] + ["mass"] + [f"v{c}" for c in range(d)])
        for s in path.slices:
            for i in range(len(s)):
                w.writerow([repr(s.time), i, *map(repr, s.positions[i].tolist()), repr(float(s.masses[i])),
                            *map(repr, s.velocities[i].tolist())])


def read_path_csv(src: str | Path) -> DynamicalPath:
    """Load a trajectory CSV; links are rebuilt by matching arrival points.

    Mass arriving at a point is shared among the particles leaving it in
    proportion to their masses.
    """
    with open(src, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, r)) for r in reader if r]
    d = sum(1 for h in header if h.startswith("x"))
    by_time: dict[float, list] = {}
    for r in rows:
        by_time.setdefault(r[0], []).append(r)
    times = np.array(sorted(by_time))
    slices = []
    for t in times:
        rs = sorted(by_time[t], key=lambda r: r[1])
        arr = np.array(rs)
        slices.append(TimeSlice(t, arr[:, 2:2 + d], arr[:, 2 + d], arr[:, 3 + d:3 + 2 * d]))
    pts = np.vstack([s.positions for s in slices])
    ext = float(np.max(pts.max(axis=0) - pts.min(axis=0))) or 1.0
    tol = LINK_RTOL * ext
    links = []
    for k in range(len(slices) - 1):
        a, b = slices[k], slices[k + 1]
        arrive = a.positions + a.velocities * (times[k + 1] - times[k])
        labels = cluster_points(np.vstack([arrive, b.positions]), tol)
        la, lb = labels[:len(a)], labels[len(a):]
        table = []
        for g in np.unique(la):
            src = np.flatnonzero(la == g)
            dst = np.flatnonzero(lb == g)
            share = b.masses[dst] / b.masses[dst].sum() if len(dst) else np.array([])
            for i in src:
                for j, f in zip(dst, share):
                    table.append((i, j, a.masses[i] * f))
        links.append(np.array(table, dtype=float).reshape(-1, 3))
    path = DynamicalPath(times, tuple(slices), tuple(links))
    check_path(path)
    return path
