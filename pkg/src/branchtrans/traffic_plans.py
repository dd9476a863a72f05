"""Finite traffic plans: weighted piecewise-linear curves on [0, 1].

Two multiplicities are evaluated exactly:

* spatial, ``|x|_Q``: mass of all curves whose trace contains ``x``;
* synchronized, ``|(x, t)|_Q``: mass of curves sitting at ``x`` at time ``t``.

``energy_E`` integrates the first along each curve, ``energy_C`` the second.
Both are computed by splitting segments where the overlap pattern changes,
so the integrands are constant on each piece and no quadrature is needed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError, PreconditionError
from .geometry import AtomicMeasure, cluster_points

# Overlap/coincidence radius, relative to the extent of the plan.
SNAP_RTOL = 1e-9
TIME_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MassCurve:
    """Piecewise-linear curve through ``points[i]`` at ``times[i]``, carrying ``mass``."""

    times: np.ndarray
    points: np.ndarray
    mass: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        x = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(t) < 2 or len(t) != len(x):
            raise PreconditionError("a curve needs at least two breakpoints with matching times")
        if abs(t[0]) > TIME_TOL or abs(t[-1] - 1.0) > TIME_TOL or np.any(np.diff(t) <= 0):
            raise PreconditionError("breakpoint times must increase strictly from 0 to 1")
        if not self.mass > 0:
            raise PreconditionError("curve mass must be positive")
        t = t.copy()
        t[0], t[-1] = 0.0, 1.0
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "mass", float(self.mass))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def at(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.points[:, c]) for c in range(self.dim)])

    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def reparametrized(self, phi_inverse) -> "MassCurve":
        """Curve ``s -> sigma(phi(s))`` given the inverse time map."""
        s = np.array([float(phi_inverse(t)) for t in self.times])
        return MassCurve(s, self.points, self.mass)


@dataclass(frozen=True, eq=False)
class TrafficPlan:
    curves: tuple[MassCurve, ...]

    def __post_init__(self):
        curves = tuple(self.curves)
        if not curves:
            raise PreconditionError("a traffic plan needs at least one curve")
        if len({c.dim for c in curves}) != 1:
            raise PreconditionError("curves live in different dimensions")
        object.__setattr__(self, "curves", curves)

    @property
    def dim(self) -> int:
        return self.curves[0].dim

    @property
    def total_mass(self) -> float:
        return float(sum(c.mass for c in self.curves))

    def extent(self) -> float:
        pts = np.vstack([c.points for c in self.curves])
        ext = float(np.max(pts.max(axis=0) - pts.min(axis=0)))
        return ext if ext > 0 else 1.0

    def snap(self) -> float:
        return SNAP_RTOL * self.extent()

    def __len__(self):
        return len(self.curves)


def endpoint_marginals(Q: TrafficPlan) -> tuple[AtomicMeasure, AtomicMeasure]:
    """The pushforwards of ``Q`` under evaluation at ``t = 0`` and ``t = 1``."""
    starts = np.array([c.points[0] for c in Q.curves])
    ends = np.array([c.points[-1] for c in Q.curves])
    w = np.array([c.mass for c in Q.curves])
    return AtomicMeasure.from_arrays(starts, w), AtomicMeasure.from_arrays(ends, w)


def _point_segment_distance(x, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    lam = 0.0 if denom == 0 else min(max(float((x - a) @ ab) / denom, 0.0), 1.0)
    return float(np.linalg.norm(a + lam * ab - x))


def _on_trace(curve: MassCurve, x: np.ndarray, snap: float) -> bool:
    pts = curve.points
    return any(_point_segment_distance(x, pts[s], pts[s + 1]) <= snap for s in range(len(pts) - 1))


def spatial_multiplicity(Q: TrafficPlan, x: Sequence[float]) -> float:
    """``|x|_Q``: total mass of curves whose trace passes through ``x``."""
    x = np.asarray(x, dtype=float)
    snap = Q.snap()
    return float(sum(c.mass for c in Q.curves if _on_trace(c, x, snap)))


def synchronized_multiplicity(Q: TrafficPlan, x: Sequence[float], t: float) -> float:
    """``|(x, t)|_Q``: total mass of curves located at ``x`` at time ``t``."""
    if not 0.0 <= t <= 1.0:
        raise PreconditionError("t must lie in [0, 1]")
    x = np.asarray(x, dtype=float)
    snap = Q.snap()
    return float(sum(c.mass for c in Q.curves if np.linalg.norm(c.at(t) - x) <= snap))


def _collinear_cover(a, b, c, d, snap):
    """Parameter interval of segment ``[a, b]`` covered by segment ``[c, d]``.

    Returns ``None`` unless ``[c, d]`` lies on the line through ``a, b`` and
    overlaps ``[a, b]`` in a piece of positive length.
    """
    ab = b - a
    len2 = float(ab @ ab)
    if len2 == 0.0:
        return None
    for q in (c, d):
        r = q - a
        lam = float(r @ ab) / len2
        if np.linalg.norm(r - lam * ab) > snap:
            return None
    lc = float((c - a) @ ab) / len2
    ld = float((d - a) @ ab) / len2
    lo, hi = max(min(lc, ld), 0.0), min(max(lc, ld), 1.0)
    if (hi - lo) * np.sqrt(len2) <= snap:
        return None
    return lo, hi


def energy_E(Q: TrafficPlan, alpha: float) -> float:
    """``sum_i w_i int |sigma_i(t)|_Q^(alpha-1) |sigma_i'(t)| dt``.

    Each segment is cut at the endpoints of every collinear overlap with any
    curve; isolated transversal crossings have zero length and are ignored.
    """
    if not 0 < alpha <= 1:
        raise PreconditionError("alpha must lie in (0, 1]")
    snap = Q.snap()
    curves = Q.curves
    segs = [[(c.points[s], c.points[s + 1]) for s in range(len(c.points) - 1)] for c in curves]
    total = 0.0
    for i, ci in enumerate(curves):
        acc = 0.0
        for a, b in segs[i]:
            seg_len = float(np.linalg.norm(b - a))
            if seg_len <= snap:
                continue
            if alpha == 1.0:
                acc += seg_len
                continue
            covers = []  # (curve index, lo, hi)
            for k, sk in enumerate(segs):
                if k == i:
                    continue
                for c, d in sk:
                    iv = _collinear_cover(a, b, c, d, snap)
                    if iv is not None:
                        covers.append((k, iv[0], iv[1]))
            cuts = sorted({0.0, 1.0, *(lo for _, lo, _ in covers), *(hi for _, _, hi in covers)})
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                if hi - lo <= 0:
                    continue
                mid = 0.5 * (lo + hi)
                others = {k for k, clo, chi in covers if clo <= mid <= chi}
                mult = ci.mass + sum(curves[k].mass for k in others)
                acc += mult ** (alpha - 1.0) * (hi - lo) * seg_len
        total += ci.mass * acc
    return float(total)


def common_times(Q: TrafficPlan) -> np.ndarray:
    """Sorted union of all breakpoint times, with near-duplicates dropped."""
    t = np.unique(np.concatenate([c.times for c in Q.curves]))
    keep = np.concatenate([[True], np.diff(t) > TIME_TOL])
    t = t[keep]
    t[-1] = 1.0
    return t


def positions_at(Q: TrafficPlan, t: float) -> np.ndarray:
    return np.array([c.at(t) for c in Q.curves])


def energy_C(Q: TrafficPlan, alpha: float) -> float:
    """``sum_i w_i int |(sigma_i(t), t)|_Q^(alpha-1) |sigma_i'(t)| dt``.

    On each interval of the common time refinement all curves are affine,
    so two curves either coincide on the whole interval or meet at no more
    than one instant. Grouping by position at both interval ends therefore
    gives the synchronized multiplicity exactly.
    """
    if not 0 < alpha <= 1:
        raise PreconditionError("alpha must lie in (0, 1]")
    snap = Q.snap()
    w = np.array([c.mass for c in Q.curves])
    times = common_times(Q)
    total = np.zeros(len(w))
    x0 = positions_at(Q, times[0])
    for t1 in times[1:]:
        x1 = positions_at(Q, t1)
        step = np.linalg.norm(x1 - x0, axis=1)
        if alpha == 1.0:
            total += step
        else:
            labels = cluster_points(np.hstack([x0, x1]), snap)
            group = np.zeros(labels.max() + 1)
            np.add.at(group, labels, w)
            total += group[labels] ** (alpha - 1.0) * step
        x0 = x1
    return float(np.dot(w, total))


def plan_length_cost(Q: TrafficPlan) -> float:
    """``sum_i w_i * length(sigma_i)``, both energies at ``alpha = 1``."""
    return float(sum(c.mass * c.length() for c in Q.curves))


# -- serialization -----------------------------------------------------------

def plan_to_dict(Q: TrafficPlan) -> dict:
    return {"dim": Q.dim,
            "curves": [{"mass": c.mass, "t": c.times.tolist(), "x": c.points.tolist()} for c in Q.curves]}


def plan_from_dict(data: dict) -> TrafficPlan:
    curves = data.get("curves")
    if not isinstance(curves, list) or not curves:
        raise ParseError("plan: 'curves' must be a non-empty list")
    out = []
    for i, c in enumerate(curves):
        try:
            out.append(MassCurve(np.array(c["t"], dtype=float), np.array(c["x"], dtype=float), float(c["mass"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"plan: curve {i}: {exc}") from None
    return TrafficPlan(tuple(out))


def save_plan(Q: TrafficPlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(Q), indent=2) + "\n")
