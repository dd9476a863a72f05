"""Atomic measures on a cube, dyadic grids and grid-based atomicity checks.

Points live in a half-open cube ``[o, o + L)^d``. Continuous reference
measures (Lebesgue and piecewise-constant densities) are carried as exact
dyadic cell weights rather than samples, so everything downstream stays
deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, EmptyMeasureError, ParseError, PreconditionError

# Atoms closer than MERGE_RTOL * L are treated as one atom.
MERGE_RTOL = 1e-12


@dataclass(frozen=True)
class DomainBox:
    """The cube ``[origin, origin + edge)^dim``."""

    dim: int
    edge: float = 1.0
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.dim}")
        if not (self.edge > 0 and math.isfinite(self.edge)):
            raise DomainError(f"edge length must be positive, got {self.edge}")
        origin = (0.0,) * self.dim if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != self.dim:
            raise DomainError("origin has the wrong dimension")
        object.__setattr__(self, "origin", origin)

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.origin, dtype=float)

    @property
    def diameter(self) -> float:
        return self.edge * math.sqrt(self.dim)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts - self.lower
        return np.all((rel >= 0.0) & (rel < self.edge), axis=1)

    @classmethod
    def enclosing(cls, points) -> "DomainBox":
        """Smallest-ish cube containing ``points`` with room at the open end."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = pts.min(axis=0)
        extent = float(np.max(pts.max(axis=0) - lo)) if len(pts) else 0.0
        edge = extent * (1.0 + 1e-9) + 1e-9 if extent > 0 else 1.0
        return cls(pts.shape[1], edge, tuple(lo))


def cluster_points(points: np.ndarray, radius: float) -> np.ndarray:
    """Label points so that points within ``radius`` (transitively) share a label.

    Labels are assigned in first-occurrence order.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    if n > 1:
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        ii, kk = np.nonzero(np.triu(d2 <= radius * radius, k=1))
        for i, k in zip(ii.tolist(), kk.tolist()):
            ri, rk = find(i), find(k)
            if ri != rk:
                parent[max(ri, rk)] = min(ri, rk)
    labels = np.empty(n, dtype=int)
    seen: dict[int, int] = {}
    for i in range(n):
        r = find(i)
        labels[i] = seen.setdefault(r, len(seen))
    return labels


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """A finite sum of weighted Dirac masses inside a :class:`DomainBox`.

    Build instances with :func:`make_measure` or :meth:`from_arrays`; both
    drop zero masses and merge coincident atoms.
    """

    positions: np.ndarray
    masses: np.ndarray
    box: DomainBox
    total_mass: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total_mass", float(np.sum(self.masses)))

    @classmethod
    def from_arrays(cls, positions, masses, box: DomainBox | None = None) -> "AtomicMeasure":
        pos = np.atleast_2d(np.asarray(positions, dtype=float))
        m = np.asarray(masses, dtype=float).reshape(-1)
        if len(pos) != len(m):
            raise PreconditionError("positions and masses differ in length")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise PreconditionError("masses must be finite and non-negative")
        if not np.all(np.isfinite(pos)):
            raise DomainError("positions must be finite")
        if box is None:
            keep = m > 0
            box = DomainBox.enclosing(pos[keep] if keep.any() else pos)
        if pos.shape[1] != box.dim:
            raise DomainError(f"points have dimension {pos.shape[1]}, box has {box.dim}")
        inside = box.contains(pos)
        if not inside.all():
            bad = pos[~inside][0]
            raise DomainError(f"point {bad.tolist()} lies outside the box")
        keep = m > 0
        if not keep.any():
            raise EmptyMeasureError("all masses are zero")
        pos, m = pos[keep], m[keep]
        labels = cluster_points(pos, MERGE_RTOL * box.edge)
        k = labels.max() + 1
        merged = np.zeros(k)
        np.add.at(merged, labels, m)
        first = np.array([np.argmax(labels == i) for i in range(k)])
        return cls(pos[first].copy(), merged, box)

    @property
    def dim(self) -> int:
        return self.box.dim

    def __len__(self) -> int:
        return len(self.masses)

    def scaled(self, factor: float) -> "AtomicMeasure":
        return AtomicMeasure(self.positions.copy(), self.masses * factor, self.box)

    def with_box(self, box: DomainBox) -> "AtomicMeasure":
        return AtomicMeasure.from_arrays(self.positions, self.masses, box)

    def pairs(self) -> list[tuple[tuple[float, ...], float]]:
        return [(tuple(p), float(w)) for p, w in zip(self.positions.tolist(), self.masses)]

    def __repr__(self):
        return f"AtomicMeasure(n={len(self)}, dim={self.dim}, total={self.total_mass:.6g})"


def make_measure(points_masses: Iterable[tuple[Sequence[float], float]],
                 box: DomainBox | None = None) -> AtomicMeasure:
    """Build an :class:`AtomicMeasure` from ``(point, mass)`` pairs.

    Zero masses are dropped and atoms closer than ``1e-12 * L`` are merged
    by adding their masses. Without a box, an enclosing cube is inferred.
    """
    items = list(points_masses)
    if not items:
        raise EmptyMeasureError("no atoms given")
    pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p, _ in items]
    masses = [float(w) for _, w in items]
    return AtomicMeasure.from_arrays(np.vstack(pts), masses, box)


@dataclass(frozen=True)
class DyadicIndex:
    """Cell ``z`` of the level-``j`` dyadic partition, ``0 <= z_i <= 2^j - 1``."""

    level: int
    cell: tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise PreconditionError("level must be non-negative")
        top = 2 ** self.level - 1
        if any(c < 0 or c > top for c in self.cell):
            raise PreconditionError(f"cell {self.cell} out of range for level {self.level}")

    def center(self, box: DomainBox) -> np.ndarray:
        h = box.edge / 2 ** self.level
        return box.lower + (np.asarray(self.cell, dtype=float) + 0.5) * h


def cell_indices(positions: np.ndarray, box: DomainBox, level: int) -> np.ndarray:
    """Integer dyadic cell coordinates of each point at ``level``."""
    n = 2 ** level
    rel = (np.atleast_2d(positions) - box.lower) / box.edge
    return np.clip(np.floor(rel * n).astype(np.int64), 0, n - 1)


def cell_centers(box: DomainBox, level: int, cells: np.ndarray) -> np.ndarray:
    return box.lower + (np.asarray(cells, dtype=float) + 0.5) * (box.edge / 2 ** level)


@dataclass(frozen=True, eq=False)
class CellWeights:
    """A piecewise-constant density given by its masses on level-``level`` cells.

    ``weights`` has shape ``(2**level,) * dim``. Finer levels split each cell
    uniformly, so :meth:`lebesgue` (level 0) represents the uniform measure
    exactly at every resolution.
    """

    box: DomainBox
    level: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (2 ** self.level,) * self.box.dim:
            raise PreconditionError(f"weights shape {w.shape} does not match level {self.level}")
        if np.any(w < 0):
            raise PreconditionError("cell weights must be non-negative")
        object.__setattr__(self, "weights", w)

    @classmethod
    def lebesgue(cls, box: DomainBox, total_mass: float = 1.0) -> "CellWeights":
        return cls(box, 0, np.full((1,) * box.dim, float(total_mass)))

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def masses_at(self, j: int) -> np.ndarray:
        """Exact cell masses on the level-``j`` partition."""
        w = self.weights
        if j <= self.level:
            f = 2 ** (self.level - j)
            shape = []
            for _ in range(self.dim):
                shape += [2 ** j, f]
            return w.reshape(shape).sum(axis=tuple(range(1, 2 * self.dim, 2)))
        f = 2 ** (j - self.level)
        out = w / f ** self.dim
        for ax in range(self.dim):
            out = np.repeat(out, f, axis=ax)
        return out

    def scaled(self, factor: float) -> "CellWeights":
        return CellWeights(self.box, self.level, self.weights * factor)


def dyadic_approximation(mu: AtomicMeasure | CellWeights, j: int) -> AtomicMeasure:
    """Move the mass of every level-``j`` dyadic cell to the cell center.

    Empty cells produce no atom; the total mass is preserved.
    """
    if j < 0:
        raise PreconditionError("level must be non-negative")
    box = mu.box
    if isinstance(mu, CellWeights):
        masses = mu.masses_at(j)
        cells = np.argwhere(masses > 0)
        return AtomicMeasure(cell_centers(box, j, cells), masses[tuple(cells.T)].copy(), box)
    cells = cell_indices(mu.positions, box, j)
    uniq, inverse = np.unique(cells, axis=0, return_inverse=True)
    m = np.zeros(len(uniq))
    np.add.at(m, inverse.reshape(-1), mu.masses)
    return AtomicMeasure(cell_centers(box, j, uniq), m, box)


def _axis_overlap(k: int, n: int) -> np.ndarray:
    """Fraction of each of ``n`` fine cells lying in each of ``k`` grid cells."""
    a = np.arange(k)[:, None] / k
    b = (np.arange(k)[:, None] + 1) / k
    c = np.arange(n)[None, :] / n
    d = (np.arange(n)[None, :] + 1) / n
    return np.clip(np.minimum(b, d) - np.maximum(a, c), 0.0, None) * n


def grid_masses(mu: AtomicMeasure | CellWeights, k: int) -> np.ndarray:
    """Masses of the ``k**d`` cells of a regular grid of step ``L/k`` on the box."""
    if k < 1:
        raise PreconditionError("grid resolution must be >= 1")
    if isinstance(mu, CellWeights):
        out = mu.weights
        over = _axis_overlap(k, 2 ** mu.level)
        for ax in range(mu.dim):
            out = np.moveaxis(np.tensordot(over, out, axes=([1], [ax])), 0, ax)
        return out
    rel = (mu.positions - mu.box.lower) / mu.box.edge
    idx = np.clip(np.floor(rel * k).astype(np.int64), 0, k - 1)
    out = np.zeros((k,) * mu.dim)
    np.add.at(out, tuple(idx.T), mu.masses)
    return out


def grid_galpha_estimate(mu: AtomicMeasure | CellWeights, k: int, alpha: float) -> float:
    """Sum of ``cell_mass ** alpha`` over a regular ``k``-per-axis grid.

    Bounded in ``k`` exactly when the measure is atomic; for a diffuse
    measure it grows like ``k ** (d * (1 - alpha))``.
    """
    if not 0 < alpha < 1:
        raise PreconditionError("alpha must lie in (0, 1)")
    m = grid_masses(mu, k)
    m = m[m > 0]
    return float(np.sum(m ** alpha))


# -- serialization -----------------------------------------------------------

def _atoms_to_list(mu: AtomicMeasure) -> list[dict]:
    return [{"x": p, "m": float(w)} for p, w in zip(mu.positions.tolist(), mu.masses)]


def _box_to_dict(box: DomainBox) -> dict:
    out = {"dim": box.dim, "L": box.edge}
    if any(o != 0.0 for o in box.origin):
        out["origin"] = list(box.origin)
    return out


def measure_to_dict(mu: AtomicMeasure) -> dict:
    return {**_box_to_dict(mu.box), "atoms": _atoms_to_list(mu)}


def _box_from_dict(data: dict, where: str) -> DomainBox:
    try:
        dim = int(data["dim"])
        edge = float(data["L"])
    except KeyError as exc:
        raise ParseError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: bad dim/L: {exc}") from None
    return DomainBox(dim, edge, data.get("origin"))


def _atoms_from_list(atoms, box: DomainBox, where: str) -> AtomicMeasure:
    if not isinstance(atoms, list) or not atoms:
        raise ParseError(f"{where}: 'atoms' must be a non-empty list")
    pts, ms = [], []
    for i, a in enumerate(atoms):
        try:
            x = [float(v) for v in a["x"]]
            m = float(a["m"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{where}: atom {i}: malformed ({exc})") from None
        if len(x) != box.dim:
            raise ParseError(f"{where}: atom {i}: expected {box.dim} coordinates, got {len(x)}")
        pts.append(x)
        ms.append(m)
    return AtomicMeasure.from_arrays(np.array(pts), np.array(ms), box)


def measure_from_dict(data: dict) -> AtomicMeasure:
    box = _box_from_dict(data, "measure")
    return _atoms_from_list(data.get("atoms"), box, "measure")


def instance_to_dict(mu0: AtomicMeasure, mu1: AtomicMeasure) -> dict:
    return {**_box_to_dict(mu0.box), "mu0": _atoms_to_list(mu0), "mu1": _atoms_to_list(mu1)}


def instance_from_dict(data: dict) -> tuple[AtomicMeasure, AtomicMeasure]:
    box = _box_from_dict(data, "instance")
    for key in ("mu0", "mu1"):
        if key not in data:
            raise ParseError(f"instance: missing field {key!r}")
    return (_atoms_from_list(data["mu0"], box, "instance.mu0"),
            _atoms_from_list(data["mu1"], box, "instance.mu1"))


def save_json(obj: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
