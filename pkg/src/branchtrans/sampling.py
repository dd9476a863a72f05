"""Seeded random instances: measures, slices, traffic plans.

Everything draws from a :class:`numpy.random.Generator`; positions are
uniform in the box and masses come from a symmetric Dirichlet law scaled to
the requested total.
"""

from __future__ import annotations

import numpy as np

from .dynamical_paths import TimeSlice
from .geometry import AtomicMeasure, DomainBox
from .traffic_plans import MassCurve, TrafficPlan


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream per trial, so results do not depend on scheduling."""
    return np.random.default_rng([seed, trial])


def random_measure(rng: np.random.Generator, n: int, box: DomainBox | None = None,
                   total: float = 1.0, concentration: float = 1.0) -> AtomicMeasure:
    box = box or DomainBox(2)
    pts = box.lower + rng.random((n, box.dim)) * box.edge
    masses = rng.dirichlet(np.full(n, concentration)) * total
    return AtomicMeasure.from_arrays(pts, masses, box)


def random_instance(rng: np.random.Generator, max_atoms: int = 3, box: DomainBox | None = None,
                    min_atoms: int = 1) -> tuple[AtomicMeasure, AtomicMeasure]:
    n = int(rng.integers(min_atoms, max_atoms + 1))
    m = int(rng.integers(min_atoms, max_atoms + 1))
    return random_measure(rng, n, box), random_measure(rng, m, box)


def random_slice(rng: np.random.Generator, n: int | None = None, dim: int = 2) -> TimeSlice:
    """Slice with positive masses summing to one and Gaussian velocities."""
    n = n or int(rng.integers(1, 12))
    masses = rng.dirichlet(np.full(n, 0.5))
    masses = np.maximum(masses, 1e-12)
    masses /= masses.sum()
    vel = rng.normal(size=(n, dim)) * rng.choice([1e-3, 1.0, 10.0])
    return TimeSlice(float(rng.random()), rng.random((n, dim)), masses, vel)


def random_lattice_plan(rng: np.random.Generator, n_curves: int | None = None, dim: int = 2,
                        lattice: int = 3, n_times: int = 4) -> TrafficPlan:
    """Curves through lattice points at lattice times, so overlaps are frequent."""
    n_curves = n_curves or int(rng.integers(1, 7))
    grid_t = np.linspace(0.0, 1.0, n_times + 1)
    curves = []
    for _ in range(n_curves):
        inner = grid_t[1:-1][rng.random(n_times - 1) < 0.5]
        times = np.concatenate([[0.0], inner, [1.0]])
        pts = rng.integers(0, lattice, size=(len(times), dim)) / (lattice - 1)
        curves.append(MassCurve(times, pts, float(rng.uniform(0.05, 1.0))))
    return TrafficPlan(tuple(curves))


def random_time_map(rng: np.random.Generator, pieces: int = 4):
    """Strictly increasing piecewise-linear bijection of [0, 1]."""
    knots = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, pieces - 1)), [1.0]])
    vals = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, pieces - 1)), [1.0]])
    vals = np.maximum.accumulate(vals + np.arange(len(vals)) * 1e-6)
    vals /= vals[-1]
    return lambda t: float(np.interp(t, knots, vals))
