"""Dyadic hierarchical upper bounds and the Wasserstein sandwich.

The hierarchical network starts from the level-``j`` dyadic approximation
and lets every cell center feed the centers of its ``2^d`` children, level
after level. A child center sits ``L sqrt(d) / 2^(k+2)`` away from its
level-``k`` parent, so level ``k`` costs ``sum_children m^alpha`` times that.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import PreconditionError, PropertyFailure, ThresholdError
from ..exact_ot import plan_alpha_cost, solve_kantorovich, wasserstein
from ..geometry import AtomicMeasure, CellWeights, cell_centers, cell_indices, dyadic_approximation
from .dalpha import ENUMERATE_CAP, compute_dalpha, dalpha_lower_bound
from .graph import net_terminals

MAX_LEVEL = 60
SANDWICH_SLACK = 1e-9


def _check_threshold(d: int, alpha: float) -> None:
    if not 0 < alpha <= 1:
        raise PreconditionError("alpha must lie in (0, 1]")
    if alpha <= 1.0 - 1.0 / d:
        raise ThresholdError(f"alpha = {alpha} is not above the threshold 1 - 1/d = {1 - 1 / d}")


def dyadic_rhs_bound(d: int, alpha: float, L: float, j: int) -> float:
    """``2^((d(1-alpha)-1) j) / (2^(1-d(1-alpha)) - 1) * L sqrt(d) / 2``."""
    _check_threshold(d, alpha)
    beta = d * (1.0 - alpha)
    return 2.0 ** ((beta - 1.0) * j) / (2.0 ** (1.0 - beta) - 1.0) * L * math.sqrt(d) / 2.0


def _level_step(box, k: int) -> float:
    """Distance from a level-``k`` center to any of its children's centers."""
    return box.edge * math.sqrt(box.dim) / 2 ** (k + 2)


def _cell_level_cost(mu: CellWeights, k: int, alpha: float) -> float:
    m = mu.masses_at(k + 1)
    return float(np.sum(m[m > 0] ** alpha)) * _level_step(mu.box, k)


def _atomic_levels(mu: AtomicMeasure, j: int, alpha: float, stop: int | None):
    """Per-level costs for an atomic measure, plus the final direct-edge cost.

    Without ``stop``, refinement ends once no cell holds two atoms and the
    mass then goes straight from each cell center to its atom. With
    ``stop`` the hierarchy is cut at that level and no tail is added.
    """
    costs = []
    k = j
    while True:
        cells = cell_indices(mu.positions, mu.box, k)
        if stop is not None and k >= stop:
            return costs, 0.0
        uniq, inv = np.unique(cells, axis=0, return_inverse=True)
        if stop is None and (len(uniq) == len(mu) or k >= MAX_LEVEL):
            centers = cell_centers(mu.box, k, uniq)[inv.reshape(-1)]
            return costs, float(np.sum(mu.masses ** alpha * np.linalg.norm(mu.positions - centers, axis=1)))
        child = cell_indices(mu.positions, mu.box, k + 1)
        _, cinv = np.unique(child, axis=0, return_inverse=True)
        m = np.zeros(cinv.max() + 1)
        np.add.at(m, cinv.reshape(-1), mu.masses)
        costs.append(float(np.sum(m ** alpha)) * _level_step(mu.box, k))
        k += 1


def dyadic_upper_bound(mu: AtomicMeasure | CellWeights, j: int, alpha: float) -> float:
    """Cost of the hierarchical network from ``a_j(mu)`` down to ``mu``.

    For cell weights the levels below the stored resolution split mass
    uniformly, and their infinite sum is taken in closed form.
    """
    if j < 0:
        raise PreconditionError("level must be non-negative")
    d = mu.box.dim
    _check_threshold(d, alpha)
    if isinstance(mu, CellWeights):
        top = max(j, mu.level)
        total = sum(_cell_level_cost(mu, k, alpha) for k in range(j, top))
        beta = d * (1.0 - alpha)
        m = mu.masses_at(top)
        ratio = 2.0 ** (beta - 1.0)
        tail = float(np.sum(m[m > 0] ** alpha)) * mu.box.edge * math.sqrt(d) / 2 ** (top + 1) * ratio / (1.0 - ratio)
        return total + tail
    costs, tail = _atomic_levels(mu, j, alpha, None)
    return float(sum(costs) + tail)


def dyadic_truncated_cost(mu: AtomicMeasure | CellWeights, j: int, alpha: float, j0: int = 0) -> float:
    """Cost of the hierarchy between levels ``j0`` and ``j`` only.

    Defined for every ``alpha`` in (0, 1]; below the threshold it grows
    without bound in ``j`` for diffuse measures.
    """
    if not 0 < alpha <= 1:
        raise PreconditionError("alpha must lie in (0, 1]")
    if not 0 <= j0 <= j:
        raise PreconditionError("need 0 <= j0 <= j")
    if isinstance(mu, CellWeights):
        return float(sum(_cell_level_cost(mu, k, alpha) for k in range(j0, j)))
    costs, _ = _atomic_levels(mu, j0, alpha, j)
    return float(sum(costs))


def log2_slope(levels, values) -> float:
    """Least-squares slope of ``log2(values)`` against ``levels``."""
    x = np.asarray(levels, dtype=float)
    y = np.log2(np.asarray(values, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class DyadicRecord:
    j: int
    upper_mu0: float
    upper_mu1: float
    middle: float
    route: float
    rhs: float


@dataclass
class BoundReport:
    alpha: float
    p: float
    dim: int
    lower: float
    upper: float
    upper_exact: bool
    wp: float
    exponent: float
    ratio: float
    records: list[DyadicRecord] = field(default_factory=list)
    chosen_j: int | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = repr(v)
        return out


def dyadic_route(mu0: AtomicMeasure, mu1: AtomicMeasure, alpha: float, j: int) -> DyadicRecord:
    """Upper bound through the level-``j`` approximations of both measures.

    The middle leg routes every entry of an optimal ``W_{1/alpha}`` vertex
    plan between ``a_j(mu0)`` and ``a_j(mu1)`` along its own straight edge.
    """
    u0 = dyadic_upper_bound(mu0, j, alpha)
    u1 = dyadic_upper_bound(mu1, j, alpha)
    a0, a1 = dyadic_approximation(mu0, j), dyadic_approximation(mu1, j)
    middle = plan_alpha_cost(solve_kantorovich(a0, a1, 1.0 / alpha).plan, alpha)
    rhs = dyadic_rhs_bound(mu0.box.dim, alpha, mu0.box.edge, j)
    return DyadicRecord(j, u0, u1, middle, u0 + middle + u1, rhs)


def sandwich_report(mu0: AtomicMeasure, mu1: AtomicMeasure, alpha: float, p: float,
                    j_range: tuple[int, int] = (0, 6)) -> BoundReport:
    """Lower bound ``W_{1/alpha}``, an upper bound for ``d_alpha`` and the ratio
    ``d_alpha / W_p^(d(alpha-1)+1)``, plus per-level dyadic routes.

    Both measures must share a domain box for the dyadic records.
    """
    d = mu0.dim
    _check_threshold(d, alpha)
    if p < 1.0 / alpha:
        raise PreconditionError(f"need p >= 1/alpha = {1 / alpha}")
    lower = dalpha_lower_bound(mu0, mu1, alpha)
    n_terms = len(net_terminals(mu0, mu1)[0])
    res = compute_dalpha(mu0, mu1, alpha, "enumerate" if n_terms <= ENUMERATE_CAP else "heuristic")
    wp = wasserstein(mu0, mu1, p)
    exponent = d * (alpha - 1.0) + 1.0
    ratio = 0.0 if res.value == 0.0 else (res.value / wp ** exponent if wp > 0 else math.inf)
    records = []
    if mu0.box == mu1.box:
        records = [dyadic_route(mu0, mu1, alpha, j) for j in range(j_range[0], j_range[1] + 1)]
    chosen = min(records, key=lambda r: (r.route, r.j)).j if records else None
    report = BoundReport(alpha, float(p), d, lower, res.value, res.exact, wp, exponent, ratio, records, chosen)
    for upper in [res.value] + [r.route for r in records]:
        if lower > upper + SANDWICH_SLACK * max(1.0, upper):
            raise PropertyFailure(f"lower bound {lower!r} exceeds upper bound {upper!r}")
    return report
