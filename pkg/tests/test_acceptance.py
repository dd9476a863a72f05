"""The twelve acceptance criteria, each at its stated tolerance.

Every criterion records a PASS/FAIL line; ``conftest.py`` prints them at the
end of the pytest run, and running this file directly prints them too.
"""

import functools
import math
import time

import numpy as np
import pytest

from branchtrans.branched import (SteinerTopology, compute_dalpha, dyadic_rhs_bound, dyadic_truncated_cost,
                                  dyadic_upper_bound, gilbert_energy, log2_slope,
                                  optimize_branch_points)
from branchtrans.dynamical_paths import (DynamicalPath, TestFunction, TimeSlice, continuity_residual, momentum_mass,
                                         plan_to_path, reparametrize, slice_F, slice_F_profile, total_F,
                                         velocity_norm)
from branchtrans.exact_ot import assert_acyclic_support, cost_matrix, solve_kantorovich, wasserstein
from branchtrans.geometry import AtomicMeasure, CellWeights, DomainBox
from branchtrans.sampling import random_instance, random_lattice_plan, random_measure, random_slice, trial_rng
from branchtrans.traffic_plans import MassCurve, TrafficPlan, energy_C, energy_E

from oracles import brute_force_vertex_cost, grid_search_branch_point, symmetric_branch_cos

RESULTS: dict[int, list[tuple[bool, str]]] = {}
TITLES = {
    1: "worked Y instance",
    2: "equivalence chain",
    3: "sandwich lower bound",
    4: "dyadic bound",
    5: "exponent scaling",
    6: "slice inequalities",
    7: "E vs C",
    8: "reparametrization invariance",
    9: "acyclic plans",
    10: "continuity residual",
    11: "Gilbert angle",
    12: "mass scaling",
}

BOX = DomainBox(2, 2.0, (-0.5, -0.5))
Y_SINKS = [(1.0, 0.3), (1.0, -0.3)]
FLOAT_SLACK = 1e-12  # relative rounding allowance where the two sides are equal in exact arithmetic


def criterion(n):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except Exception as exc:
                RESULTS.setdefault(n, []).append((False, f"{type(exc).__name__}: {exc}".splitlines()[0]))
                raise
            RESULTS.setdefault(n, []).append((True, detail or ""))
        return run
    return wrap


def summary_lines() -> list[str]:
    lines = []
    for n, title in TITLES.items():
        parts = RESULTS.get(n)
        if not parts:
            lines.append(f"criterion {n:2d} ({title}): NOT RUN")
            continue
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts if d)
        lines.append(f"criterion {n:2d} ({title}): {'PASS' if ok else 'FAIL'}  {detail}")
    return lines


def y_instance():
    return (AtomicMeasure.from_arrays([(0.0, 0.0)], [1.0], BOX),
            AtomicMeasure.from_arrays(Y_SINKS, [0.5, 0.5], BOX))


@criterion(1)
def test_c01_worked_y_instance():
    mu0, mu1 = y_instance()
    t0 = time.perf_counter()
    res = compute_dalpha(mu0, mu1, 0.5, "enumerate")
    elapsed = time.perf_counter() - t0
    (b,) = res.graph.steiner_points
    oracle_b, oracle_e = grid_search_branch_point(0.5, (0, 0), Y_SINKS, [0.5, 0.5], step=1e-4)
    assert abs(res.value - 1.3) <= 1e-6
    assert np.all(np.abs(b - [0.7, 0.0]) <= 1e-5)
    assert np.all(np.abs(oracle_b - b) <= 1e-4) and abs(oracle_e - res.value) <= 1e-6
    assert elapsed < 1.0
    return f"d={res.value:.10f} b=({b[0]:.7f},{b[1]:.1e}) grid=({oracle_b[0]:.4f},{oracle_b[1]:.4f}) {elapsed:.3f}s"


@criterion(2)
def test_c02_equivalence_chain():
    res = compute_dalpha(*y_instance(), 0.5)
    Q = res.plan()
    vals = {"E": energy_E(Q, 0.5), "C": energy_C(Q, 0.5), "F": total_F(plan_to_path(Q), 0.5),
            "G": gilbert_energy(res.graph, 0.5)}
    for v in vals.values():
        assert abs(v - 1.3) <= 1e-6
    spread = max(vals.values()) - min(vals.values())
    assert spread <= 1e-6
    return " ".join(f"{k}={v:.10f}" for k, v in vals.items())


@criterion(3)
def test_c03_sandwich_lower_bound():
    alphas = (0.6, 0.75, 0.9)
    t0 = time.perf_counter()
    worst, n = -math.inf, 200
    violations = 0
    for i in range(n):
        mu0, mu1 = random_instance(trial_rng(2024, i), 3, BOX)
        alpha = alphas[i % 3]
        gap = wasserstein(mu0, mu1, 1 / alpha) - compute_dalpha(mu0, mu1, alpha).value
        worst = max(worst, gap)
        violations += gap > 1e-9
    elapsed = time.perf_counter() - t0
    assert violations == 0 and elapsed < 60
    return f"{n} instances, 0 violations, max(W-d)={worst:.3g}, {elapsed:.1f}s"


LEB = CellWeights.lebesgue(DomainBox(2))


@criterion(4)
def test_c04_dyadic_bound_cases():
    worst = -math.inf
    for alpha in (0.85, 0.9, 0.95):
        for j in range(1, 6):
            ub, rhs = dyadic_upper_bound(LEB, j, alpha), dyadic_rhs_bound(2, alpha, 1.0, j)
            assert ub <= rhs * (1 + FLOAT_SLACK)
            worst = max(worst, ub / rhs - 1)
    return f"15/15 cases ub<=rhs (max ub/rhs-1 = {worst:.2g})"


@criterion(4)
@pytest.mark.xfail(strict=True, reason="stated literal disagrees with the formula it quotes; see notes")
def test_c04_rhs_literal():
    direct = 2 ** -1.6 / (2 ** 0.8 - 1) * math.sqrt(2) / 2
    value = dyadic_rhs_bound(2, 0.9, 1.0, 2)
    assert math.isclose(value, direct, rel_tol=1e-15)
    assert abs(value - 0.314758) <= 1e-6, f"RHS(2,0.9,1,2) = {value:.7f}, literal 0.314758 is off by {abs(value - 0.314758):.2e}"


@criterion(5)
def test_c05_exponent_scaling():
    js = list(range(1, 7))
    slope = log2_slope(js, [dyadic_upper_bound(LEB, j, 0.9) for j in js])
    assert slope <= 2 * (1 - 0.9) - 1 + 0.05
    probe = log2_slope(js, [dyadic_truncated_cost(LEB, j, 0.4) for j in js])
    assert probe > 0
    return f"slope(0.9)={slope:.4f} <= -0.75; probe slope(0.4)={probe:.4f} > 0"


@criterion(6)
def test_c06_slice_inequalities():
    rng = np.random.default_rng(6)
    violations = 0
    for _ in range(10_000):
        s = random_slice(rng)
        alpha = float(rng.uniform(0.05, 0.95))
        F, Lp, L1 = slice_F(s, alpha), velocity_norm(s, 1 / alpha), momentum_mass(s)
        violations += not (F >= Lp * (1 - 1e-12) and Lp >= L1 * (1 - 1e-12))
    assert violations == 0
    return "10000 slices, 0 violations"


@criterion(7)
def test_c07_E_vs_C():
    worst = -math.inf
    for i in range(500):
        rng = trial_rng(7, i)
        Q = random_lattice_plan(rng)
        alpha = float(rng.uniform(0.05, 1.0))
        gap = energy_E(Q, alpha) - energy_C(Q, alpha)
        assert gap <= 1e-9
        worst = max(worst, gap)
    a = MassCurve([0, 1], [[0, 0], [1, 0]], 0.5)
    b = MassCurve([0, 0.5, 1], [[0, 0], [0, 0], [1, 0]], 0.5)
    Q = TrafficPlan((a, b))
    E, C = energy_E(Q, 0.5), energy_C(Q, 0.5)
    assert abs(E - 1.0) <= 1e-9 and abs(C - math.sqrt(2)) <= 1e-9
    return f"500 plans, max(E-C)={worst:.3g}; fixture E={E:.12f} C={C:.12f}"


def _piecewise_linear(rng):
    knots = np.concatenate([[0.0], np.sort(rng.uniform(0.1, 0.9, 3)), [1.0]])
    vals = np.concatenate([[0.0], np.sort(rng.uniform(0.1, 0.9, 3)), [1.0]])
    vals = np.maximum.accumulate(vals + np.arange(5) * 1e-3)
    vals /= vals[-1]
    return lambda t: float(np.interp(t, knots, vals))


@criterion(8)
def test_c08_reparametrization_invariance():
    worst_map = worst_flat = 0.0
    for i in range(100):
        rng = trial_rng(8, i)
        path = plan_to_path(random_lattice_plan(rng), 8)
        alpha = float(rng.uniform(0.1, 0.95))
        F = total_F(path, alpha)
        for phi in (lambda t: t * t, math.sqrt, _piecewise_linear(rng)):
            diff = abs(total_F(reparametrize(path, phi, substeps=4), alpha) - F)
            assert diff <= 1e-9
            worst_map = max(worst_map, diff)
        R = reparametrize(path, constant_speed=True, alpha=alpha)
        prof = slice_F_profile(R, alpha)[:-1]
        if F > 0:
            assert np.all(np.abs(prof - F) <= 1e-9)
            worst_flat = max(worst_flat, float(np.abs(prof - F).max()))
    return f"100 paths x 3 maps, max |dF|={worst_map:.2g}; constant speed max dev={worst_flat:.2g}"


@criterion(9)
def test_c09_acyclic_plans():
    checked = 0
    for n in (4, 16, 64):
        for i in range(5):
            rng = trial_rng(90 + n, i)
            a, b = random_measure(rng, n), random_measure(rng, n)
            sol = solve_kantorovich(a, b, float(rng.choice([1.0, 2.0])))
            assert len(sol.plan) <= 2 * n - 1 and assert_acyclic_support(sol)
            checked += 1
    worst = 0.0
    for i in range(20):
        rng = trial_rng(99, i)
        n, m = (int(k) for k in rng.integers(1, 5, size=2))
        a, b = random_measure(rng, n), random_measure(rng, m)
        p = float(rng.choice([1.0, 1.5, 2.0]))
        sol = solve_kantorovich(a, b, p)
        brute = brute_force_vertex_cost(a.masses, b.masses, cost_matrix(a.positions, b.positions, p))
        assert abs(sol.cost - brute) <= 1e-12 and assert_acyclic_support(sol)
        worst = max(worst, abs(sol.cost - brute))
    return f"{checked} vertex plans acyclic; brute force x20 max diff {worst:.1g}"


SIN = TestFunction(
    lambda t, X: math.sin(math.pi * t) * X[:, 0],
    lambda t, X: math.pi * math.cos(math.pi * t) * X[:, 0],
    lambda t, X: np.column_stack([np.full(len(X), math.sin(math.pi * t)), np.zeros(len(X))]),
)
POLY = TestFunction(
    lambda t, X: t * (1 - t) * X[:, 0] * X[:, 1],
    lambda t, X: (1 - 2 * t) * X[:, 0] * X[:, 1],
    lambda t, X: t * (1 - t) * X[:, ::-1],
)


@criterion(10)
def test_c10_continuity_residual():
    res = compute_dalpha(*y_instance(), 0.5)
    path = plan_to_path(res.plan(), 1000)
    r = [continuity_residual(path, phi) for phi in (SIN, POLY)]
    assert all(abs(x) <= 1e-6 for x in r)
    # negative control: a unit mass at rest jumps from the origin to (0.5, 0) at t = 0.5
    times = np.linspace(0, 1, 1001)
    slices = tuple(TimeSlice(t, [[0.0 if t < 0.5 else 0.5, 0.0]], [1.0], [[0.0, 0.0]]) for t in times)
    jump = DynamicalPath(times, slices, tuple(np.array([[0, 0, 1.0]]) for _ in range(1000)))
    control = continuity_residual(jump, SIN)
    assert abs(control) >= 1e-2
    return f"uniform K=1000 grid ({path.K} intervals with breakpoints) residuals {r[0]:.2g}, {r[1]:.2g}; teleport control {control:.4f}"


@criterion(11)
def test_c11_gilbert_angle():
    top = SteinerTopology(3, 1, ((0, 3), (1, 3), (2, 3)))
    terms = np.array([(0.0, 0.0), *Y_SINKS])
    worst = 0.0
    for alpha in (0.6, 0.75, 0.9):
        g = optimize_branch_points(top, terms, [1.0, -0.5, -0.5], alpha)
        (b,) = g.steiner_points
        assert 0 < b[0] < 1
        u, w = terms[1] - b, terms[2] - b
        cos = float(u @ w / (np.linalg.norm(u) * np.linalg.norm(w)))
        oracle = symmetric_branch_cos(alpha, 0.3)
        assert abs(oracle - (2 ** (2 * alpha - 1) - 1)) <= 1e-4
        assert abs(cos - oracle) <= 1e-4
        worst = max(worst, abs(cos - oracle))
    return f"alpha in (0.6, 0.75, 0.9), max |cos - oracle| = {worst:.2g}"


@criterion(12)
def test_c12_mass_scaling():
    worst = 0.0
    for i in range(8):
        rng = trial_rng(12, i)
        mu0, mu1 = random_instance(rng, 3, BOX)
        alpha = (0.6, 0.75, 0.9)[i % 3]
        d, w = compute_dalpha(mu0, mu1, alpha).value, wasserstein(mu0, mu1, 1 / alpha)
        for s in (0.5, 2.0):
            m0 = AtomicMeasure.from_arrays(mu0.positions, mu0.masses * s, BOX)
            m1 = AtomicMeasure.from_arrays(mu1.positions, mu1.masses * s, BOX)
            dd = abs(compute_dalpha(m0, m1, alpha).value - s ** alpha * d)
            dw = abs(wasserstein(m0, m1, 1 / alpha) - s ** alpha * w)
            assert dd <= 1e-9 and dw <= 1e-9
            worst = max(worst, dd, dw)
    return f"8 instances x s in (0.5, 2), max deviation {worst:.2g}"


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_c"):
            try:
                fn()
            except Exception:
                pass
    print("\n".join(summary_lines()))
