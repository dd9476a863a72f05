import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchtrans.errors import BalanceError, DomainError, PreconditionError
from branchtrans.exact_ot import (OtSolution, TransportPlan, assert_acyclic_support, cost_matrix, plan_alpha_cost,
                                  read_plan_csv, solve_kantorovich, transportation_simplex, w1_lower_bound_dual,
                                  wasserstein, write_plan_csv)
from branchtrans.geometry import AtomicMeasure, DomainBox
from branchtrans.sampling import random_measure

from oracles import brute_force_vertex_cost, lp_cost, monotone_line_cost

LINE = DomainBox(1, 4.0)


def line_measure(xs, ms):
    return AtomicMeasure.from_arrays(np.array(xs, float)[:, None], ms, LINE)


def test_single_pair():
    a = AtomicMeasure.from_arrays([[0, 0]], [1.0], DomainBox(2, 2.0))
    b = AtomicMeasure.from_arrays([[1, 0]], [1.0], DomainBox(2, 2.0))
    sol = solve_kantorovich(a, b, 1)
    assert sol.cost == 1.0 and sol.plan.entries() == [(0, 0, 1.0)]


def test_line_example_matches_monotone_oracle():
    mu0 = line_measure([0, 2], [0.7, 0.3])
    mu1 = line_measure([1, 3], [0.5, 0.5])
    sol = solve_kantorovich(mu0, mu1, 1)
    assert math.isclose(monotone_line_cost([0, 2], [0.7, 0.3], [1, 3], [0.5, 0.5]), 1.4)
    assert math.isclose(sol.cost, 1.4, abs_tol=1e-12)
    got = {(i, k): m for i, k, m in sol.plan.entries()}
    assert got.keys() == {(0, 0), (0, 1), (1, 1)}
    assert np.allclose([got[(0, 0)], got[(0, 1)], got[(1, 1)]], [0.5, 0.2, 0.3])


def test_identical_measures_zero():
    mu = random_measure(np.random.default_rng(0), 5)
    for p in (1, 2, 3.5):
        sol = solve_kantorovich(mu, mu, p)
        assert sol.cost == 0.0 and len(sol.plan) == 5


def test_wasserstein_examples():
    box = DomainBox(2, 2.0, (-0.5, -0.5))
    d0 = AtomicMeasure.from_arrays([[0, 0]], [1.0], box)
    y = AtomicMeasure.from_arrays([[1, 0.3], [1, -0.3]], [0.5, 0.5], box)
    assert math.isclose(wasserstein(d0, y, 2), math.sqrt(1.09), rel_tol=1e-12)
    a = AtomicMeasure.from_arrays([[0.2, 0.1]], [1.0], box)
    b = AtomicMeasure.from_arrays([[0.7, 1.3]], [1.0], box)
    for p in (1, 2, 5):
        assert math.isclose(wasserstein(a, b, p), 1.3, rel_tol=1e-12)
    h = line_measure([0, 1], [0.5, 0.5])
    assert wasserstein(h, h, 2) == 0.0


def test_errors():
    a = line_measure([0], [1.0])
    with pytest.raises(BalanceError):
        solve_kantorovich(a, line_measure([1], [0.5]), 1)
    with pytest.raises(PreconditionError):
        solve_kantorovich(a, a, 0.5)
    with pytest.raises(DomainError):
        solve_kantorovich(a, AtomicMeasure.from_arrays([[0, 0]], [1.0]), 1)


@pytest.mark.parametrize("seed", range(12))
def test_brute_force_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 5, size=2)
    a, b = random_measure(rng, int(n)), random_measure(rng, int(m))
    p = float(rng.choice([1.0, 2.0, 1.5]))
    sol = solve_kantorovich(a, b, p)
    C = cost_matrix(a.positions, b.positions, p)
    assert abs(sol.cost - brute_force_vertex_cost(a.masses, b.masses, C)) <= 1e-10
    assert assert_acyclic_support(sol)


@pytest.mark.parametrize("n", [4, 16, 64])
def test_matches_lp_and_is_acyclic(n):
    rng = np.random.default_rng(n)
    for _ in range(3):
        a, b = random_measure(rng, n), random_measure(rng, n)
        sol = solve_kantorovich(a, b, 2.0)
        assert abs(sol.cost - lp_cost(a.masses, b.masses, cost_matrix(a.positions, b.positions, 2.0))) <= 1e-9
        assert assert_acyclic_support(sol) and len(sol.plan) <= 2 * n - 1
        assert sol.plan.check_marginals()
        assert math.isclose(sol.cost, float(np.sum(sol.plan.masses * sol.plan.distances() ** 2)), abs_tol=1e-12)


def test_uniform_masses_degenerate_ties_are_deterministic():
    rng = np.random.default_rng(7)
    pts = rng.random((8, 2))
    a = AtomicMeasure.from_arrays(pts, np.full(8, 1 / 8), DomainBox(2))
    b = AtomicMeasure.from_arrays(pts[::-1] * 0.5, np.full(8, 1 / 8), DomainBox(2))
    first = solve_kantorovich(a, b, 1).plan.entries()
    assert all(solve_kantorovich(a, b, 1).plan.entries() == first for _ in range(3))


def test_four_cycle_is_rejected():
    a = line_measure([0, 1], [0.5, 0.5])
    b = line_measure([2, 3], [0.5, 0.5])
    plan = TransportPlan(a, b, np.array([0, 0, 1, 1]), np.array([0, 1, 0, 1]), np.full(4, 0.25))
    assert not assert_acyclic_support(OtSolution(plan, 0.0, 1.0))
    ident = TransportPlan(a, a, np.arange(2), np.arange(2), np.full(2, 0.5))
    assert assert_acyclic_support(OtSolution(ident, 0.0, 1.0))


def test_simplex_on_raw_arrays():
    flow = transportation_simplex([0.5, 0.5], [0.5, 0.5], np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert {c: v for c, v in flow.items() if v > 0} == {(0, 0): 0.5, (1, 1): 0.5}


def test_dual_lower_bound():
    d1, d0 = line_measure([1], [1.0]), line_measure([0], [1.0])
    assert w1_lower_bound_dual(d1, d0, lambda x: float(x[0])) == 1.0
    assert w1_lower_bound_dual(d1, d0, lambda x: 0.0) == 0.0
    with pytest.raises(PreconditionError):
        w1_lower_bound_dual(d1, d0, lambda x: 2.0 * float(x[0]))


def test_dual_never_exceeds_w1():
    rng = np.random.default_rng(11)
    for _ in range(30):
        a, b = random_measure(rng, 5), random_measure(rng, 4)
        u = rng.normal(size=2)
        u /= np.linalg.norm(u)
        c = rng.random(2)
        f = lambda x, u=u, c=c: float(np.sin(u @ (x - c)))  # 1-Lipschitz
        assert w1_lower_bound_dual(a, b, f) <= wasserstein(a, b, 1) + 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_triangle_and_monotonicity(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_measure(rng, int(rng.integers(1, 6))) for _ in range(3))
    for p in (1.0, 2.0, 3.0):
        assert wasserstein(a, c, p) <= wasserstein(a, b, p) + wasserstein(b, c, p) + 1e-9
    ws = [wasserstein(a, b, p) for p in (1.0, 1 / 0.75, 2.0, 4.0)]
    assert all(x <= y + 1e-9 for x, y in zip(ws, ws[1:]))


def test_plan_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    a, b = random_measure(rng, 6), random_measure(rng, 5)
    plan = solve_kantorovich(a, b, 1).plan
    write_plan_csv(plan, tmp_path / "plan.csv")
    back = read_plan_csv(tmp_path / "plan.csv", a, b)
    assert back.entries() == plan.entries()
    assert math.isclose(plan_alpha_cost(back, 1.0), solve_kantorovich(a, b, 1).cost, rel_tol=1e-12)
