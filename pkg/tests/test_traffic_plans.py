import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchtrans.errors import ParseError, PreconditionError
from branchtrans.sampling import random_lattice_plan, random_time_map
from branchtrans.traffic_plans import (MassCurve, TrafficPlan, endpoint_marginals, energy_C, energy_E,
                                       plan_from_dict, plan_length_cost, plan_to_dict, spatial_multiplicity,
                                       synchronized_multiplicity)


def y_plan():
    up = MassCurve([0, 0.7, 1], [[0, 0], [0.7, 0], [1, 0.3]], 0.5)
    down = MassCurve([0, 0.7, 1], [[0, 0], [0.7, 0], [1, -0.3]], 0.5)
    return TrafficPlan((up, down))


def desync_plan():
    a = MassCurve([0, 1], [[0, 0], [1, 0]], 0.5)
    b = MassCurve([0, 0.5, 1], [[0, 0], [0, 0], [1, 0]], 0.5)
    return TrafficPlan((a, b))


def test_single_curve():
    Q = TrafficPlan((MassCurve([0, 0.3, 1], [[0, 0], [0.3, 0.4], [0.3, 1.4]], 1.0),))
    for alpha in (0.2, 0.5, 1.0):
        assert math.isclose(energy_E(Q, alpha), 1.5, rel_tol=1e-14)
        assert math.isclose(energy_C(Q, alpha), 1.5, rel_tol=1e-14)


def test_y_plan():
    # trunk: both halves at multiplicity 1; branches: each half alone, length sqrt(0.18)
    expected = 0.7 + 2 * 0.5 * 0.5 ** -0.5 * math.sqrt(0.18)
    assert math.isclose(expected, 1.3, rel_tol=1e-14)
    Q = y_plan()
    assert math.isclose(energy_E(Q, 0.5), 1.3, rel_tol=1e-12)
    assert math.isclose(energy_C(Q, 0.5), 1.3, rel_tol=1e-12)


def test_desynchronized_shared_segment():
    Q = desync_plan()
    assert math.isclose(energy_E(Q, 0.5), 1.0, rel_tol=1e-12)
    assert math.isclose(energy_C(Q, 0.5), math.sqrt(2), rel_tol=1e-12)
    for alpha in (0.2, 0.8):
        assert math.isclose(energy_C(Q, alpha), 2 ** (1 - alpha), rel_tol=1e-12)


def test_multiplicities():
    Q = desync_plan()
    assert spatial_multiplicity(Q, [0.4, 0]) == 1.0
    assert spatial_multiplicity(Q, [0.4, 0.1]) == 0.0
    assert synchronized_multiplicity(Q, [0.4, 0], 0.4) == 0.5
    assert synchronized_multiplicity(Q, [0, 0], 0.25) == 0.5
    assert synchronized_multiplicity(Q, [1, 0], 1.0) == 1.0
    with pytest.raises(PreconditionError):
        synchronized_multiplicity(Q, [0, 0], 1.5)


def test_partial_overlap_is_split():
    # second curve covers only the middle third of the first
    a = MassCurve([0, 1], [[0, 0], [3, 0]], 0.5)
    b = MassCurve([0, 1], [[1, 0], [2, 0]], 0.25)
    Q = TrafficPlan((a, b))
    alpha = 0.5
    want = 0.5 * (2 * 0.5 ** (alpha - 1) + 0.75 ** (alpha - 1)) + 0.25 * 0.75 ** (alpha - 1)
    assert math.isclose(energy_E(Q, alpha), want, rel_tol=1e-12)


def test_transversal_crossing_ignored():
    a = MassCurve([0, 1], [[0, 0], [1, 1]], 0.5)
    b = MassCurve([0, 1], [[0, 1], [1, 0]], 0.5)
    Q = TrafficPlan((a, b))
    # they meet at (0.5, 0.5) at t = 0.5 but only for an instant
    assert math.isclose(energy_E(Q, 0.3), 2 * 0.5 * 0.5 ** -0.7 * math.sqrt(2), rel_tol=1e-12)
    assert math.isclose(energy_C(Q, 0.3), energy_E(Q, 0.3), rel_tol=1e-12)


def test_alpha_range_and_construction():
    with pytest.raises(PreconditionError):
        energy_E(y_plan(), 0.0)
    with pytest.raises(PreconditionError):
        energy_C(y_plan(), 1.2)
    with pytest.raises(PreconditionError):
        TrafficPlan(())
    with pytest.raises(PreconditionError):
        MassCurve([0, 0.5], [[0, 0], [1, 0]], 1.0)
    with pytest.raises(PreconditionError):
        MassCurve([0, 1], [[0, 0], [1, 0]], 0.0)


def test_endpoint_marginals():
    mu0, mu1 = endpoint_marginals(y_plan())
    assert mu0.pairs() == [((0.0, 0.0), 1.0)]
    assert sorted(mu1.pairs()) == [((1.0, -0.3), 0.5), ((1.0, 0.3), 0.5)]


plans = st.builds(lambda s: random_lattice_plan(np.random.default_rng(s)), st.integers(0, 100_000))
alphas = st.floats(0.05, 1.0)


@settings(max_examples=150, deadline=None)
@given(plans, alphas)
def test_E_le_C(Q, alpha):
    assert energy_E(Q, alpha) <= energy_C(Q, alpha) * (1 + 1e-12) + 1e-15


@settings(max_examples=60, deadline=None)
@given(plans, alphas, st.integers(0, 1000))
def test_relabel_and_split_invariance(Q, alpha, seed):
    rng = np.random.default_rng(seed)
    E, C = energy_E(Q, alpha), energy_C(Q, alpha)
    perm = TrafficPlan(tuple(Q.curves[i] for i in rng.permutation(len(Q))))
    assert math.isclose(energy_E(perm, alpha), E, rel_tol=1e-12)
    assert math.isclose(energy_C(perm, alpha), C, rel_tol=1e-12)
    k = int(rng.integers(len(Q)))
    c = Q.curves[k]
    half = MassCurve(c.times, c.points, c.mass / 2)
    split = TrafficPlan(Q.curves[:k] + (half, half) + Q.curves[k + 1:])
    assert math.isclose(energy_E(split, alpha), E, rel_tol=1e-12)
    assert math.isclose(energy_C(split, alpha), C, rel_tol=1e-12)


@settings(max_examples=60, deadline=None)
@given(plans)
def test_alpha_one_is_length_cost(Q):
    L = plan_length_cost(Q)
    assert math.isclose(energy_E(Q, 1.0), L, rel_tol=1e-13, abs_tol=1e-15)
    assert math.isclose(energy_C(Q, 1.0), L, rel_tol=1e-13, abs_tol=1e-15)


@settings(max_examples=60, deadline=None)
@given(plans, alphas, st.integers(0, 1000))
def test_common_reparametrization(Q, alpha, seed):
    phi_inv = random_time_map(np.random.default_rng(seed))
    R = TrafficPlan(tuple(c.reparametrized(phi_inv) for c in Q.curves))
    assert math.isclose(energy_E(R, alpha), energy_E(Q, alpha), rel_tol=1e-12)
    assert math.isclose(energy_C(R, alpha), energy_C(Q, alpha), rel_tol=1e-12)


def test_dict_round_trip():
    Q = y_plan()
    back = plan_from_dict(plan_to_dict(Q))
    assert math.isclose(energy_E(back, 0.5), 1.3, rel_tol=1e-12)
    with pytest.raises(ParseError, match="curve 0"):
        plan_from_dict({"curves": [{"t": [0, 1], "x": [[0, 0], [1, 0]]}]})
    with pytest.raises(ParseError):
        plan_from_dict({"curves": []})
