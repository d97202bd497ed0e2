import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse.csgraph import csgraph_from_dense, floyd_warshall

from construe.temporal import (
    ORIGIN,
    DifferenceConstraint,
    PredicateConstraint,
    TemporalNetwork,
    bind,
    check_predicates,
    propagate,
)

from conftest import grid_solutions

LO, HI = 0, 6
VARS = ["x", "y", "z"]


def test_pw_qrs_window():
    net = TemporalNetwork(["Pw.b", "QRS.b"])
    net.add_constraint(DifferenceConstraint("QRS.b", "Pw.b", 100, 210))
    bind(net, "Pw.b", 300)
    assert net.domain("QRS.b") == (400, 510)


def test_negative_cycle_is_inconsistent():
    net = TemporalNetwork()
    net.add_constraint(DifferenceConstraint("x", "y", 1, 2))
    net.add_constraint(DifferenceConstraint("y", "x", 1, 2))
    assert not net.consistent
    assert not propagate(net)


def test_empty_network():
    net = TemporalNetwork(["a"])
    assert propagate(net)
    assert net.domain("a") == (-math.inf, math.inf)


def test_bind_inside_and_outside():
    net = TemporalNetwork()
    net.add_constraint(DifferenceConstraint("x", ORIGIN, 0, 10))
    net.add_constraint(DifferenceConstraint("y", "x", 5, 5))
    assert bind(net, "x", 3)
    assert net.domain("y") == (8, 8)
    assert not bind(net.copy(), "x", 11)


def test_predicates_checked_only_when_bound():
    net = TemporalNetwork(["a.b", "a.e"])
    net.add_predicate(PredicateConstraint("amp", ("a.amp",), lambda env: env["a.amp"] >= 20, "c8"))
    assert check_predicates(net, {}) == []
    assert check_predicates(net, {"a.amp": 40}) == []
    assert check_predicates(net, {"a.amp": 10}) == ["c8"]


def test_copy_is_independent():
    net = TemporalNetwork()
    net.add_constraint(DifferenceConstraint("x", ORIGIN, 0, 10))
    c = net.copy()
    bind(c, "x", 4)
    assert net.domain("x") == (0, 10)


# --------------------------------------------------------------------------
# Properties over random small networks
# --------------------------------------------------------------------------

bound = st.integers(-4, 4)
constraint = st.tuples(st.sampled_from(VARS), st.sampled_from(VARS + [ORIGIN]), bound, st.integers(0, 4)).filter(
    lambda c: c[0] != c[1]
).map(lambda c: (c[0], c[1], c[2], c[2] + c[3]))
networks = st.lists(constraint, min_size=1, max_size=6)


def build(cons, order=None):
    net = TemporalNetwork(VARS)
    for v in VARS:
        net.add_constraint(DifferenceConstraint(v, ORIGIN, LO, HI))
    for x, y, lo, hi in (cons if order is None else [cons[i] for i in order]):
        net.add_constraint(DifferenceConstraint(x, y, lo, hi))
    return net


def all_constraints(cons):
    return [(v, ORIGIN, LO, HI) for v in VARS] + list(cons)


@settings(max_examples=1000, deadline=None)
@given(networks)
def test_matches_brute_force_grid(cons):
    net = build(cons)
    sols = grid_solutions(VARS, all_constraints(cons), LO, HI)
    assert net.consistent == bool(sols)
    if sols:
        for v in VARS:
            assert net.domain(v) == (min(s[v] for s in sols), max(s[v] for s in sols))
        for a in VARS:
            for b in VARS:
                diffs = [s[a] - s[b] for s in sols]
                assert net.difference(a, b) == (min(diffs), max(diffs))


@settings(max_examples=300, deadline=None)
@given(networks)
def test_matches_scipy_floyd_warshall(cons):
    net = build(cons)
    n = len(net.names)
    w = np.full((n, n), np.inf)
    np.fill_diagonal(w, 0)
    for c in net.constraints:
        i, j = net.index[c.x], net.index[c.y]
        w[j, i] = min(w[j, i], c.hi)
        w[i, j] = min(w[i, j], -c.lo)
    try:
        ref = floyd_warshall(csgraph_from_dense(w, null_value=np.inf), directed=True)
    except Exception:  # scipy refuses negative cycles
        assert not net.consistent
        return
    if (np.diagonal(ref) < 0).any():
        assert not net.consistent
    elif net.consistent:
        assert np.array_equal(ref, net.dist)


@settings(max_examples=300, deadline=None)
@given(networks)
def test_propagate_idempotent_and_agrees_with_incremental(cons):
    net = build(cons)
    inc = net.dist.copy()
    ok = propagate(net)
    assert ok == net.consistent
    if ok:
        assert np.array_equal(inc, net.dist)
        first = net.dist.copy()
        propagate(net)
        assert np.array_equal(first, net.dist)


@settings(max_examples=300, deadline=None)
@given(networks, constraint)
def test_monotone(cons, extra):
    net = build(cons)
    if not net.consistent:
        return
    before = net.domains()
    net.add_constraint(DifferenceConstraint(*extra))
    if net.consistent:
        for v, (lo, hi) in net.domains().items():
            if v in before:
                assert before[v][0] <= lo and hi <= before[v][1]


@settings(max_examples=300, deadline=None)
@given(networks, st.randoms(use_true_random=False))
def test_order_independent(cons, rnd):
    order = list(range(len(cons)))
    rnd.shuffle(order)
    a, b = build(cons), build(cons, order)
    assert a.consistent == b.consistent
    if a.consistent:
        assert a.domains() == b.domains()


def test_empty_bounds_rejected():
    with pytest.raises(ValueError):
        DifferenceConstraint("x", "y", 3, 2)
