import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from orienteer.metric import build_metric
from orienteer.oracle import exact_mu_jump
from orienteer.paths import (Walk, WalkError, equal_size_jump, equal_size_positions, jump_legs, jump_size_for,
                             mu_excess, optimal_mu_jump, restrict, shortcut, subpath)

UNIFORM = build_metric(matrix=[[0 if i == j else 1 for j in range(4)] for i in range(4)])
LINE = build_metric(coords=[[0], [1], [3]])
A, B, C, D = range(4)


def test_length_and_distinct():
    w = Walk(LINE, [0, 1, 2, 1])
    assert w.length == 1 + 2 + 2
    assert w.distinct_count == 3
    assert w.arrival_times() == {0: 0, 1: 1, 2: 3}


def test_empty_walk_rejected():
    with pytest.raises(WalkError):
        Walk(LINE, [])


def test_subpath():
    w = Walk(LINE, [0, 1, 2])
    assert subpath(w, 0, 2) == w
    assert subpath(w, 1, 1).length == 0
    s = subpath(w, 1, 2)
    assert s.vertices == (1, 2) and s.length == 2


def test_optimal_jump_examples():
    w = Walk(UNIFORM, [A, B, C, D])
    assert optimal_mu_jump(w, 4).vertices == w.vertices
    assert optimal_mu_jump(w, 4).length == w.length
    assert optimal_mu_jump(w, 2).length == UNIFORM.d(A, D)
    assert optimal_mu_jump(w, 3).length == 2


def test_mu_excess_examples():
    assert mu_excess(Walk(LINE, [0, 1, 2]), 2) == 0
    w = Walk(UNIFORM, [A, B, C, D])
    assert mu_excess(w, 2) == 2
    assert mu_excess(w, 4) == 0


def test_equal_size_jump():
    assert equal_size_positions(9, 5) == (1, 3, 5, 7, 9)
    assert equal_size_positions(10, 2) == (1, 10)
    w = Walk(UNIFORM, [A, B, C])
    assert equal_size_jump(w, 3).indices == (0, 1, 2)
    with pytest.raises(WalkError):
        equal_size_jump(w, 4)


def test_shortcut():
    w = Walk(UNIFORM, [A, B, C, D])
    assert shortcut(w, []) == w
    whole = shortcut(w, [(0, 3)])
    assert whole.vertices == (A, D) and whole.length == UNIFORM.d(A, D)
    s = shortcut(w, [(1, 3)])
    assert s.vertices == (A, B, D) and s.length == 2


def test_jump_sizes():
    assert jump_size_for(Fraction(1, 2)) == 3
    assert jump_size_for(Fraction(1, 3), "ceil") == 4
    assert jump_size_for(Fraction(2, 5), "floor") == 3
    assert jump_size_for(Fraction(2, 5), "ceil") == 4


def test_restrict_runs():
    w = Walk(UNIFORM, [A, B, C, A, D])
    assert [r.vertices for r in restrict(w, {A, B})] == [(A, B), (A,)]


walks = st.lists(st.integers(0, 5), min_size=2, max_size=9)
coords = st.lists(st.tuples(st.integers(0, 12), st.integers(0, 12)), min_size=6, max_size=6, unique=True)


@settings(max_examples=80, deadline=None)
@given(coords, walks, st.integers(2, 9))
def test_jump_dp_matches_enumeration(pts, seq, mu):
    m = build_metric(coords=pts)
    w = Walk(m, seq)
    mu = min(mu, len(w))
    j = optimal_mu_jump(w, mu)
    assert j.length == exact_mu_jump(w, mu).length
    assert j.indices[0] == 0 and j.indices[-1] == len(w) - 1 and len(j.indices) == mu
    assert list(j.indices) == sorted(set(j.indices))
    assert j.length <= w.length


@settings(max_examples=60, deadline=None)
@given(coords, walks)
def test_excess_monotone_and_nonnegative(pts, seq):
    m = build_metric(coords=pts)
    w = Walk(m, seq)
    ex = [mu_excess(w, mu) for mu in range(2, len(w) + 1)]
    assert all(x >= 0 for x in ex)
    assert all(a >= b for a, b in zip(ex, ex[1:]))
    assert ex[-1] == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(2, 12))
def test_equal_positions_spread(k, mu):
    if k < mu:
        return
    pos = equal_size_positions(k, mu)
    assert pos[0] == 1 and pos[-1] == k and len(set(pos)) == mu


@settings(max_examples=40, deadline=None)
@given(coords, walks, st.integers(2, 5))
def test_jump_legs_partition_walk(pts, seq, mu):
    m = build_metric(coords=pts)
    w = Walk(m, seq)
    mu = min(mu, len(w))
    legs = jump_legs(optimal_mu_jump(w, mu))
    assert sum(leg.length for leg in legs) == w.length
    assert sum(mu_excess(leg, 2) for leg in legs) == mu_excess(w, mu)


def test_enumeration_agrees_on_small_exhaustive_case():
    m = build_metric(coords=[[0, 0], [3, 0], [3, 4], [0, 4], [1, 1]])
    for seq in itertools.product(range(5), repeat=5):
        w = Walk(m, seq)
        assert optimal_mu_jump(w, 3).length == exact_mu_jump(w, 3).length
