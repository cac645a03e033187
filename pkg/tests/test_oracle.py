import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from orienteer.metric import build_metric
from orienteer.oracle import (OracleError, exact_deadline, exact_kstroll, exact_mu_jump, exact_p2p, on_time_count,
                              perm_deadline, perm_kstroll, perm_p2p)
from orienteer.paths import Walk


def uniform(n):
    return build_metric(matrix=[[0 if i == j else 1 for j in range(n)] for i in range(n)])


def random_metric(seed, n, deadlines=False):
    rng = random.Random(seed)
    pts = set()
    while len(pts) < n:
        pts.add((rng.randint(0, 9), rng.randint(0, 9)))
    pts = sorted(pts)
    dl = None
    if deadlines:
        dl = {i: rng.randint(0, 25) for i in range(n)}
        dl[0] = 0
    return build_metric(coords=pts, deadlines=dl)


def test_kstroll_basics():
    m = uniform(5)
    assert exact_kstroll(m, 0, 3, 2).value == m.d(0, 3)
    assert exact_kstroll(m, 0, 4, 5).value == 4
    with pytest.raises(OracleError):
        exact_kstroll(m, 0, 1, 6)


def test_p2p_basics():
    m = uniform(5)
    assert exact_p2p(m, 0, 1, Fraction(1, 2)).value is None
    assert exact_p2p(m, 0, 1, 100).value == 5
    assert exact_p2p(m, 0, 1, 3).value == 4
    assert exact_p2p(m, 0, 1, 3, exclude_endpoints=True).value == 2


def test_deadline_basics():
    m = uniform(5)
    assert exact_deadline(m, 0).value == 5
    tight = m.with_deadlines([Fraction(0)] + [Fraction(1, 2)] * 4)
    assert exact_deadline(tight, 0).value == 1


def test_witnesses_resimulate():
    m = random_metric(3, 8, deadlines=True)
    r = exact_kstroll(m, 0, 5, 6)
    assert r.walk.length == r.value and r.walk.distinct_count >= 6
    assert (r.walk.first, r.walk.last) == (0, 5)
    p = exact_p2p(m, 0, 5, 12)
    assert p.walk.length <= 12 and p.walk.distinct_count == p.value
    d = exact_deadline(m, 0)
    assert on_time_count(d.walk) == d.value


def test_mu_jump_enumeration_edges():
    m = random_metric(1, 6)
    w = Walk(m, [0, 3, 1, 5, 2, 4, 0, 1])
    assert exact_mu_jump(w, 2).indices == (0, 7)
    assert exact_mu_jump(w, 8).indices == tuple(range(8))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 7), st.data())
def test_oracles_match_permutation_search(seed, n, data):
    m = random_metric(seed, n, deadlines=True)
    t = data.draw(st.integers(0, n - 1))
    k = data.draw(st.integers(1, n))
    assert exact_kstroll(m, 0, t, k).value == perm_kstroll(m, 0, t, k)
    budget = Fraction(data.draw(st.integers(0, 40)), 2)
    assert exact_p2p(m, 0, t, budget).value == perm_p2p(m, 0, t, budget)
    assert exact_deadline(m, 0).value == perm_deadline(m, 0)


def test_random_ten_node_kstroll_is_consistent():
    # Held-Karp at n = 10 against itself on the reversed instance: the optimum is symmetric.
    m = random_metric(11, 10)
    for k in (4, 7, 10):
        assert exact_kstroll(m, 0, 9, k).value == exact_kstroll(m, 9, 0, k).value
