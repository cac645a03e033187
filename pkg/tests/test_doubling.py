from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from orienteer.doubling import DoublingSolver, InfeasibleError, SolverConfig, solve_kstroll_dbl, solve_p2p_dbl
from orienteer.generators import generate
from orienteer.metric import build_metric
from orienteer.oracle import exact_kstroll, exact_p2p

HALF = Fraction(1, 2)


def uniform(n):
    return build_metric(matrix=[[0 if i == j else 1 for j in range(n)] for i in range(n)])


def euclid(seed, n):
    return generate("euclidean", seed, n=n).metric(with_deadlines=False)


def test_multipath_examples():
    m = uniform(6)
    solver = DoublingSolver(m, SolverConfig())
    root = solver.tree.root
    assert solver.multipath(frozenset({0}) if frozenset({0}) in solver.tree.clusters else root, 1, [(0, 0)])[0] == 0
    length, paths = solver.multipath(root, 4, [(0, 1)])
    assert length == 3 == exact_kstroll(m, 0, 1, 4).value
    assert paths[0][0] == 0 and paths[0][-1] == 1
    # two direct pairs: k equals the endpoint count, no interior vertex needed
    length, _ = solver.multipath(root, 4, [(0, 1), (2, 3)])
    assert length == m.d(0, 1) + m.d(2, 3)


def test_kstroll_examples():
    m = euclid(3, 8)
    r = solve_kstroll_dbl(m, 0, 5, 2)
    assert r.length == m.d(0, 5)
    small = euclid(4, 4)
    for k in range(1, 5):
        assert solve_kstroll_dbl(small, 0, 3, k).length == exact_kstroll(small, 0, 3, k).value
    with pytest.raises(InfeasibleError):
        solve_kstroll_dbl(small, 0, 3, 5)


def test_p2p_examples():
    m = uniform(5)
    assert solve_p2p_dbl(m, 0, 1, 100).prize == 5
    assert solve_p2p_dbl(m, 0, 1, 3).prize == 4 == exact_p2p(m, 0, 1, 3).value
    line = build_metric(coords=[[0], [1], [2], [5]])
    assert solve_p2p_dbl(line, 0, 2, 2).prize == 3
    with pytest.raises(InfeasibleError):
        solve_p2p_dbl(m, 0, 1, Fraction(1, 2))


@settings(max_examples=12, deadline=None)
@given(st.integers(0, 10**6), st.integers(5, 10), st.data())
def test_kstroll_feasible_and_never_superoptimal(seed, n, data):
    m = euclid(seed, n)
    t = data.draw(st.integers(0, n - 1))
    k = data.draw(st.integers(1, n))
    r = DoublingSolver(m, SolverConfig(eps=HALF, seed=seed)).kstroll(0, t, k)
    opt = exact_kstroll(m, 0, t, k)
    assert r.walk.first == 0 and r.walk.last == t and r.walk.distinct_count >= k
    assert r.length == r.walk.length >= opt.value


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.integers(5, 9))
def test_p2p_budget_monotone_and_feasible(seed, n):
    m = euclid(seed, n)
    solver = DoublingSolver(m, SolverConfig(eps=HALF, seed=seed))
    lo = m.d(0, 1)
    prizes = []
    for extra in range(0, 30, 3):
        r = solver.p2p(0, 1, lo + extra)
        assert r.walk.length <= lo + extra and r.walk.distinct_count == r.prize
        prizes.append(r.prize)
    assert prizes == sorted(prizes)


def test_determinism():
    m = euclid(9, 9)
    a = DoublingSolver(m, SolverConfig(seed=4)).kstroll(0, 3, 6)
    b = DoublingSolver(m, SolverConfig(seed=4)).kstroll(0, 3, 6)
    assert a.walk.vertices == b.walk.vertices


def test_single_split_is_exact_when_everything_is_a_leaf():
    m = euclid(2, 3)
    cfg = SolverConfig(gamma=1, leaf_size=3)
    for k in range(1, 4):
        assert DoublingSolver(m, cfg).kstroll(0, 2, k).length == exact_kstroll(m, 0, 2, k).value


def test_config_defaults():
    m = euclid(1, 10)
    cfg = SolverConfig(eps=HALF).resolved(m)
    assert cfg.gamma == 12 and cfg.mu == 3 and cfg.leaf_size == 3
    assert cfg.kappa_prime == 2 * -(-cfg.kappa // 1) + 2
