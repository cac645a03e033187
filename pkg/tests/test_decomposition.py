import math
import random
from fractions import Fraction

from hypothesis import given, settings, strategies as st

from orienteer.decomposition import (SplitNode, attach_portals, bridge_edges, build_gamma_split_tree, check_tree,
                                     crossing_count, make_params, make_portal_respecting, portal_beta, portal_edges,
                                     random_partition)
from orienteer.metric import build_metric, diameter, is_cover
from orienteer.paths import Walk


def line(xs):
    return build_metric(coords=[[x] for x in xs])


def uniform(n):
    return build_metric(matrix=[[0 if i == j else 1 for j in range(n)] for i in range(n)])


def split(parts, portals=None):
    parts = tuple(frozenset(p) for p in parts)
    return SplitNode(frozenset().union(*parts), parts, (), "", portals)


def test_two_point_cluster_splits_into_singletons():
    m = line([0, 5])
    s = random_partition(m, [0, 1], random.Random(0))
    assert sorted(map(sorted, s.parts)) == [[0], [1]]


def test_uniform_partition_parts_are_singletons():
    m = uniform(6)
    s = random_partition(m, range(6), random.Random(1))
    assert len(s.parts) <= 6
    assert all(2 * diameter(m, p) <= 1 for p in s.parts)


def test_line_partitions_halve_diameter_over_many_seeds():
    m = line(range(5))
    worst = max(max(diameter(m, p) for p in random_partition(m, range(5), random.Random(t)).parts)
                for t in range(1000))
    assert worst <= 2


def test_portal_examples():
    m = line([0, 1, 2])
    s = random_partition(m, [0, 1, 2], random.Random(0))
    s = attach_portals(m, SplitNode(s.parent, (frozenset({0}), frozenset({1, 2})), s.centers, ""),
                       Fraction(1, 2), Fraction(1), 1, random.Random(0))
    assert s.portal_set(0) == (0,)
    # beta >= 1: a single portal covers a part
    big = attach_portals(m, split([{0, 1, 2}]), Fraction(4), Fraction(1), 1, random.Random(0))
    assert len(big.portal_set(0)) == 1
    # radius 0.9 on {0,1,2}: nobody reaches both ends, so at least two portals
    eps = Fraction(9, 10) * 4 * 1 * 1 / 2  # beta * diam = 0.9 with kappa' = 1, delta = 1
    ps = attach_portals(m, split([{0, 1, 2}]), eps, Fraction(1), 1, random.Random(0))
    assert portal_beta(eps, 1, 1) * 2 == Fraction(9, 10)
    assert len(ps.portal_set(0)) >= 2
    assert is_cover(m, {0, 1, 2}, ps.portal_set(0), Fraction(9, 10))


def test_bridge_edges():
    assert bridge_edges(split([{0, 1}, {2}]), [(0, 1)]) == set()
    assert bridge_edges(split([{0}, {1}]), [(0, 1)]) == {(0, 1)}
    pairs = [(0, 1), (0, 2), (1, 2)]
    assert bridge_edges(split([{0, 1}, {2}]), pairs) == {(0, 2), (1, 2)}


def test_portal_edges_counting():
    assert len(portal_edges(split([{0}, {1}], ((0,), (1,))))) == 1
    assert portal_edges(split([{0, 1}], ((0,),))) == set()
    s = split([{0, 1}, {2}, {3}], ((0, 1), (2,), (3,)))
    assert len(portal_edges(s)) == 5


def test_tree_examples():
    m = line(range(3))
    tree = build_gamma_split_tree(m, make_params(m, 2, leaf_size=3))
    assert len(tree.clusters) == 1 and not tree.splits
    m = line(range(8))
    tree = build_gamma_split_tree(m, make_params(m, 2, leaf_size=2, seed=5))
    assert tree.height <= 3
    assert check_tree(tree) == []
    one = build_gamma_split_tree(m, make_params(m, 1, leaf_size=2))
    assert all(len(s) == 1 for s in one.splits.values())


def test_portal_respecting_examples():
    m = line([0, 1, 2, 3])
    s = split([{0, 1}, {2, 3}], ((0, 1), (2, 3)))
    w = Walk(m, [0, 1])
    assert make_portal_respecting(w, s) == w
    w = Walk(m, [1, 2])
    assert make_portal_respecting(w, s) == w
    # crossing from 0.3 inside each side to portals at distance 0.3
    m = build_metric(coords=[[0], [Fraction(3, 10)], [Fraction(13, 10)], [Fraction(16, 10)]])
    s = split([{0, 1}, {2, 3}], ((0,), (3,)))
    w = Walk(m, [1, 2])
    out = make_portal_respecting(w, s)
    assert m.to_raw(out.length - w.length) <= Fraction(12, 10)


def test_crossing_count_examples():
    m = line([0, 1, 2, 3])
    s = split([{0, 1}, {2, 3}])
    assert crossing_count(Walk(m, [0, 1, 0]), s) == 0
    assert crossing_count(Walk(m, [0, 2, 0, 2]), s) == 3


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 7), min_size=1, max_size=15), st.integers(0, 10**6))
def test_crossing_count_matches_rescan(seq, seed):
    m = line(range(8))
    s = random_partition(m, range(8), random.Random(seed))
    naive = 0
    for a, b in zip(seq, seq[1:]):
        pa = next(i for i, p in enumerate(s.parts) if a in p)
        pb = next(i for i, p in enumerate(s.parts) if b in p)
        naive += pa != pb
    assert crossing_count(Walk(m, seq), s) == naive


@settings(max_examples=15, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 20)), min_size=2, max_size=10, unique=True),
       st.integers(1, 3), st.integers(0, 10**6))
def test_built_trees_pass_structural_checks(pts, gamma, seed):
    m = build_metric(coords=pts)
    tree = build_gamma_split_tree(m, make_params(m, gamma, seed=seed))
    assert check_tree(tree) == []
    for c, info in tree.clusters.items():
        for sp in tree.splits.get(c, ()):
            assert frozenset().union(*sp.parts) == c
            for p in sp.parts:
                assert p in tree.clusters
                assert 2 * diameter(m, p) <= info.diameter
    assert tree.height <= max(1, m.scale_levels) + 2


def test_separation_frequency_of_single_pair():
    from orienteer.decomposition import fit_separation_constant, separation_frequencies
    m = line([0, 1])
    f = separation_frequencies(m, [0, 1], 100, seed=0)
    assert f[(0, 1)] in (0.0, 1.0)
    assert math.isfinite(fit_separation_constant(m, [0, 1], f))
