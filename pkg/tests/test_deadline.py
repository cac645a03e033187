from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from orienteer.deadline import (DeadlineInputError, DoublingLegs, bicriteria_round, ceil_power,
                                concatenate_and_verify, enumerate_guesses, floor_power,
                                induce_guess, prefix_violations, solve_deadline_dbl, solve_mgl_orienteering)
from orienteer.doubling import DoublingSolver, SolverConfig
from orienteer.generators import generate
from orienteer.metric import build_metric
from orienteer.oracle import exact_deadline, on_time_count
from orienteer.paths import Walk

HALF = Fraction(1, 2)


def deadline_instance(seed, n=7):
    inst = generate("integer-metric", seed, n=n, max_weight=8, deadlines=True)
    return inst.metric()


def line(xs, deadlines=None):
    return build_metric(coords=[[x] for x in xs], deadlines=deadlines)


def test_low_excess_optimum_gives_single_group():
    m = line([0, 1, 2, 3], deadlines={0: 0, 1: 10, 2: 10, 3: 10})
    g = induce_guess(m, [0, 1, 2, 3], HALF, 3, 3)
    assert g.m == 1 and g.breakpoints == (0, 3)


def test_known_path_prefix_bounds_match_hand_sums():
    m = deadline_instance(2)
    w = exact_deadline(m, 0).walk
    [g] = enumerate_guesses(m, 0, HALF, 3, 3, known_path=list(w.vertices))
    before = Fraction(0)
    for i, jump in enumerate(g.jumps):
        hand = [before + sum((m.d(a, b) for a, b in zip(jump[:j], jump[1:j + 1])), Fraction(0))
                for j in range(len(jump) - 1)]
        assert list(g.prefix_bounds[i]) == hand
        before += g.budgets[i]
    assert before == w.length


def test_first_prefix_bound_is_the_start():
    m = deadline_instance(5)
    w = exact_deadline(m, 0).walk
    [g] = enumerate_guesses(m, 0, HALF, 3, 3, known_path=list(w.vertices))
    assert g.prefix_bounds[0][0] == 0
    if g.m > 1:
        assert g.prefix_bounds[1][0] == g.budgets[0]


def test_eligible_sets_examples():
    free = line([0, 1, 2])
    g = induce_guess(free, [0, 1, 2], HALF, 3, 3)
    assert all(s == frozenset(range(3)) for row in g.eligible for s in row)
    m = line([0, 1, 2, 5], deadlines={0: 0, 1: 1, 2: 2, 3: 5})
    g = induce_guess(m, [0, 1, 2, 3], HALF, 3, 2, cuts=[0, 3])
    # the only leg starts at L = 0, so every vertex with a nonnegative deadline is eligible
    assert g.eligible[0][0] == frozenset(range(4))
    g = induce_guess(m, [0, 1, 2, 3], HALF, 3, 2, cuts=[0, 2, 3])
    assert g.prefix_bounds[1] == (2,)
    assert g.eligible[1][0] == frozenset({2, 3})
    tight = line([0, 1, 7], deadlines={0: 0, 1: 1, 2: 5})
    g = induce_guess(tight, [0, 1, 2], HALF, 3, 2, cuts=[0, 1, 2])
    assert g.prefix_bounds[1] == (1,) and 2 in g.eligible[1][0]
    g = induce_guess(tight, [0, 2, 1], HALF, 3, 2, cuts=[0, 1, 2])
    assert g.prefix_bounds[1] == (7,) and g.eligible[1][0] == frozenset()


def test_eligibility_is_closed_at_the_deadline():
    m = line([0, 5], deadlines={0: 0, 1: 5})
    g = induce_guess(m, [0, 1, 0], HALF, 3, 2, cuts=[0, 1, 2])
    assert g.prefix_bounds[1] == (m.from_raw(5),) == (m.deadline(1),)
    assert 1 in g.eligible[1][0]


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.integers(4, 7))
def test_eligible_sets_are_nested(seed, n):
    m = deadline_instance(seed, n)
    w = exact_deadline(m, 0).walk
    [g] = enumerate_guesses(m, 0, HALF, 3, 3, known_path=list(w.vertices))
    flat = [s for row in g.eligible for s in row]
    assert all(b <= a for a, b in zip(flat, flat[1:]))


def test_single_group_reduces_to_p2p():
    m = deadline_instance(4, 6)
    m = m.with_deadlines([None] * m.n)
    w = exact_deadline(m, 0).walk
    g = induce_guess(m, w.vertices, HALF, 2, 2, small_group_exhaustive=False, cuts=[0, len(w) - 1])
    solver = DoublingSolver(m, SolverConfig(eps=HALF, mu=2))
    res = solve_mgl_orienteering(m, DoublingLegs(solver), g, HALF)
    budget = g.budgets[0] - HALF * g.excess[0]
    p2p = solver.p2p(g.breakpoints[0], g.breakpoints[1], budget)
    assert res.prize == p2p.prize


def test_empty_eligibility_gives_zero_prize():
    m = line([0, 1, 2, 3], deadlines={0: -1, 1: -1, 2: -1, 3: -1})
    g = induce_guess(m, [0, 1, 2, 3], HALF, 3, 3, small_group_exhaustive=False, cuts=[0, 3])
    res = solve_mgl_orienteering(m, DoublingLegs(DoublingSolver(m, SolverConfig(eps=HALF))), g, HALF, False)
    assert res.prize == 0 and res.feasible


def test_concatenate_examples():
    m = line([0, 3], deadlines={0: 0, 1: 3})
    w, cnt = concatenate_and_verify(m, 0, [[[0, 1]]])
    assert cnt == 2
    m = line([0, 1, 2], deadlines={0: 0, 1: 1, 2: 100})
    w, cnt = concatenate_and_verify(m, 0, [[[0, 1, 0]], [[0, 1, 2]]])
    assert w.arrival_times()[1] == 1 and cnt == 3
    with pytest.raises(DeadlineInputError):
        concatenate_and_verify(m, 0, [[[1, 2]]])


def test_solver_trivia():
    m = deadline_instance(1, 6)
    loose = m.with_deadlines([m.from_raw(10**4)] * m.n)
    assert solve_deadline_dbl(loose, 0, m_max=3).count == m.n
    only_start = m.with_deadlines([Fraction(0)] + [Fraction(1, 2)] * (m.n - 1))
    assert solve_deadline_dbl(only_start, 0, m_max=3, require_integral=False).count == 1


def test_fractional_deadlines_rejected_in_exact_mode():
    m = line([0, 1, 2], deadlines={0: 0, 1: Fraction(3, 2), 2: 5})
    with pytest.raises(DeadlineInputError):
        solve_deadline_dbl(m, 0)


@pytest.mark.parametrize("seed", range(6))
def test_budget_and_verification_discipline(seed):
    m = deadline_instance(seed)
    w = exact_deadline(m, 0).walk
    r = solve_deadline_dbl(m, 0, HALF, m_max=3, known_path=list(w.vertices), small_group_exhaustive=False)
    g = r.guess
    assert on_time_count(r.walk) == r.count
    if g is None or g.m == 0:
        return
    solver = DoublingSolver(m, SolverConfig(eps=HALF, gamma=16, mu=3))
    mgl = solve_mgl_orienteering(m, DoublingLegs(solver), g, HALF)
    for i, (length, budget) in enumerate(zip(mgl.group_lengths, mgl.budgets)):
        assert length <= budget == g.budgets[i] - HALF * g.excess[i]
    walk, cnt = concatenate_and_verify(m, 0, mgl.legs)
    assert cnt == on_time_count(walk)
    assert all(t > limit for *_, t, limit in prefix_violations(m, g, mgl.legs, HALF))


@pytest.mark.parametrize("seed", range(6))
def test_exact_groups_verify_to_their_claim(seed):
    m = deadline_instance(seed)
    w = exact_deadline(m, 0).walk
    r = solve_deadline_dbl(m, 0, HALF, m_max=3, known_path=list(w.vertices))
    assert r.count == r.claimed == exact_deadline(m, 0).value


def test_power_rounding():
    lam = Fraction(11, 10)
    assert floor_power(lam ** 3, lam) == ceil_power(lam ** 3, lam) == lam ** 3
    assert floor_power(Fraction(105, 100), lam) == 1
    assert ceil_power(Fraction(105, 100), lam) == lam


@settings(max_examples=40, deadline=None)
@given(st.fractions(min_value=Fraction(1, 50), max_value=500), st.integers(1, 9))
def test_power_rounding_brackets(x, step):
    lam = 1 + Fraction(step, 10)
    lo, hi = floor_power(x, lam), ceil_power(x, lam)
    assert lo <= x <= hi and hi <= lo * lam


@pytest.mark.parametrize("seed", range(4))
def test_bicriteria_violation_bounded(seed):
    m = deadline_instance(seed, 6)
    rnd = bicriteria_round(m, HALF)
    r = solve_deadline_dbl(rnd.metric, 0, HALF, m_max=3, require_integral=False)
    assert rnd.violation(r.walk) <= 1 + HALF
    for i in range(m.n):
        for j in range(m.n):
            assert rnd.metric.d(i, j) <= m.d(i, j)
        if m.deadline(i) is not None:
            assert rnd.metric.deadline(i) >= m.deadline(i)
    assert on_time_count(Walk(rnd.metric, r.walk.vertices)) == r.count
