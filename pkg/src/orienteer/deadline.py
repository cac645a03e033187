"""Deadline TSP through guessed excess-geometric skeletons.

Phase 1 streams skeletons: breakpoints where the excess of the current group
first exceeds ``alpha**i``, an equal-size jump per group, the group budget
and excess values, prefix bounds and eligible sets.  Skeletons are induced
from candidate paths that visit every vertex on time, which covers the
skeleton of an optimal path.  Groups with fewer than ``mu**2`` vertices keep
their exact path.  Phase 2 solves the remaining groups as a
multi-group-legs orienteering problem on the split-tree tables (doubling
metrics) or the tree-decomposition DP (graphs), and every candidate walk is
re-simulated before it is reported.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .doubling import DoublingSolver, SolverConfig
from .metric import MetricInstance, build_metric
from .oracle import on_time_count, start_counts
from .paths import Walk, equal_size_positions, jump_size_for, optimal_mu_jump


class DeadlineInputError(ValueError):
    pass


def check_integral(m: MetricInstance) -> None:
    if not m.integral:
        raise DeadlineInputError(
            "distances and deadlines must be integers for exact-deadline mode; "
            "use bicriteria mode (bicriteria_round) for rational inputs")


# ------------------------------------------------------------------ guesses

@dataclass(frozen=True)
class DeadlineGuess:
    breakpoints: Tuple[int, ...]
    jumps: Tuple[Tuple[int, ...], ...]
    budgets: Tuple[Fraction, ...]
    excess: Tuple[Fraction, ...]
    excess_before: Tuple[Fraction, ...]
    sizes: Tuple[int, ...]
    exact_paths: Tuple[Optional[Tuple[int, ...]], ...]
    prefix_bounds: Tuple[Tuple[Fraction, ...], ...] = ()
    eligible: Tuple[Tuple[FrozenSet[int], ...], ...] = ()

    @property
    def m(self) -> int:
        return len(self.breakpoints) - 1

    def legs(self, i: int) -> List[Tuple[int, int]]:
        j = self.jumps[i]
        return list(zip(j, j[1:]))

    def key(self) -> tuple:
        return (self.breakpoints, self.jumps, self.budgets, self.excess, self.excess_before,
                self.exact_paths)

    def to_json(self, m: MetricInstance) -> dict:
        ids = m.node_ids
        return {
            "breakpoints": [ids[v] for v in self.breakpoints],
            "jumps": [[ids[v] for v in j] for j in self.jumps],
            "budgets": [str(m.to_raw(b)) for b in self.budgets],
            "excess": [str(m.to_raw(e)) for e in self.excess],
            "excess_before": [str(m.to_raw(e)) for e in self.excess_before],
            "sizes": list(self.sizes),
            "exact_groups": [p is not None for p in self.exact_paths],
            "prefix_bounds": [[str(m.to_raw(x)) for x in row] for row in self.prefix_bounds],
        }


def _excess(m: MetricInstance, seq: Sequence[int], order: int) -> Fraction:
    if len(seq) <= order:
        return Fraction(0)
    w = Walk(m, seq)
    return w.length - optimal_mu_jump(w, order).length


def _thresholds(m: MetricInstance, eps: Fraction, count: int) -> List[Fraction]:
    """alpha**i in raw units, converted to normalized units."""
    alpha = 1 + Fraction(eps)
    return [m.from_raw(alpha ** i) for i in range(count)]


def eligible_sets(guess: DeadlineGuess, m: MetricInstance) -> DeadlineGuess:
    """Prefix bounds L[i][j] and the sets {v : D(v) >= L[i][j]} for every leg."""
    bounds = []
    sets = []
    before = Fraction(0)
    for i, jump in enumerate(guess.jumps):
        row = []
        acc = Fraction(0)
        for j in range(len(jump) - 1):
            if j:
                acc += m.d(jump[j - 1], jump[j])
            row.append(before + acc)
        bounds.append(tuple(row))
        sets.append(tuple(frozenset(v for v in range(m.n)
                                    if m.deadline(v) is None or m.deadline(v) >= L) for L in row))
        before += guess.budgets[i]
    return replace(guess, prefix_bounds=tuple(bounds), eligible=tuple(sets))


def induce_guess(m: MetricInstance, path: Sequence[int], eps: Fraction, order: int, mu: int,
                 small_group_exhaustive: bool = True, cuts: Optional[Sequence[int]] = None) -> DeadlineGuess:
    """Skeleton induced by a simple path: breakpoints, equal-size jumps, budgets and excesses."""
    path = tuple(path)
    if cuts is None:
        cuts = breakpoint_positions(m, path, eps, order)
    groups = [path[a:b + 1] for a, b in zip(cuts, cuts[1:])]
    jumps, budgets, exc, exc_before, sizes, exact = [], [], [], [], [], []
    for g in groups:
        k = len(g)
        if k >= mu:
            jumps.append(tuple(g[p - 1] for p in equal_size_positions(k, mu)))
        else:
            jumps.append(tuple(g))
        budgets.append(m.walk_length(g))
        exc.append(_excess(m, g, mu))
        exc_before.append(_excess(m, g[:-1], mu))
        sizes.append(k)
        exact.append(tuple(g) if (small_group_exhaustive and k < mu * mu) else None)
    guess = DeadlineGuess(tuple(path[c] for c in cuts), tuple(jumps), tuple(budgets), tuple(exc),
                          tuple(exc_before), tuple(sizes), tuple(exact))
    return eligible_sets(guess, m)


def breakpoint_positions(m: MetricInstance, path: Sequence[int], eps: Fraction, order: int) -> List[int]:
    """Positions 0 = c_0 < c_1 < ... < c_m = len(path) - 1 of the breakpoints."""
    thr = _thresholds(m, eps, len(path) + 1)
    cuts = [0]
    for p in range(1, len(path)):
        i = len(cuts) - 1
        if _excess(m, path[cuts[-1]:p + 1], order) > thr[i]:
            cuts.append(p)
    if cuts[-1] != len(path) - 1:
        cuts.append(len(path) - 1)
    return cuts


@dataclass
class GuessStream:
    """Skeletons induced by on-time simple paths from ``s``, yielded in nondecreasing m."""

    metric: MetricInstance
    s: int
    eps: Fraction
    order: int
    mu: int
    m_max: int = 4
    small_group_exhaustive: bool = True
    max_paths: Optional[int] = 200_000
    capped: bool = field(default=False, init=False)
    m_max_pruned: bool = field(default=False, init=False)
    paths_seen: int = field(default=0, init=False)

    def __iter__(self) -> Iterator[DeadlineGuess]:
        m = self.metric
        thr = _thresholds(m, self.eps, self.m_max + 2)
        buckets: Dict[int, List[DeadlineGuess]] = {k: [] for k in range(self.m_max + 1)}
        seen = set()
        # depth-first over on-time simple paths; the skeleton is extended incrementally
        stack = [((self.s,), Fraction(0), (0,))]
        while stack:
            path, now, cuts = stack.pop()
            self.paths_seen += 1
            full = cuts if cuts[-1] == len(path) - 1 else cuts + (len(path) - 1,)
            g = induce_guess(m, path, self.eps, self.order, self.mu, self.small_group_exhaustive, full)
            if g.key() not in seen:
                seen.add(g.key())
                buckets[g.m].append(g)
            if self.max_paths is not None and self.paths_seen >= self.max_paths:
                self.capped = True
                break
            last = path[-1]
            used = set(path)
            for v in range(m.n - 1, -1, -1):
                if v in used:
                    continue
                arrive = now + m.d(last, v)
                dl = m.deadline(v)
                if dl is not None and arrive > dl:
                    continue
                npath = path + (v,)
                ncuts = cuts
                closed = len(cuts) - 1
                if _excess(m, npath[cuts[-1]:], self.order) > thr[closed]:
                    ncuts = cuts + (len(npath) - 1,)
                groups = len(ncuts) - 1 + (0 if ncuts[-1] == len(npath) - 1 else 1)
                if groups > self.m_max:
                    self.m_max_pruned = True
                    continue
                stack.append((npath, arrive, ncuts))
        for k in range(self.m_max + 1):
            yield from buckets[k]


def enumerate_guesses(m: MetricInstance, s: int, eps: Fraction, order: int, mu: Optional[int] = None,
                      m_max: int = 4, known_path: Optional[Sequence[int]] = None,
                      small_group_exhaustive: bool = True,
                      max_paths: Optional[int] = 200_000):
    """Stream of skeletons; with ``known_path`` exactly the skeleton induced by that path."""
    mu = mu if mu is not None else jump_size_for(eps, "floor")
    if known_path is not None:
        if known_path[0] != s:
            raise DeadlineInputError("known path must start at the start vertex")
        return [induce_guess(m, known_path, Fraction(eps), order, mu, small_group_exhaustive)]
    return GuessStream(m, s, Fraction(eps), order, mu, m_max, small_group_exhaustive, max_paths)


# ------------------------------------------------------------------ phase 2

def _popcount(x: int) -> int:
    return bin(x).count("1")


class DoublingLegs:
    """Leg tables read from the root table of the split-tree DP."""

    def __init__(self, solver: DoublingSolver):
        self.solver = solver
        self.metric = solver.metric
        self.tables = solver.tables
        self.root = solver.tree.root
        tab = self.tables.table(self.root)
        if tab.verts != tuple(range(self.metric.n)):  # pragma: no cover
            raise ValueError("root cluster must hold every vertex")
        self.T = tab.T
        self.masks = np.arange(self.T.shape[0], dtype=np.int64)

    def _leg(self, a: int, b: int, eligible: FrozenSet[int]):
        """credited mask -> (scaled cost, visited mask) with the cheapest visited mask per credit."""
        if a == b:
            return {((1 << a) if a in eligible else 0): (0, 1 << a)}
        nmask = sum(1 << v for v in eligible)
        col = self.T[:, a, b]
        ok = np.nonzero(col < self.tables.inf)[0]
        cost = col[ok]
        order = np.lexsort((ok, cost))
        ok, cost = ok[order], cost[order]
        cred = ok & nmask
        _, first = np.unique(cred, return_index=True)
        return {int(cred[f]): (int(cost[f]), int(ok[f])) for f in first}

    def group(self, guess: DeadlineGuess, i: int, budget: Fraction):
        """credited mask -> (length, legs) for group i within ``budget``."""
        cap = budget * self.tables.scale
        best: Dict[int, Tuple[int, Tuple[int, ...]]] = {0: (0, ())}
        for (a, b), elig in zip(guess.legs(i), guess.eligible[i]):
            leg = _pareto(self._leg(a, b, elig))
            nxt: Dict[int, Tuple[int, Tuple[int, ...]]] = {}
            for c1, (v1, ms) in best.items():
                for c2, (v2, mk) in leg.items():
                    val = v1 + v2
                    if val > cap:
                        continue
                    c = c1 | c2
                    cur = nxt.get(c)
                    if cur is None or (val, ms + (mk,)) < cur:
                        nxt[c] = (val, ms + (mk,))
            best = _pareto(nxt)
        out = {}
        for c, (val, ms) in best.items():
            legs = [self.tables.trace(self.root, mk, a, b) if a != b else [a]
                    for mk, (a, b) in zip(ms, guess.legs(i))]
            out[c] = (Fraction(val, self.tables.scale), legs)
        return out


def _pareto(d: Dict[int, Tuple]) -> Dict[int, Tuple]:
    """Drop entries whose cost is matched by a credited superset."""
    items = sorted(d.items(), key=lambda kv: (-_popcount(kv[0]), kv[1][0], kv[0]))
    keep: Dict[int, Tuple] = {}
    for c, val in items:
        if any((c | k) == k and kv[0] <= val[0] for k, kv in keep.items()):
            continue
        keep[c] = val
    return keep


@dataclass
class MglResult:
    legs: Optional[List[List[List[int]]]]
    prize: int
    credited: int
    group_lengths: List[Fraction]
    budgets: List[Fraction]

    @property
    def feasible(self) -> bool:
        return self.legs is not None


def _exact_group(m: MetricInstance, guess: DeadlineGuess, i: int, offset: Fraction):
    path = guess.exact_paths[i]
    assert path is not None
    t = offset
    credit = 0
    for p, v in enumerate(path):
        if p:
            t += m.d(path[p - 1], v)
        dl = m.deadline(v)
        if dl is None or t <= dl:
            credit |= 1 << v
    # split at the jump nodes so legs line up with the skeleton
    cuts = [path.index(u) for u in guess.jumps[i]]
    legs = [list(path[a:b + 1]) for a, b in zip(cuts, cuts[1:])] or [list(path)]
    return {credit: (m.walk_length(path), legs)}


def solve_mgl_orienteering(m: MetricInstance, backend, guess: DeadlineGuess, eps: Fraction,
                           count_start: bool = True) -> MglResult:
    """Best union of credited vertices over groups, each group within B_i - eps * E*_i.

    Groups carrying an exact path use it as is with budget B_i.
    """
    eps = Fraction(eps)
    options = []
    budgets = []
    offset = Fraction(0)
    for i in range(guess.m):
        if guess.exact_paths[i] is not None:
            budget = guess.budgets[i]
            opts = _exact_group(m, guess, i, offset)
        else:
            budget = guess.budgets[i] - eps * guess.excess[i]
            opts = backend.group(guess, i, budget)
        budgets.append(budget)
        offset += guess.budgets[i]
        if not opts:
            return MglResult(None, 0, 0, [], budgets)
        options.append(opts)
    reach: Dict[int, Tuple] = {0: ()}
    for opts in options:
        nxt: Dict[int, Tuple] = {}
        for U, picks in reach.items():
            for c in sorted(opts):
                V = U | c
                cand = picks + (c,)
                if V not in nxt or cand < nxt[V]:
                    nxt[V] = cand
        reach = nxt
    drop = 0 if count_start else (1 << guess.breakpoints[0])
    U = max(reach, key=lambda u: (_popcount(u & ~drop), -u))
    picks = reach[U]
    legs = [options[i][c][1] for i, c in enumerate(picks)]
    lengths = [options[i][c][0] for i, c in enumerate(picks)]
    for length, budget in zip(lengths, budgets):
        if length > budget:  # pragma: no cover - enforced by the tables
            raise AssertionError("group exceeds its budget")
    return MglResult(legs, _popcount(U & ~drop), U, lengths, budgets)


def concatenate_and_verify(m: MetricInstance, s: int, legs: Sequence[Sequence[Sequence[int]]],
                           count_start: Optional[bool] = None) -> Tuple[Walk, int]:
    """Chain every leg into one walk from ``s`` and recount on-time vertices from scratch."""
    seq = [s]
    for group in legs:
        for leg in group:
            if not leg or leg[0] != seq[-1]:
                raise DeadlineInputError(f"leg starting at {leg[0] if leg else None!r} does not continue "
                                         f"the walk ending at {seq[-1]!r}")
            seq.extend(leg[1:])
    w = Walk(m, seq)
    if count_start is None:
        count_start = start_counts(m, s)
    return w, on_time_count(w, count_start)


def prefix_violations(m: MetricInstance, guess: DeadlineGuess, legs, eps: Fraction) -> List[tuple]:
    """Credited vertices whose in-group prefix exceeds the jump prefix plus (1 - eps) E'_i."""
    out = []
    for i, group in enumerate(legs):
        if guess.exact_paths[i] is not None:
            continue
        t = Fraction(0)
        jump_prefix = Fraction(0)
        for j, leg in enumerate(group):
            if j:
                a, b = guess.jumps[i][j - 1], guess.jumps[i][j]
                jump_prefix += m.d(a, b)
            limit = jump_prefix + (1 - Fraction(eps)) * guess.excess_before[i]
            for p, v in enumerate(leg):
                if p:
                    t += m.d(leg[p - 1], v)
                if v in guess.eligible[i][j] and t > limit:
                    out.append((i, j, v, t, limit))
    return out


# ------------------------------------------------------------------ drivers

@dataclass
class DeadlineResult:
    walk: Walk
    count: int
    certified: bool
    guess: Optional[DeadlineGuess]
    claimed: int
    info: dict = field(default_factory=dict)

    def arrivals(self) -> Dict[int, Fraction]:
        return self.walk.arrival_times()


def _run(m: MetricInstance, s: int, eps: Fraction, backend, guesses, count_start: bool) -> DeadlineResult:
    best: Optional[DeadlineResult] = None
    evaluated = 0
    for g in guesses:
        if g.m == 0:
            w = Walk(m, (s,))
            res = DeadlineResult(w, on_time_count(w, count_start), True, g, int(count_start))
        else:
            mgl = solve_mgl_orienteering(m, backend, g, eps, count_start)
            evaluated += 1
            if not mgl.feasible:
                continue
            w, cnt = concatenate_and_verify(m, s, mgl.legs, count_start)
            res = DeadlineResult(w, cnt, True, g, mgl.prize)
        if best is None or res.count > best.count:
            best = res
    assert best is not None
    best.info = {"guesses_evaluated": evaluated}
    return best


def _stream_info(stream) -> Tuple[bool, dict]:
    if isinstance(stream, GuessStream):
        return (not stream.capped and not stream.m_max_pruned,
                {"paths_seen": stream.paths_seen, "capped": stream.capped,
                 "m_max_pruned": stream.m_max_pruned})
    return True, {"known_path": True}


def solve_deadline_dbl(m: MetricInstance, s: int, eps: Fraction = Fraction(1, 2),
                       cfg: Optional[SolverConfig] = None, m_max: int = 4,
                       known_path: Optional[Sequence[int]] = None,
                       small_group_exhaustive: bool = True, count_start: Optional[bool] = None,
                       retries: int = 3, require_integral: bool = True,
                       max_paths: Optional[int] = 200_000) -> DeadlineResult:
    """Deadline TSP on a doubling metric; the best verified walk over every streamed skeleton."""
    if require_integral:
        check_integral(m)
    eps = Fraction(eps)
    mu = jump_size_for(eps, "floor")
    if count_start is None:
        count_start = start_counts(m, s)
    base = cfg or SolverConfig(eps=eps, gamma=16)
    base = replace(base, eps=eps, mu=mu)
    t0 = time.perf_counter()
    result = None
    for attempt in range(max(1, retries)):
        solver = DoublingSolver(m, replace(base, seed=base.seed + attempt))
        stream = enumerate_guesses(m, s, eps, mu, mu, m_max, known_path, small_group_exhaustive, max_paths)
        res = _run(m, s, eps, DoublingLegs(solver), stream, count_start)
        phase1_ok, sinfo = _stream_info(stream)
        res.certified = phase1_ok and solver.certified
        res.info.update(sinfo, seed=solver.cfg.seed, attempts=attempt + 1, mu=mu,
                        gamma=solver.cfg.gamma)
        if result is None or res.count > result.count:
            result = res
        if solver.certified:
            break
    assert result is not None
    result.info["wall_time"] = time.perf_counter() - t0
    return result


class TwLegs:
    """Group tables from the tree-decomposition DP with bitmask gains."""

    def __init__(self, tw):
        self.tw = tw
        self.metric = tw.metric

    def group(self, guess: DeadlineGuess, i: int, budget: Fraction):
        m = self.metric
        ids = m.node_ids
        legs = [(ids[a], ids[b]) for a, b in guess.legs(i)]
        table, tables = self.tw.leg_table(legs, guess.eligible[i])
        scale = self.tw.problem.scale
        out = {}
        for c, (cost, st) in table.items():
            length = m.from_raw(Fraction(cost, scale))
            if length > budget:
                continue
            out[c] = (length, st)
        out = _pareto(out)
        res = {}
        for c, (length, st) in out.items():
            walks = self.tw._walks(tables, self.tw.td.root, st, c, legs)
            res[c] = (length, [[m.index(v) for v in w] for w in walks])
        return res


def solve_deadline_tw(graph, td, s, deadlines, eps: Fraction = Fraction(1, 2), m_max: int = 4,
                      known_path: Optional[Sequence] = None, small_group_exhaustive: bool = True,
                      count_start: Optional[bool] = None,
                      max_paths: Optional[int] = 200_000) -> DeadlineResult:
    """Deadline TSP on a weighted graph with a tree decomposition (2-excess breakpoints)."""
    from .treewidth import TwSolver

    tw = TwSolver(graph, td)
    m = tw.metric
    order = m.node_ids
    m = build_metric(graph=graph, node_ids=order, deadlines=deadlines)
    tw.metric = m
    check_integral(m)
    eps = Fraction(eps)
    mu = jump_size_for(eps, "floor")
    si = m.index(s)
    if count_start is None:
        count_start = start_counts(m, si)
    kp = None if known_path is None else [m.index(v) for v in known_path]
    t0 = time.perf_counter()
    stream = enumerate_guesses(m, si, eps, 2, mu, m_max, kp, small_group_exhaustive, max_paths)
    res = _run(m, si, eps, TwLegs(tw), stream, count_start)
    ok, sinfo = _stream_info(stream)
    res.certified = ok
    res.info.update(sinfo, mu=mu, width=tw.width, wall_time=time.perf_counter() - t0)
    return res


# ------------------------------------------------------------------ bicriteria

def _floor_power(x: Fraction, lam: Fraction) -> Fraction:
    """Largest lam**k <= x for x > 0."""
    k = math.floor(math.log(x) / math.log(lam)) if x != 1 else 0
    p = lam ** k
    while p > x:
        k -= 1
        p = lam ** k
    while p * lam <= x:
        k += 1
        p = lam ** k
    return p


def _ceil_power(x: Fraction, lam: Fraction) -> Fraction:
    p = _floor_power(x, lam)
    return p if p == x else p * lam


@dataclass
class Rounding:
    metric: MetricInstance
    original: MetricInstance
    lam: Fraction

    def violation(self, w: Walk) -> Fraction:
        """Largest ratio of true arrival time to deadline over vertices on time in the rounded instance."""
        rounded = Walk(self.metric, w.vertices).arrival_times()
        true = Walk(self.original, w.vertices).arrival_times()
        worst = Fraction(1)
        for v, a in rounded.items():
            dl_r = self.metric.deadline(v)
            if dl_r is not None and a > dl_r:
                continue
            dl = self.original.deadline(v)
            if dl is None or true[v] <= dl:
                continue
            worst = max(worst, true[v] / dl) if dl > 0 else worst
        return worst


def bicriteria_round(m: MetricInstance, eps: Fraction) -> Rounding:
    """Distances down and deadlines up to powers of lam = 1 + eps**2 / delta, then the shortest-path closure."""
    eps = Fraction(eps)
    lam = 1 + eps * eps / m.scale_levels
    n = m.n
    low = [[Fraction(0) if i == j else _floor_power(m.d(i, j), lam) for j in range(n)] for i in range(n)]
    for k in range(n):
        for i in range(n):
            for j in range(n):
                via = low[i][k] + low[k][j]
                if via < low[i][j]:
                    low[i][j] = via
    dls = None
    if m.deadlines is not None:
        dls = {}
        for v in range(n):
            dl = m.deadline(v)
            if dl is None:
                continue
            dls[m.node_ids[v]] = _ceil_power(dl, lam) if dl > 0 else dl
    rounded = build_metric(matrix=low, node_ids=m.node_ids, deadlines=dls, normalize=False,
                           validate_triangle=False)
    rounded = rounded.with_endpoints(m.start, m.end)
    return Rounding(rounded, m, lam)


def floor_power(x, lam) -> Fraction:
    return _floor_power(Fraction(x), Fraction(lam))


def ceil_power(x, lam) -> Fraction:
    return _ceil_power(Fraction(x), Fraction(lam))
