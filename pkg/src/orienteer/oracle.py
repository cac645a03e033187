"""Brute-force ground truth: subset DPs and permutation enumeration on the metric completion."""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .metric import MetricInstance
from .paths import Jump, Walk, WalkError, _check_mu

MAX_KSTROLL_N = 16
MAX_DEADLINE_N = 14
MAX_JUMP_LEN = 12
MAX_PERM_N = 8


class OracleError(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    value: Optional[Fraction | int]
    walk: Optional[Walk]
    states: int
    wall_time: float

    @property
    def feasible(self) -> bool:
        return self.walk is not None


def _path_table(m: MetricInstance, s: int):
    """dp[mask, v] = shortest path from s through exactly mask ending at v (s in mask)."""
    arr, scale = m.scaled
    n = m.n
    obj = arr.dtype == object
    inf = None if obj else np.iinfo(np.int64).max // 4
    if obj:
        dp = np.full((1 << n, n), None, dtype=object)
    else:
        dp = np.full((1 << n, n), inf, dtype=np.int64)
    dp[1 << s, s] = 0
    bits = 1 << np.arange(n)
    for mask in range(1 << n):
        if not (mask >> s) & 1:
            continue
        row = dp[mask]
        if obj:
            live = [v for v in range(n) if row[v] is not None]
            if not live:
                continue
            for nxt in range(n):
                if (mask >> nxt) & 1:
                    continue
                best = min(row[v] + arr[v, nxt] for v in live)
                cur = dp[mask | (1 << nxt), nxt]
                if cur is None or best < cur:
                    dp[mask | (1 << nxt), nxt] = best
        else:
            if row.min() >= inf:
                continue
            cand = (row[:, None] + arr).min(axis=0)
            free = np.nonzero((mask & bits) == 0)[0]
            if len(free):
                tgt = mask | bits[free]
                dp[tgt, free] = np.minimum(dp[tgt, free], cand[free])
    return dp, scale, inf


def _trace(m: MetricInstance, dp, s: int, mask: int, last: int) -> List[int]:
    arr, _ = m.scaled
    seq = [last]
    while mask != (1 << s) or last != s:
        prev_mask = mask & ~(1 << last)
        val = dp[mask, last]
        for p in range(m.n):
            if (prev_mask >> p) & 1 and dp[prev_mask, p] is not None and dp[prev_mask, p] + arr[p, last] == val:
                mask, last = prev_mask, p
                break
        else:  # pragma: no cover - table is consistent by construction
            raise OracleError("broken subset table")
        seq.append(last)
    return seq[::-1]


def _finite(x, inf) -> bool:
    return x is not None and (inf is None or x < inf)


def _popcounts(n: int) -> np.ndarray:
    return np.array([bin(x).count("1") for x in range(1 << n)])


def _stroll_candidates(m: MetricInstance, dp, inf, s: int, t: int):
    """Yield (cost, mask, last) for every path from s to t (closing to t when needed)."""
    arr, _ = m.scaled
    n = m.n
    for mask in range(1 << n):
        if not (mask >> s) & 1:
            continue
        if s != t:
            if (mask >> t) & 1 and _finite(dp[mask, t], inf):
                yield dp[mask, t], mask, t
        else:
            for v in range(n):
                if (mask >> v) & 1 and _finite(dp[mask, v], inf):
                    yield dp[mask, v] + arr[v, s], mask, v


def exact_kstroll(m: MetricInstance, s: int, t: int, k: int) -> OracleResult:
    """Shortest s-t path visiting at least k distinct nodes (Held-Karp on the completion)."""
    if m.n > MAX_KSTROLL_N:
        raise OracleError(f"exact k-stroll oracle limited to n <= {MAX_KSTROLL_N}")
    if k > m.n:
        raise OracleError(f"k={k} exceeds n={m.n}")
    t0 = time.perf_counter()
    dp, scale, inf = _path_table(m, s)
    best = None
    for cost, mask, last in _stroll_candidates(m, dp, inf, s, t):
        if bin(mask).count("1") >= k and (best is None or cost < best[0]):
            best = (cost, mask, last)
    states = (1 << m.n) * m.n
    if best is None:
        return OracleResult(None, None, states, time.perf_counter() - t0)
    seq = _trace(m, dp, s, best[1], best[2])
    if s == t and seq[-1] != t:
        seq.append(t)
    w = Walk(m, seq)
    return OracleResult(Fraction(int(best[0]), scale), w, states, time.perf_counter() - t0)


def exact_p2p(m: MetricInstance, s: int, t: int, budget: Fraction,
              exclude_endpoints: bool = False) -> OracleResult:
    """Most distinct nodes on an s-t path of length at most ``budget``."""
    if m.n > MAX_KSTROLL_N:
        raise OracleError(f"exact orienteering oracle limited to n <= {MAX_KSTROLL_N}")
    t0 = time.perf_counter()
    dp, scale, inf = _path_table(m, s)
    cap = Fraction(budget) * scale
    best = None
    for cost, mask, last in _stroll_candidates(m, dp, inf, s, t):
        if cost > cap:
            continue
        key = (bin(mask).count("1"), -cost)
        if best is None or key > best[0]:
            best = (key, mask, last, cost)
    states = (1 << m.n) * m.n
    if best is None:
        return OracleResult(None, None, states, time.perf_counter() - t0)
    seq = _trace(m, dp, s, best[1], best[2])
    if s == t and seq[-1] != t:
        seq.append(t)
    w = Walk(m, seq)
    prize = w.distinct_count - (len({s, t}) if exclude_endpoints else 0)
    return OracleResult(prize, w, states, time.perf_counter() - t0)


def start_counts(m: MetricInstance, s: int) -> bool:
    dl = m.deadline(s)
    return dl is None or dl >= 0


def on_time_count(w: Walk, count_start: Optional[bool] = None) -> int:
    """Distinct vertices whose first arrival is within their deadline."""
    m = w.metric
    arrival = w.arrival_times()
    total = 0
    for v, a in arrival.items():
        if v == w.first and count_start is not None:
            total += int(count_start)
            continue
        dl = m.deadline(v)
        if dl is None or a <= dl:
            total += 1
    return total


def exact_deadline(m: MetricInstance, s: int, count_start: Optional[bool] = None) -> OracleResult:
    """Maximum on-time count from s; DP over (on-time set, last) of earliest arrival."""
    if m.n > MAX_DEADLINE_N:
        raise OracleError(f"exact deadline oracle limited to n <= {MAX_DEADLINE_N}")
    if count_start is None:
        count_start = start_counts(m, s)
    t0 = time.perf_counter()
    arr, scale = m.scaled
    n = m.n
    lim = []
    for v in range(n):
        dl = m.deadline(v)
        lim.append(None if dl is None else dl * scale)
    best_time: dict = {(1 << s, s): 0}
    frontier = [(1 << s, s)]
    states = 1
    best = (1 << s, s)
    while frontier:
        nxt_frontier = {}
        for mask, last in frontier:
            t = best_time[(mask, last)]
            for v in range(n):
                if (mask >> v) & 1:
                    continue
                arrive = t + arr[last, v]
                if lim[v] is not None and arrive > lim[v]:
                    continue
                key = (mask | (1 << v), v)
                cur = nxt_frontier.get(key)
                if cur is None or arrive < cur:
                    nxt_frontier[key] = arrive
        for key, val in nxt_frontier.items():
            best_time[key] = val
        states += len(nxt_frontier)
        if nxt_frontier:
            best = min(nxt_frontier, key=lambda kv: (nxt_frontier[kv], kv))
        frontier = sorted(nxt_frontier)
    # rebuild the visit order of the best final state
    mask, last = best
    seq = [last]
    while mask != (1 << s):
        prev = mask & ~(1 << last)
        val = best_time[(mask, last)]
        for p in range(n):
            if (prev, p) in best_time and best_time[(prev, p)] + arr[p, last] == val:
                mask, last = prev, p
                break
        else:  # pragma: no cover
            raise OracleError("broken deadline table")
        seq.append(last)
    w = Walk(m, seq[::-1])
    value = w.distinct_count - (0 if count_start else 1)
    return OracleResult(value, w, states, time.perf_counter() - t0)


def exact_mu_jump(w: Walk, mu: int) -> Jump:
    """Enumerate every index subsequence with fixed endpoints; first maximum wins."""
    if len(w) > MAX_JUMP_LEN:
        raise OracleError(f"jump enumeration limited to walks of <= {MAX_JUMP_LEN} vertices")
    _check_mu(w, mu)
    k = len(w)
    best = None
    for mid in itertools.combinations(range(1, k - 1), mu - 2):
        j = Jump(w, (0,) + mid + (k - 1,))
        if best is None or j.length > best.length:
            best = j
    assert best is not None
    return best


def _perm_guard(m: MetricInstance) -> None:
    if m.n > MAX_PERM_N:
        raise OracleError(f"permutation oracles limited to n <= {MAX_PERM_N}")


def perm_kstroll(m: MetricInstance, s: int, t: int, k: int) -> Optional[Fraction]:
    _perm_guard(m)
    others = [v for v in range(m.n) if v not in (s, t)]
    need = max(0, k - len({s, t}))
    best = None
    for r in range(need, len(others) + 1):
        for mid in itertools.permutations(others, r):
            length = m.walk_length((s,) + mid + (t,))
            if best is None or length < best:
                best = length
    return best


def perm_p2p(m: MetricInstance, s: int, t: int, budget: Fraction) -> Optional[int]:
    _perm_guard(m)
    if m.d(s, t) > budget:
        return None
    others = [v for v in range(m.n) if v not in (s, t)]
    best = len({s, t})
    for r in range(1, len(others) + 1):
        for mid in itertools.permutations(others, r):
            if m.walk_length((s,) + mid + (t,)) <= budget:
                best = max(best, len({s, t}) + r)
                break
    return best


def perm_deadline(m: MetricInstance, s: int, count_start: Optional[bool] = None) -> int:
    _perm_guard(m)
    others = [v for v in range(m.n) if v != s]
    best = 0
    for r in range(0, len(others) + 1):
        for mid in itertools.permutations(others, r):
            best = max(best, on_time_count(Walk(m, (s,) + mid), count_start))
    return best


def permutation_cross_check(m: MetricInstance, s: int, t: int, k: int) -> bool:
    res = exact_kstroll(m, s, t, k)
    return res.value == perm_kstroll(m, s, t, k)


__all__ = [
    "OracleResult", "OracleError", "exact_kstroll", "exact_p2p", "exact_deadline",
    "exact_mu_jump", "perm_kstroll", "perm_p2p", "perm_deadline", "on_time_count",
    "start_counts", "WalkError",
]
