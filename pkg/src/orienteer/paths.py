"""Walks, jumps, excess and the segment utilities shared by the solvers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, List, Sequence, Tuple

from .metric import MetricInstance


class WalkError(ValueError):
    pass


@dataclass(frozen=True)
class Walk:
    metric: MetricInstance = field(compare=False, repr=False)
    vertices: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
        if not self.vertices:
            raise WalkError("a walk needs at least one vertex")

    @cached_property
    def length(self) -> Fraction:
        return self.metric.walk_length(self.vertices)

    @cached_property
    def distinct_count(self) -> int:
        return len(set(self.vertices))

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def first(self) -> int:
        return self.vertices[0]

    @property
    def last(self) -> int:
        return self.vertices[-1]

    def arrival_times(self) -> dict:
        """First-visit prefix length of every visited vertex."""
        t = Fraction(0)
        out = {self.vertices[0]: t}
        for a, b in zip(self.vertices, self.vertices[1:]):
            t += self.metric.dist[a][b]
            out.setdefault(b, t)
        return out


@dataclass(frozen=True)
class Jump:
    walk: Walk = field(repr=False)
    indices: Tuple[int, ...]

    @cached_property
    def length(self) -> Fraction:
        vs = self.walk.vertices
        return self.walk.metric.walk_length([vs[i] for i in self.indices])

    @property
    def vertices(self) -> Tuple[int, ...]:
        return tuple(self.walk.vertices[i] for i in self.indices)


def subpath(w: Walk, u_pos: int, v_pos: int) -> Walk:
    if not (0 <= u_pos <= v_pos < len(w)):
        raise WalkError(f"bad slice ({u_pos}, {v_pos}) of a walk with {len(w)} vertices")
    return Walk(w.metric, w.vertices[u_pos:v_pos + 1])


def _check_mu(w: Walk, mu: int) -> None:
    if mu < 2 or mu > len(w):
        raise WalkError(f"jump size {mu} out of range for a walk with {len(w)} vertices")


def optimal_mu_jump(w: Walk, mu: int) -> Jump:
    """Longest jump keeping ``mu`` positions (endpoints fixed).

    DP over (position, positions still to place) from the end of the walk;
    the forward reconstruction takes the smallest optimal next index, which
    yields the lexicographically smallest optimal index tuple.
    """
    _check_mu(w, mu)
    k = len(w)
    d = w.metric.dist
    vs = w.vertices
    neg = None
    # best[c][i]: max length from position i to the end using c positions (i and k-1 included)
    best: List[List] = [[neg] * k for _ in range(mu + 1)]
    best[1][k - 1] = Fraction(0)
    for c in range(2, mu + 1):
        row, prev = best[c], best[c - 1]
        for i in range(k - 2, -1, -1):
            top = neg
            for j in range(i + 1, k):
                if prev[j] is None:
                    continue
                val = d[vs[i]][vs[j]] + prev[j]
                if top is None or val > top:
                    top = val
            row[i] = top
    idx = [0]
    c = mu
    while c > 1:
        i = idx[-1]
        target = best[c][i]
        for j in range(i + 1, k):
            if best[c - 1][j] is not None and d[vs[i]][vs[j]] + best[c - 1][j] == target:
                idx.append(j)
                break
        c -= 1
    return Jump(w, tuple(idx))


def mu_excess(w: Walk, mu: int) -> Fraction:
    return w.length - optimal_mu_jump(w, mu).length


def equal_size_positions(k: int, mu: int) -> Tuple[int, ...]:
    """1-based positions ceil((j-1)(k-1)/(mu-1)) + 1 for j = 1..mu."""
    if k < mu or mu < 2:
        raise WalkError(f"cannot place {mu} equally spaced positions in {k}")
    return tuple(-((-(j - 1) * (k - 1)) // (mu - 1)) + 1 for j in range(1, mu + 1))


def equal_size_jump(w: Walk, mu: int) -> Jump:
    if len(w) < mu:
        raise WalkError(f"walk of {len(w)} vertices is shorter than jump size {mu}")
    return Jump(w, tuple(p - 1 for p in equal_size_positions(len(w), mu)))


def jump_legs(j: Jump) -> List[Walk]:
    """Sub-walks between consecutive jump positions."""
    return [subpath(j.walk, a, b) for a, b in zip(j.indices, j.indices[1:])]


def shortcut(w: Walk, segments: Iterable[Tuple[int, int]]) -> Walk:
    """Replace every index range (i, j) by the direct step from position i to position j.

    Ranges may touch at an endpoint but must not overlap.
    """
    segs = sorted((int(a), int(b)) for a, b in segments)
    for a, b in segs:
        if not (0 <= a <= b < len(w)):
            raise WalkError(f"segment ({a}, {b}) outside the walk")
    for (a1, b1), (a2, b2) in zip(segs, segs[1:]):
        if a2 < b1:
            raise WalkError(f"segments ({a1}, {b1}) and ({a2}, {b2}) overlap")
    drop = set()
    for a, b in segs:
        drop.update(range(a + 1, b))
    return Walk(w.metric, tuple(v for i, v in enumerate(w.vertices) if i not in drop))


def restrict(w: Walk, cluster: Iterable[int]) -> List[Walk]:
    """Maximal contiguous sub-walks whose vertices all lie in ``cluster``."""
    inside = set(cluster)
    runs: List[Walk] = []
    cur: List[int] = []
    for v in w.vertices:
        if v in inside:
            cur.append(v)
        elif cur:
            runs.append(Walk(w.metric, cur))
            cur = []
    if cur:
        runs.append(Walk(w.metric, cur))
    return runs


def restricted_length(w: Walk, cluster: Iterable[int]) -> Fraction:
    return sum((r.length for r in restrict(w, cluster)), Fraction(0))


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def jump_size_for(eps: Fraction, rounding: str = "floor") -> int:
    """Jump size 1 + floor(1/eps) or 1 + ceil(1/eps)."""
    inv = 1 / Fraction(eps)
    return 1 + (math.floor(inv) if rounding == "floor" else math.ceil(inv))
