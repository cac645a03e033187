"""Finite metric spaces with exact rational distances, balls, nets and diagnostics."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

Number = int | float | str | Fraction

# sentinel for "unreachable" in integer DP tables
INT_INF = 1 << 62


class MetricError(ValueError):
    """Raised when raw input does not describe a valid finite metric."""


def to_fraction(x: Number) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise MetricError(f"boolean is not a distance: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise MetricError(f"non-finite value {x!r}")
        # decimal reading keeps 0.1 as 1/10 rather than its binary expansion
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x)
    raise MetricError(f"unsupported number type {type(x).__name__}")


@dataclass(frozen=True)
class MetricInstance:
    """Immutable finite metric on nodes 0..n-1 with external ids.

    Distances are normalized so the smallest nonzero distance is 1; ``unit``
    records the raw length of one normalized unit.  Deadlines are stored in
    normalized units, ``None`` meaning no deadline.
    """

    node_ids: Tuple[Hashable, ...]
    dist: Tuple[Tuple[Fraction, ...], ...]
    unit: Fraction = Fraction(1)
    coords: Optional[Tuple[Tuple[Fraction, ...], ...]] = None
    deadlines: Optional[Tuple[Optional[Fraction], ...]] = None
    start: int = 0
    end: Optional[int] = None
    integral: bool = True

    @property
    def n(self) -> int:
        return len(self.node_ids)

    def d(self, u: int, v: int) -> Fraction:
        return self.dist[u][v]

    @cached_property
    def _index(self) -> Dict[Hashable, int]:
        return {v: i for i, v in enumerate(self.node_ids)}

    def index(self, node_id: Hashable) -> int:
        try:
            return self._index[node_id]
        except KeyError:
            raise MetricError(f"unknown node {node_id!r}") from None

    @cached_property
    def aspect_ratio(self) -> Fraction:
        """Diameter of the normalized metric (the aspect ratio)."""
        return max((max(row) for row in self.dist), default=Fraction(0))

    @property
    def log_aspect(self) -> float:
        a = self.aspect_ratio
        return math.log2(a) if a > 0 else 0.0

    @cached_property
    def scale_levels(self) -> int:
        """Integer stand-in for log of the aspect ratio, at least 1."""
        a = self.aspect_ratio
        if a <= 1:
            return 1
        return max(1, math.ceil(math.log2(a)))

    @cached_property
    def scaled(self) -> Tuple[np.ndarray, int]:
        """Integer distance matrix and the factor it was multiplied by.

        Falls back to an object array of Python ints when values would not
        fit in int64.
        """
        denom = reduce(math.lcm, (x.denominator for row in self.dist for x in row), 1)
        rows = [[int(x * denom) for x in row] for row in self.dist]
        top = max((max(r) for r in rows), default=0)
        if top * max(self.n, 1) * 4 < INT_INF:
            arr = np.array(rows, dtype=np.int64).reshape(self.n, self.n)
        else:
            arr = np.empty((self.n, self.n), dtype=object)
            for i, r in enumerate(rows):
                for j, x in enumerate(r):
                    arr[i, j] = x
        arr.setflags(write=False)
        return arr, denom

    def walk_length(self, vertices: Sequence[int]) -> Fraction:
        return sum((self.dist[a][b] for a, b in zip(vertices, vertices[1:])), Fraction(0))

    def deadline(self, v: int) -> Optional[Fraction]:
        if self.deadlines is None:
            return None
        return self.deadlines[v]

    def with_deadlines(self, deadlines: Optional[Sequence[Optional[Fraction]]]) -> "MetricInstance":
        tup = None if deadlines is None else tuple(deadlines)
        return MetricInstance(self.node_ids, self.dist, self.unit, self.coords, tup,
                              self.start, self.end, self.integral)

    def with_endpoints(self, start: int, end: Optional[int]) -> "MetricInstance":
        return MetricInstance(self.node_ids, self.dist, self.unit, self.coords,
                              self.deadlines, start, end, self.integral)

    def to_raw(self, x: Fraction) -> Fraction:
        return x * self.unit

    def from_raw(self, x: Number) -> Fraction:
        return to_fraction(x) / self.unit


@dataclass(frozen=True)
class NetResult:
    centers: Tuple[int, ...]
    radius: Fraction
    assignment: Dict[int, int] = field(compare=False)


def _exact_sqrt(q: Fraction) -> Optional[Fraction]:
    p, r = math.isqrt(q.numerator), math.isqrt(q.denominator)
    if p * p == q.numerator and r * r == q.denominator:
        return Fraction(p, r)
    return None


def _snapped_sqrt(q: Fraction, grid: int) -> Fraction:
    # smallest m with m/grid >= sqrt(q), plus one extra grid step; the extra
    # step keeps the snapped distances a metric
    target = q * grid * grid
    m = math.isqrt(target.numerator // target.denominator)
    while Fraction(m * m) < target:
        m += 1
    return Fraction(m + 1, grid)


def euclidean_distances(points: Sequence[Sequence[Fraction]], grid: int = 10**6) -> List[List[Fraction]]:
    """Pairwise L2 distances as rationals.

    Exact when every pairwise distance is rational, otherwise every nonzero
    distance is rounded up to ``1/grid`` plus one grid step.
    """
    n = len(points)
    sq = [[sum(((a - b) ** 2 for a, b in zip(points[i], points[j])), Fraction(0))
           for j in range(n)] for i in range(n)]
    exact = [[_exact_sqrt(sq[i][j]) for j in range(n)] for i in range(n)]
    if all(x is not None for row in exact for x in row):
        return [list(row) for row in exact]  # type: ignore[arg-type]
    return [[Fraction(0) if i == j else _snapped_sqrt(sq[i][j], grid) for j in range(n)]
            for i in range(n)]


def graph_distances(graph: nx.Graph, order: Sequence[Hashable]) -> List[List[Fraction]]:
    if graph.number_of_nodes() == 0:
        raise MetricError("empty graph")
    if not nx.is_connected(graph):
        comps = list(nx.connected_components(graph))
        a, b = next(iter(comps[0])), next(iter(comps[1]))
        raise MetricError(f"graph is disconnected: no path between {a!r} and {b!r}")
    for u, v, w in graph.edges(data="weight", default=1):
        if to_fraction(w) <= 0:
            raise MetricError(f"edge ({u!r}, {v!r}) has non-positive weight {w!r}")
    g = nx.Graph()
    g.add_nodes_from(graph.nodes)
    g.add_weighted_edges_from((u, v, to_fraction(w)) for u, v, w in graph.edges(data="weight", default=1))
    sp = dict(nx.all_pairs_dijkstra_path_length(g, weight="weight"))
    return [[Fraction(sp[a][b]) for b in order] for a in order]


def check_triangle(dist: Sequence[Sequence[Fraction]], ids: Sequence[Hashable]) -> None:
    n = len(dist)
    if n < 3:
        return
    denom = reduce(math.lcm, (x.denominator for row in dist for x in row), 1)
    rows = [[int(x * denom) for x in row] for row in dist]
    big = max(max(r) for r in rows) * 3 >= INT_INF
    arr = np.array(rows, dtype=object if big else np.int64)
    for k in range(n):
        via = arr[:, k][:, None] + arr[k, :][None, :]
        bad = np.argwhere(arr > via)
        if len(bad):
            i, j = (int(x) for x in bad[0])
            raise MetricError(
                f"triangle inequality violated: d({ids[i]!r},{ids[j]!r}) > "
                f"d({ids[i]!r},{ids[k]!r}) + d({ids[k]!r},{ids[j]!r})")


def build_metric(
    matrix: Optional[Sequence[Sequence[Number]]] = None,
    coords: Optional[Sequence[Sequence[Number]]] = None,
    graph: Optional[nx.Graph] = None,
    node_ids: Optional[Sequence[Hashable]] = None,
    start: Optional[Hashable] = None,
    end: Optional[Hashable] = None,
    deadlines: Optional[Mapping[Hashable, Number]] = None,
    validate_triangle: Optional[bool] = None,
    normalize: bool = True,
    grid: int = 10**6,
) -> MetricInstance:
    """Build a normalized metric from exactly one of a matrix, coordinates or a weighted graph.

    ``start``/``end`` and deadline keys refer to node ids.  Deadlines are in
    raw units and are rescaled together with the distances.
    """
    given = [x is not None for x in (matrix, coords, graph)]
    if sum(given) != 1:
        raise MetricError("provide exactly one of matrix, coords, graph")

    pts = None
    if graph is not None:
        ids = list(node_ids) if node_ids is not None else sorted(graph.nodes, key=repr)
        dist = graph_distances(graph, ids)
        tri_needed = False
    elif coords is not None:
        pts = [tuple(to_fraction(c) for c in p) for p in coords]
        if len({len(p) for p in pts}) > 1:
            raise MetricError("coordinates have mixed dimensions")
        ids = list(node_ids) if node_ids is not None else list(range(len(pts)))
        dist = euclidean_distances(pts, grid)
        tri_needed = False
    else:
        rows = [[to_fraction(x) for x in row] for row in matrix]  # type: ignore[union-attr]
        ids = list(node_ids) if node_ids is not None else list(range(len(rows)))
        n = len(rows)
        if any(len(r) != n for r in rows):
            raise MetricError("distance matrix is not square")
        for i in range(n):
            if rows[i][i] != 0:
                raise MetricError(f"nonzero diagonal at {ids[i]!r}")
            for j in range(i + 1, n):
                if rows[i][j] != rows[j][i]:
                    raise MetricError(f"asymmetric distance between {ids[i]!r} and {ids[j]!r}")
        dist = rows
        tri_needed = True

    n = len(dist)
    if n == 0:
        raise MetricError("metric has no nodes")
    if len(ids) != n or len(set(ids)) != n:
        raise MetricError("node ids must be unique and match the data size")
    for i in range(n):
        for j in range(n):
            if i != j and dist[i][j] <= 0:
                raise MetricError(f"non-positive distance between {ids[i]!r} and {ids[j]!r}")
    if validate_triangle is None:
        validate_triangle = n <= 64
    if tri_needed and validate_triangle:
        check_triangle(dist, ids)

    integral = all(x.denominator == 1 for row in dist for x in row)
    positive = [x for row in dist for x in row if x > 0]
    unit = min(positive) if (normalize and positive) else Fraction(1)
    norm = tuple(tuple(x / unit for x in row) for row in dist)
    idx = {v: i for i, v in enumerate(ids)}

    def locate(v: Hashable) -> int:
        if v not in idx:
            raise MetricError(f"unknown node {v!r}")
        return idx[v]

    dl = None
    if deadlines is not None:
        raw_dl = {locate(k): to_fraction(v) for k, v in deadlines.items()}
        integral = integral and all(x.denominator == 1 for x in raw_dl.values())
        dl = tuple(raw_dl[i] / unit if i in raw_dl else None for i in range(n))
    s = locate(start) if start is not None else 0
    e = locate(end) if end is not None else None
    cpts = None
    if pts is not None:
        cpts = tuple(tuple(c / unit for c in p) for p in pts)
    return MetricInstance(tuple(ids), norm, unit, cpts, dl, s, e, integral)


def ball(m: MetricInstance, v: int, r: Number) -> frozenset:
    r = to_fraction(r)
    row = m.dist[v]
    return frozenset(u for u in range(m.n) if row[u] <= r)


def diameter(m: MetricInstance, subset: Iterable[int]) -> Fraction:
    pts = list(subset)
    if not pts:
        raise MetricError("diameter of an empty set")
    best = Fraction(0)
    for i, u in enumerate(pts):
        row = m.dist[u]
        for v in pts[i + 1:]:
            if row[v] > best:
                best = row[v]
    return best


def assign_to_centers(m: MetricInstance, subset: Iterable[int], centers: Sequence[int],
                      radius: Fraction) -> Dict[int, int]:
    """Map each node to the nearest covering center, ties to the smallest index."""
    out = {}
    for u in subset:
        row = m.dist[u]
        best = min((c for c in centers if row[c] <= radius), key=lambda c: (row[c], c), default=None)
        if best is None:
            raise MetricError(f"node {m.node_ids[u]!r} is not covered")
        out[u] = best
    return out


def greedy_net(m: MetricInstance, subset: Iterable[int], rho: Number, rng: random.Random) -> NetResult:
    """Random greedy rho-net: pick an uncovered node uniformly, remove its closed ball."""
    rho = to_fraction(rho)
    remaining = sorted(set(subset))
    if not remaining:
        raise MetricError("net of an empty set")
    if rho < 0:
        raise MetricError("net radius must be nonnegative")
    pool = list(remaining)
    centers: List[int] = []
    while remaining:
        c = remaining[rng.randrange(len(remaining))]
        centers.append(c)
        row = m.dist[c]
        remaining = [u for u in remaining if row[u] > rho]
    return NetResult(tuple(centers), rho, assign_to_centers(m, pool, centers, rho))


def is_cover(m: MetricInstance, subset: Iterable[int], centers: Sequence[int], rho: Fraction) -> bool:
    return all(any(m.dist[u][c] <= rho for c in centers) for u in subset)


def is_separated(m: MetricInstance, centers: Sequence[int], rho: Fraction) -> bool:
    return all(m.dist[a][b] > rho for i, a in enumerate(centers) for b in centers[i + 1:])


def doubling_dimension_estimate(m: MetricInstance) -> float:
    """Heuristic upper estimate of the doubling dimension.

    At every dyadic scale r each ball of radius 2r is covered greedily by
    balls of radius r (set-cover greedy); the estimate is log2 of the
    largest cover size seen.
    """
    if m.n <= 1:
        return 0.0
    worst = 1
    top = m.scale_levels + 1
    for j in range(-1, top + 1):
        r = Fraction(2) ** j
        balls = [ball(m, c, r) for c in range(m.n)]
        for v in range(m.n):
            target = set(ball(m, v, 2 * r))
            count = 0
            while target:
                best = max(range(m.n), key=lambda c: (len(balls[c] & target), -c))
                target -= balls[best]
                count += 1
            worst = max(worst, count)
    return math.log2(worst)
