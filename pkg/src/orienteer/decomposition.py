"""Random net partitions, portals and the gamma-split-tree over a finite metric.

Clusters are identified by their vertex sets.  Every random choice made for
a cluster is seeded from (tree seed, vertex set, split index), so identical
vertex sets reached along different branches get identical subtrees and the
tree is stored as a DAG.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

from .metric import MetricInstance, diameter, doubling_dimension_estimate, greedy_net, is_cover
from .paths import Walk

VSet = FrozenSet[int]


class DecompositionError(ValueError):
    pass


class PortalBoundError(DecompositionError):
    """The portal-edge count exceeds its bound; the configured constant is too small."""


@dataclass(frozen=True)
class Cluster:
    id: int
    vertices: Tuple[int, ...]
    level: int
    diameter: Fraction

    @property
    def size(self) -> int:
        return len(self.vertices)


@dataclass(frozen=True)
class SplitNode:
    parent: VSet
    parts: Tuple[VSet, ...]
    centers: Tuple[int, ...]
    seed: str
    portals: Optional[Tuple[Tuple[int, ...], ...]] = None

    @cached_property
    def part_of(self) -> Dict[int, int]:
        return {v: i for i, p in enumerate(self.parts) for v in p}

    def portal_set(self, i: int) -> Tuple[int, ...]:
        if self.portals is None:
            raise DecompositionError("portals not attached")
        return self.portals[i]


def _rng(seed: object, vertices: Iterable[int], tag: str) -> random.Random:
    return random.Random(f"{seed}|{','.join(map(str, sorted(vertices)))}|{tag}")


def random_partition(m: MetricInstance, cluster: Iterable[int], rng: random.Random,
                     seed_label: str = "") -> SplitNode:
    """Parts are the cells of a random greedy net of radius diam/4."""
    verts = frozenset(cluster)
    if len(verts) < 2:
        raise DecompositionError("cannot partition a singleton cluster")
    diam = diameter(m, verts)
    net = greedy_net(m, verts, diam / 4, rng)
    cells: Dict[int, Set[int]] = {c: set() for c in net.centers}
    for v, c in net.assignment.items():
        cells[c].add(v)
    parts = tuple(sorted((frozenset(p) for p in cells.values() if p), key=min))
    return SplitNode(verts, parts, net.centers, seed_label)


def portal_beta(eps: Fraction, kappa_prime: Fraction, delta: int) -> Fraction:
    return Fraction(eps) / (4 * Fraction(kappa_prime) * delta)


def attach_portals(m: MetricInstance, split: SplitNode, eps: Fraction, kappa_prime: Fraction,
                   delta: int, rng: random.Random) -> SplitNode:
    """Portal set of each part is a greedy net of radius beta * diam(part)."""
    beta = portal_beta(eps, kappa_prime, delta)
    portals = []
    for part in split.parts:
        net = greedy_net(m, part, beta * diameter(m, part), rng)
        portals.append(tuple(sorted(net.centers)))
    return SplitNode(split.parent, split.parts, split.centers, split.seed, tuple(portals))


def bridge_edges(split: SplitNode, candidates: Iterable[Tuple[int, int]]) -> Set[Tuple[int, int]]:
    where = split.part_of
    out = set()
    for u, v in candidates:
        if u in where and v in where and where[u] != where[v]:
            out.add((min(u, v), max(u, v)))
    return out


def all_bridge_edges(split: SplitNode) -> Set[Tuple[int, int]]:
    verts = sorted(split.parent)
    return bridge_edges(split, ((u, v) for i, u in enumerate(verts) for v in verts[i + 1:]))


def portal_edge_bound(eps: Fraction, kappa_prime: Fraction, delta: int, kappa: float) -> float:
    return (16 * float(kappa_prime) * delta / float(eps)) ** (2 * kappa)


def portal_edges(split: SplitNode, bound: Optional[float] = None) -> Set[Tuple[int, int]]:
    if split.portals is None:
        raise DecompositionError("portals not attached")
    out = set()
    for i, pi in enumerate(split.portals):
        for pj in split.portals[i + 1:]:
            for u in pi:
                for v in pj:
                    out.add((min(u, v), max(u, v)))
    if bound is not None and len(out) > bound:
        raise PortalBoundError(f"{len(out)} portal edges exceed the bound {bound:.3g}")
    return out


@dataclass(frozen=True)
class TreeParams:
    gamma: int
    leaf_size: int = 3
    eps: Fraction = Fraction(1, 2)
    kappa: float = 1.0
    kappa_prime: Fraction = Fraction(4)
    delta: int = 1
    seed: object = 0


@dataclass
class GammaSplitTree:
    metric: MetricInstance = field(repr=False)
    params: TreeParams
    root: VSet
    clusters: Dict[VSet, Cluster]
    splits: Dict[VSet, Tuple[SplitNode, ...]]

    @property
    def gamma(self) -> int:
        return self.params.gamma

    @property
    def leaf_size(self) -> int:
        return self.params.leaf_size

    def is_leaf(self, c: VSet) -> bool:
        return len(c) <= self.params.leaf_size

    @property
    def height(self) -> int:
        return 1 + max(c.level for c in self.clusters.values())

    def stats(self) -> dict:
        return {
            "clusters": len(self.clusters),
            "split_nodes": sum(len(s) for s in self.splits.values()),
            "height": self.height,
            "gamma": self.gamma,
            "leaf_size": self.leaf_size,
        }

    def to_json(self) -> dict:
        ids = self.metric.node_ids
        order = sorted(self.clusters.values(), key=lambda c: c.id)
        out = {"params": {"gamma": self.gamma, "leaf_size": self.leaf_size,
                          "eps": str(self.params.eps), "kappa": self.params.kappa,
                          "kappa_prime": str(self.params.kappa_prime),
                          "delta": self.params.delta, "seed": str(self.params.seed)},
               "root": self.clusters[self.root].id, "clusters": [], "splits": []}
        for c in order:
            out["clusters"].append({"id": c.id, "level": c.level, "diameter": str(c.diameter),
                                    "vertices": [ids[v] for v in c.vertices]})
        for c in order:
            for j, s in enumerate(self.splits.get(frozenset(c.vertices), ())):
                out["splits"].append({
                    "cluster": c.id, "index": j, "seed": s.seed,
                    "parts": [self.clusters[p].id for p in s.parts],
                    "portals": [[ids[v] for v in ps] for ps in (s.portals or ())],
                })
        return out


def default_kappa_prime(kappa: float) -> Fraction:
    return Fraction(2 * math.ceil(kappa) + 2)


def make_params(m: MetricInstance, gamma: int, leaf_size: int = 3, eps: Fraction = Fraction(1, 2),
                kappa: Optional[float] = None, kappa_prime: Optional[Fraction] = None,
                seed: object = 0) -> TreeParams:
    if kappa is None:
        kappa = doubling_dimension_estimate(m)
    if kappa_prime is None:
        kappa_prime = default_kappa_prime(kappa)
    return TreeParams(gamma, leaf_size, Fraction(eps), kappa, Fraction(kappa_prime),
                      m.scale_levels, seed)


def build_gamma_split_tree(m: MetricInstance, params: TreeParams,
                           vertices: Optional[Iterable[int]] = None,
                           check_portal_bound: bool = True) -> GammaSplitTree:
    """Alternating cluster/split levels; every non-leaf cluster gets gamma random splits."""
    if params.gamma < 1 or params.leaf_size < 1:
        raise DecompositionError("gamma and leaf size must be positive")
    root = frozenset(range(m.n) if vertices is None else vertices)
    if not root:
        raise DecompositionError("empty vertex set")
    bound = portal_edge_bound(params.eps, params.kappa_prime, params.delta, params.kappa)
    clusters: Dict[VSet, Cluster] = {}
    splits: Dict[VSet, Tuple[SplitNode, ...]] = {}
    frontier = [root]
    level = 0
    while frontier:
        nxt: List[VSet] = []
        for c in frontier:
            if c in clusters:
                continue
            clusters[c] = Cluster(len(clusters), tuple(sorted(c)), level, diameter(m, c))
            if len(c) <= params.leaf_size:
                continue
            made = []
            for j in range(params.gamma):
                label = f"{params.seed}/{j}"
                s = random_partition(m, c, _rng(params.seed, c, f"split{j}"), label)
                s = attach_portals(m, s, params.eps, params.kappa_prime, params.delta,
                                   _rng(params.seed, c, f"portal{j}"))
                if check_portal_bound:
                    portal_edges(s, bound)
                made.append(s)
                nxt.extend(p for p in s.parts if p not in clusters)
            splits[c] = tuple(made)
        frontier = nxt
        level += 1
    return GammaSplitTree(m, params, root, clusters, splits)


def check_tree(tree: GammaSplitTree) -> List[str]:
    """Exact structural scan; returns a list of violations (empty when valid)."""
    m = tree.metric
    p = tree.params
    beta = portal_beta(p.eps, p.kappa_prime, p.delta)
    problems = []
    for c, info in tree.clusters.items():
        if tree.is_leaf(c):
            if c in tree.splits:
                problems.append(f"leaf cluster {info.id} has splits")
            continue
        sp = tree.splits.get(c, ())
        if len(sp) != p.gamma:
            problems.append(f"cluster {info.id} has {len(sp)} splits, expected {p.gamma}")
        for s in sp:
            union = frozenset().union(*s.parts)
            if union != c or sum(len(x) for x in s.parts) != len(c):
                problems.append(f"split of cluster {info.id} is not a partition")
            for part in s.parts:
                if 2 * diameter(m, part) > info.diameter:
                    problems.append(f"part of cluster {info.id} exceeds half the diameter")
                if part not in tree.clusters:
                    problems.append(f"part of cluster {info.id} missing from the tree")
            if s.portals is None:
                problems.append(f"split of cluster {info.id} has no portals")
                continue
            for part, ports in zip(s.parts, s.portals):
                radius = beta * diameter(m, part)
                if not set(ports) <= part or not is_cover(m, part, ports, radius):
                    problems.append(f"portals of a part of cluster {info.id} do not cover it")
    return problems


def nearest_portal(m: MetricInstance, v: int, portals: Sequence[int]) -> int:
    return min(portals, key=lambda q: (m.dist[v][q], q))


def make_portal_respecting(w: Walk, split: SplitNode) -> Walk:
    """Route every cross-part step u->v through the nearest portals u' and v'."""
    m = w.metric
    where = split.part_of
    out = [w.vertices[0]]
    for u, v in zip(w.vertices, w.vertices[1:]):
        if u in where and v in where and where[u] != where[v]:
            up = nearest_portal(m, u, split.portal_set(where[u]))
            vp = nearest_portal(m, v, split.portal_set(where[v]))
            for x in (up, vp, v):
                if out[-1] != x:
                    out.append(x)
        else:
            out.append(v)
    return Walk(m, out)


def crossing_count(w: Walk, split: SplitNode) -> int:
    where = split.part_of
    return sum(1 for u, v in zip(w.vertices, w.vertices[1:])
               if u in where and v in where and where[u] != where[v])


def separation_frequencies(m: MetricInstance, cluster: Iterable[int], trials: int,
                           seed: object = 0) -> Dict[Tuple[int, int], float]:
    """Fraction of random partitions of ``cluster`` separating each pair."""
    verts = sorted(cluster)
    counts = {(u, v): 0 for i, u in enumerate(verts) for v in verts[i + 1:]}
    for t in range(trials):
        s = random_partition(m, verts, _rng(seed, verts, f"trial{t}"))
        where = s.part_of
        for (u, v) in counts:
            if where[u] != where[v]:
                counts[(u, v)] += 1
    return {k: c / trials for k, c in counts.items()}


def fit_separation_constant(m: MetricInstance, cluster: Iterable[int],
                            freqs: Dict[Tuple[int, int], float]) -> float:
    """Smallest constant c with freq(u,v) <= c * d(u,v) / diam for every pair."""
    diam = float(diameter(m, cluster))
    if diam == 0:
        return 0.0
    return max((f * diam / float(m.dist[u][v]) for (u, v), f in freqs.items()), default=0.0)


def binomial_margin(p: float, trials: int, sigmas: float = 3.0) -> float:
    return sigmas * math.sqrt(max(p * (1 - p), 0.0) / trials)
