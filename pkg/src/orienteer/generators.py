"""Seeded instance generators.  Every generator is a pure function of its parameters and seed."""
from __future__ import annotations

import random
from fractions import Fraction
from typing import Dict, List, Optional

import networkx as nx

from .instance import Instance
from .metric import MetricError, MetricInstance
from .treewidth import TreeDecomposition, heuristic_tree_decomposition, validate_tree_decomposition

KINDS = ("euclidean", "uniform", "tree-metric", "grid-graph", "low-treewidth", "integer-metric")


def _distinct_points(rng: random.Random, n: int, side: int, dim: int) -> List[List[int]]:
    if (side + 1) ** dim < n:
        raise MetricError(f"grid of side {side} cannot hold {n} distinct points")
    seen = set()
    pts = []
    while len(pts) < n:
        p = tuple(rng.randint(0, side) for _ in range(dim))
        if p not in seen:
            seen.add(p)
            pts.append(list(p))
    return pts


def tour_deadlines(m: MetricInstance, rng: random.Random, start: int = 0,
                   jitter: Fraction = Fraction(1, 5), integral: bool = True) -> Dict[int, Fraction]:
    """Deadlines from a random reference tour's prefix times scaled by 1 +- jitter (raw units)."""
    order = [v for v in range(m.n) if v != start]
    rng.shuffle(order)
    dl = {start: Fraction(0)}
    t = Fraction(0)
    last = start
    for v in order:
        t += m.to_raw(m.d(last, v))
        last = v
        f = 1 + Fraction(rng.randint(-100, 100), 100) * jitter
        x = t * f
        dl[v] = Fraction(int(x)) if integral else x
    return dl


def euclidean(n: int, seed: int, side: int = 10, dim: int = 2) -> Instance:
    rng = random.Random(f"euclidean|{n}|{side}|{dim}|{seed}")
    pts = _distinct_points(rng, n, side, dim)
    return Instance(f"euclidean-n{n}-s{seed}", list(range(n)), coords=[[Fraction(c) for c in p] for p in pts],
                    start=0, meta={"generator": "euclidean", "n": n, "seed": seed, "side": side, "dim": dim})


def uniform(n: int, seed: int = 0) -> Instance:
    mat = [[Fraction(0 if i == j else 1) for j in range(n)] for i in range(n)]
    return Instance(f"uniform-n{n}", list(range(n)), matrix=mat, start=0,
                    meta={"generator": "uniform", "n": n, "seed": seed})


def tree_metric(n: int, seed: int, max_weight: int = 8) -> Instance:
    rng = random.Random(f"tree|{n}|{max_weight}|{seed}")
    g = nx.Graph()
    g.add_node(0)
    for v in range(1, n):
        g.add_edge(v, rng.randrange(v), weight=rng.randint(1, max_weight))
    sp = dict(nx.all_pairs_dijkstra_path_length(g))
    mat = [[Fraction(sp[i][j]) for j in range(n)] for i in range(n)]
    return Instance(f"tree-metric-n{n}-s{seed}", list(range(n)), matrix=mat, start=0,
                    meta={"generator": "tree-metric", "n": n, "seed": seed, "max_weight": max_weight})


def integer_metric(n: int, seed: int, max_weight: int = 8) -> Instance:
    """Shortest-path closure of a complete graph with integer weights in [1, max_weight]."""
    rng = random.Random(f"intmetric|{n}|{max_weight}|{seed}")
    g = nx.complete_graph(n)
    for u, v in sorted(g.edges):
        g[u][v]["weight"] = rng.randint(1, max_weight)
    sp = dict(nx.all_pairs_dijkstra_path_length(g))
    mat = [[Fraction(sp[i][j]) for j in range(n)] for i in range(n)]
    return Instance(f"integer-metric-n{n}-s{seed}", list(range(n)), matrix=mat, start=0,
                    meta={"generator": "integer-metric", "n": n, "seed": seed, "max_weight": max_weight})


def grid_graph(rows: int, cols: int, seed: int, max_weight: int = 8) -> Instance:
    rng = random.Random(f"grid|{rows}|{cols}|{max_weight}|{seed}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1, Fraction(rng.randint(1, max_weight))))
            if r + 1 < rows:
                edges.append((v, v + cols, Fraction(rng.randint(1, max_weight))))
    inst = Instance(f"grid-{rows}x{cols}-s{seed}", list(range(rows * cols)), edges=edges, start=0,
                    meta={"generator": "grid-graph", "rows": rows, "cols": cols, "seed": seed,
                          "max_weight": max_weight})
    _attach_td(inst, heuristic_tree_decomposition(inst.graph()))
    return inst


def _attach_td(inst: Instance, td: TreeDecomposition) -> None:
    inst.bags = {b: sorted(v) for b, v in td.bags.items()}
    inst.bag_tree = [list(e) for e in td.edges]
    inst.root = td.root


def low_treewidth(n: int, width: int, seed: int, max_weight: int = 8, keep: float = 0.7) -> Instance:
    """Random partial k-tree; ships the better of its construction decomposition and the heuristic one."""
    if width < 1 or n < width + 1:
        raise MetricError(f"need n >= width + 1 and width >= 1 (got n={n}, width={width})")
    rng = random.Random(f"ktree|{n}|{width}|{max_weight}|{keep}|{seed}")
    g = nx.complete_graph(width + 1)
    bags = {0: frozenset(range(width + 1))}
    cliques = [tuple(range(width + 1))]
    tree_edges = []
    for v in range(width + 1, n):
        ci = rng.randrange(len(cliques))
        sub = rng.sample(cliques[ci], width)
        for u in sub:
            g.add_edge(u, v)
        cliques.append(tuple(sorted(sub)) + (v,))
        bags[len(bags)] = frozenset(cliques[-1])
        tree_edges.append((ci, len(bags) - 1))
    for u, v in sorted(g.edges):
        if rng.random() > keep:
            g.remove_edge(u, v)
            if not nx.is_connected(g):
                g.add_edge(u, v)
    edges = [(u, v, Fraction(rng.randint(1, max_weight))) for u, v in sorted(g.edges)]
    inst = Instance(f"low-treewidth-n{n}-w{width}-s{seed}", list(range(n)), edges=edges, start=0,
                    meta={"generator": "low-treewidth", "n": n, "width": width, "seed": seed,
                          "max_weight": max_weight})
    built = TreeDecomposition(bags, tree_edges, 0)
    heur = heuristic_tree_decomposition(inst.graph())
    td = heur if heur.width <= built.width else built
    assert validate_tree_decomposition(inst.graph(), td) is None
    _attach_td(inst, td)
    return inst


def generate(kind: str, seed: int, n: Optional[int] = None, side: int = 10, dim: int = 2,
             max_weight: int = 8, width: int = 2, rows: Optional[int] = None, cols: Optional[int] = None,
             deadlines: bool = False, jitter: Fraction = Fraction(1, 5)) -> Instance:
    if kind == "euclidean":
        inst = euclidean(_need(n), seed, side, dim)
    elif kind == "uniform":
        inst = uniform(_need(n), seed)
    elif kind == "tree-metric":
        inst = tree_metric(_need(n), seed, max_weight)
    elif kind == "integer-metric":
        inst = integer_metric(_need(n), seed, max_weight)
    elif kind == "grid-graph":
        if rows is None or cols is None:
            raise MetricError("grid-graph needs rows and cols")
        inst = grid_graph(rows, cols, seed, max_weight)
    elif kind == "low-treewidth":
        inst = low_treewidth(_need(n), width, seed, max_weight)
    else:
        raise MetricError(f"unknown generator {kind!r}; choose from {', '.join(KINDS)}")
    if deadlines:
        m = inst.metric(with_deadlines=False)
        rng = random.Random(f"deadlines|{inst.id}|{seed}")
        raw = tour_deadlines(m, rng, m.index(inst.start), jitter, integral=m.integral)
        inst.deadlines = {m.node_ids[v]: x for v, x in sorted(raw.items())}
        inst.meta["deadlines"] = {"jitter": str(jitter)}
    return inst


def _need(n: Optional[int]) -> int:
    if n is None or n < 1:
        raise MetricError("generator needs a positive node count n")
    return n
