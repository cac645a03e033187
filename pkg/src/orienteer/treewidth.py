"""Exact multi-walk k-stroll and orienteering on graphs with a tree decomposition.

Each walk is tracked through the decomposition as an edge multiset: per bag
vertex the degree parity and the connected component it belongs to.  Every
graph edge is charged at the root-most bag containing both endpoints and
every vertex is counted once, at its token bag (the root-most bag holding
it), when it is forgotten.  An edge is used at most twice by some optimal
walk, so multiplicities range over 0, 1 and 2.  Witness walks are read off
the chosen edge multiset with an Euler trail.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Callable, Dict, FrozenSet, Hashable, List, Optional, Sequence, Tuple

import networkx as nx
from networkx.algorithms.approximation import treewidth_min_degree

from .metric import MetricInstance, build_metric, to_fraction
from .doubling import InfeasibleError, StrollResult
from .paths import Walk


class DecompositionInvalid(ValueError):
    pass


class TwInfeasible(ValueError):
    pass


@dataclass
class TreeDecomposition:
    bags: Dict[int, FrozenSet[Hashable]]
    edges: List[Tuple[int, int]]
    root: int = 0

    @property
    def width(self) -> int:
        return max((len(b) for b in self.bags.values()), default=0) - 1

    def adjacency(self) -> Dict[int, List[int]]:
        adj: Dict[int, List[int]] = {b: [] for b in self.bags}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def rooted(self) -> Tuple[Dict[int, Optional[int]], Dict[int, List[int]], List[int]]:
        """Parent map, children lists and a root-first order."""
        adj = self.adjacency()
        parent: Dict[int, Optional[int]] = {self.root: None}
        children: Dict[int, List[int]] = {b: [] for b in self.bags}
        order = [self.root]
        i = 0
        while i < len(order):
            b = order[i]
            i += 1
            for c in sorted(adj[b]):
                if c not in parent:
                    parent[c] = b
                    children[b].append(c)
                    order.append(c)
        return parent, children, order

    @property
    def is_binary(self) -> bool:
        _, children, _ = self.rooted()
        return all(len(c) <= 2 for c in children.values())

    def to_json(self) -> dict:
        return {"bags": {str(k): sorted(v, key=repr) for k, v in sorted(self.bags.items())},
                "bag_tree": [list(e) for e in self.edges], "root": self.root}


def validate_tree_decomposition(g: nx.Graph, td: TreeDecomposition) -> Optional[str]:
    """None when valid, else a message naming the first violated condition and a witness."""
    t = nx.Graph()
    t.add_nodes_from(td.bags)
    t.add_edges_from(td.edges)
    if len(td.bags) == 0 or not nx.is_tree(t):
        return "bag graph is not a tree"
    covered = set().union(*td.bags.values())
    for v in g.nodes:
        if v not in covered:
            return f"condition 1: vertex {v!r} is in no bag"
    for u, v in g.edges:
        if not any(u in b and v in b for b in td.bags.values()):
            return f"condition 2: edge ({u!r}, {v!r}) is in no bag"
    for v in g.nodes:
        holding = [b for b, bag in td.bags.items() if v in bag]
        if not nx.is_connected(t.subgraph(holding)):
            return f"condition 3: bags holding {v!r} are not connected"
    return None


def heuristic_tree_decomposition(g: nx.Graph) -> TreeDecomposition:
    """Min-degree elimination ordering; the width is an upper bound only."""
    if g.number_of_nodes() == 0:
        raise DecompositionInvalid("empty graph")
    if g.number_of_nodes() == 1:
        return TreeDecomposition({0: frozenset(g.nodes)}, [], 0)
    _, dg = treewidth_min_degree(g)
    nodes = sorted(dg.nodes, key=lambda b: (sorted(map(repr, b)), len(b)))
    ids = {b: i for i, b in enumerate(nodes)}
    edges = sorted((min(ids[a], ids[b]), max(ids[a], ids[b])) for a, b in dg.edges)
    return TreeDecomposition({ids[b]: frozenset(b) for b in nodes}, edges, 0)


def binarize(td: TreeDecomposition) -> TreeDecomposition:
    """Give every node at most two children by chaining duplicated bags."""
    parent, children, order = td.rooted()
    if all(len(c) <= 2 for c in children.values()):
        return td
    bags = dict(td.bags)
    edges = []
    nxt = max(bags) + 1
    for b in order:
        kids = children[b]
        holder = b
        while len(kids) > 2:
            dup = nxt
            nxt += 1
            bags[dup] = td.bags[b]
            edges.append((holder, kids[0]))
            edges.append((holder, dup))
            holder, kids = dup, kids[1:]
        for c in kids:
            edges.append((holder, c))
    return TreeDecomposition(bags, edges, td.root)


def token_bags(td: TreeDecomposition) -> Dict[Hashable, int]:
    """Root-most bag holding each vertex."""
    _, _, order = td.rooted()
    tokens: Dict[Hashable, int] = {}
    for b in order:
        for v in td.bags[b]:
            tokens.setdefault(v, b)
    return tokens


def edge_owner(td: TreeDecomposition, g: nx.Graph) -> Dict[Tuple[Hashable, Hashable], int]:
    _, _, order = td.rooted()
    owner = {}
    for u, v in g.edges:
        for b in order:
            if u in td.bags[b] and v in td.bags[b]:
                owner[(u, v)] = b
                break
    return owner


@dataclass(frozen=True)
class TwStrollKey:
    bag: int
    k: int
    pairs: Tuple[Tuple[Hashable, Hashable], ...]


# ------------------------------------------------------------------ DP core
# A walk state is (labels, parity, closed): labels[i] is 0 for an untouched
# bag position, otherwise a component label; parity is a bitmask.

def _canon(labels: Sequence[int]) -> Tuple[int, ...]:
    remap: Dict[int, int] = {}
    out = []
    for x in labels:
        if x == 0:
            out.append(0)
        else:
            if x not in remap:
                remap[x] = len(remap) + 1
            out.append(remap[x])
    return tuple(out)


def _merge(labels: Sequence[int], a: int, b: int) -> Tuple[int, ...]:
    la, lb = labels[a], labels[b]
    if la == lb:
        return tuple(labels)
    return tuple(la if x == lb else x for x in labels)


class _Table:
    """state -> gain -> (cost, back)"""

    def __init__(self):
        self.data: Dict[tuple, Dict[int, Tuple[int, object]]] = defaultdict(dict)

    def offer(self, state, gain, cost, back):
        slot = self.data[state]
        cur = slot.get(gain)
        if cur is None or cost < cur[0]:
            slot[gain] = (cost, back)

    def items(self):
        for st, gains in self.data.items():
            for g, (c, _) in gains.items():
                yield st, g, c


@dataclass
class TwProblem:
    graph: nx.Graph
    td: TreeDecomposition
    order: Tuple[Hashable, ...]

    def __post_init__(self):
        if not self.td.is_binary:
            self.td = binarize(self.td)
        problem = validate_tree_decomposition(self.graph, self.td)
        if problem:
            raise DecompositionInvalid(problem)
        self.index = {v: i for i, v in enumerate(self.order)}
        ws = [to_fraction(w) for _, _, w in self.graph.edges(data="weight", default=1)]
        self.scale = reduce(math.lcm, (w.denominator for w in ws), 1)
        self.weight = {}
        for u, v, w in self.graph.edges(data="weight", default=1):
            iw = int(to_fraction(w) * self.scale)
            self.weight[(u, v)] = iw
            self.weight[(v, u)] = iw
        self.parent, self.children, self.topdown = self.td.rooted()
        self.tokens = token_bags(self.td)
        owner = edge_owner(self.td, self.graph)
        self.own_edges: Dict[int, List[Tuple[Hashable, Hashable]]] = defaultdict(list)
        for (u, v), b in owner.items():
            self.own_edges[b].append((u, v))
        for b in self.own_edges:
            self.own_edges[b].sort(key=lambda e: (self.index[e[0]], self.index[e[1]]))
        self.bag_order = {b: tuple(sorted(bag, key=lambda v: self.index[v])) for b, bag in self.td.bags.items()}
        self._subtree: Dict[int, FrozenSet[Hashable]] = {}

    def subtree_vertices(self, b: int) -> FrozenSet[Hashable]:
        if b not in self._subtree:
            acc = set(self.td.bags[b])
            for c in self.children[b]:
                acc |= self.subtree_vertices(c)
            self._subtree[b] = frozenset(acc)
        return self._subtree[b]

    # -------------------------------------------------------------- run
    def run(self, top: int, pairs: Sequence[Tuple[Hashable, Hashable]],
            gain: Callable[[Hashable, int], int]):
        """Tables for the subtree under ``top``; returns (root table, tables by bag).

        ``gain(v, walks)`` is the prize for vertex ``v`` given the bitmask of
        walks touching it; gains of different vertices must add without
        interference (counts, or disjoint bits).
        """
        inside = self.subtree_vertices(top)
        for s, t in pairs:
            if s not in inside or t not in inside:
                raise TwInfeasible(f"pair ({s!r}, {t!r}) leaves the subtree")
        nw = len(pairs)
        ends = [(s, t) for s, t in pairs]
        tables: Dict[int, _Table] = {}
        post = []
        stack = [top]
        while stack:
            b = stack.pop()
            post.append(b)
            stack.extend(self.children[b])
        for b in reversed(post):
            tables[b] = self._node(b, top, ends, nw, gain, tables)
        return tables[top][-1], tables

    def _mark_endpoints(self, bag: Tuple, state, ends) -> Optional[tuple]:
        out = []
        for i, (labels, parity, closed) in enumerate(state):
            labels = list(labels)
            for p, v in enumerate(bag):
                if v in ends[i] and labels[p] == 0:
                    if closed:
                        return None
                    labels[p] = max(labels, default=0) + 1
            out.append((_canon(labels), parity, closed))
        return tuple(out)

    def _project(self, child_bag: Tuple, bag: Tuple, state) -> tuple:
        where = {v: p for p, v in enumerate(child_bag)}
        out = []
        for labels, parity, closed in state:
            nl = []
            np_ = 0
            for p, v in enumerate(bag):
                if v in where:
                    q = where[v]
                    nl.append(labels[q])
                    if parity >> q & 1:
                        np_ |= 1 << p
                else:
                    nl.append(0)
            out.append((_canon(nl), np_, closed))
        return tuple(out)

    @staticmethod
    def _join(s1, s2) -> Optional[tuple]:
        out = []
        for (l1, p1, c1), (l2, p2, c2) in zip(s1, s2):
            if c1 and c2:
                return None
            if (c1 and any(l2)) or (c2 and any(l1)):
                return None
            k = len(l1)
            uf = list(range(k))

            def find(x):
                while uf[x] != x:
                    uf[x] = uf[uf[x]]
                    x = uf[x]
                return x

            for labels in (l1, l2):
                first: Dict[int, int] = {}
                for p, x in enumerate(labels):
                    if x:
                        if x in first:
                            uf[find(p)] = find(first[x])
                        else:
                            first[x] = p
            nl = [find(p) + 1 if (l1[p] or l2[p]) else 0 for p in range(k)]
            out.append((_canon(nl), p1 ^ p2, c1 or c2))
        return tuple(out)

    def _node(self, b, top, ends, nw, gain, tables) -> List[_Table]:
        bag = self.bag_order[b]
        stages: List[_Table] = []
        empty = tuple((tuple(0 for _ in bag), 0, False) for _ in range(nw))
        cur = _Table()
        kids = self.children[b]
        if not kids:
            st = self._mark_endpoints(bag, empty, ends)
            if st is not None:
                cur.offer(st, 0, 0, ("leaf",))
        else:
            proj = []
            for c in kids:
                tab = defaultdict(dict)
                kept = tuple(v for v in self.bag_order[c] if v in self.td.bags[b])
                for st, g, cost in tables[c][-1].items():
                    ps = self._project(kept, bag, st)
                    slot = tab[ps]
                    if g not in slot or cost < slot[g][0]:
                        slot[g] = (cost, (c, st, g))
                proj.append(tab)
            if len(proj) == 1:
                for ps, gains in proj[0].items():
                    st = self._mark_endpoints(bag, ps, ends)
                    if st is None:
                        continue
                    for g, (cost, ref) in gains.items():
                        cur.offer(st, g, cost, ("one", ref))
            else:
                for s1, g1s in proj[0].items():
                    for s2, g2s in proj[1].items():
                        st = self._join(s1, s2)
                        if st is None:
                            continue
                        st = self._mark_endpoints(bag, st, ends)
                        if st is None:
                            continue
                        for g1, (c1, r1) in g1s.items():
                            for g2, (c2, r2) in g2s.items():
                                cur.offer(st, g1 + g2, c1 + c2, ("two", r1, r2))
        stages.append(cur)
        pos = {v: p for p, v in enumerate(bag)}
        # own edges, one walk at a time, multiplicity 0, 1 or 2
        for (u, v) in self.own_edges.get(b, ()):
            w = self.weight[(u, v)]
            pu, pv = pos[u], pos[v]
            for i in range(nw):
                nxt = _Table()
                for st, gains in cur.data.items():
                    labels, parity, closed = st[i]
                    for g, (cost, _) in gains.items():
                        nxt.offer(st, g, cost, ("edge", st, g, u, v, i, 0))
                    if closed:
                        continue
                    nl = list(labels)
                    fresh = max(nl, default=0) + 1
                    if nl[pu] == 0:
                        nl[pu] = fresh
                        fresh += 1
                    if nl[pv] == 0:
                        nl[pv] = fresh
                    merged = _canon(_merge(nl, pu, pv))
                    for mult in (1, 2):
                        npar = parity ^ ((1 << pu) | (1 << pv)) if mult == 1 else parity
                        ns = st[:i] + ((merged, npar, closed),) + st[i + 1:]
                        for g, (cost, _) in gains.items():
                            nxt.offer(ns, g, cost + mult * w, ("edge", st, g, u, v, i, mult))
                cur = nxt
                stages.append(cur)
        # forget vertices whose token bag is b (all of them at the subproblem top)
        if b == top:
            leaving = list(bag)
        else:
            pbag = self.td.bags[self.parent[b]]
            leaving = [v for v in bag if v not in pbag]
        for v in leaving:
            counts = self.tokens[v] == b or (b == top and self._token_below(v, top))
            nxt = _Table()
            p = bag.index(v)
            for st, gains in cur.data.items():
                ns = self._forget(st, p, v, ends)
                if ns is None:
                    continue
                wmask = 0
                for i, (labels, _, _) in enumerate(st):
                    if labels[p]:
                        wmask |= 1 << i
                add = gain(v, wmask) if counts else 0
                for g, (cost, _) in gains.items():
                    nxt.offer(ns, g + add, cost, ("forget", st, g, v))
            cur = nxt
            stages.append(cur)
            bag = tuple(x for x in bag if x != v)
        if b == top:
            final = _Table()
            for st, gains in cur.data.items():
                if all(c for _, _, c in st):
                    for g, (cost, _) in gains.items():
                        final.offer(st, g, cost, ("done", st, g))
            stages.append(final)
        return stages

    def _token_below(self, v, top) -> bool:
        b = self.tokens[v]
        while b is not None:
            if b == top:
                return True
            b = self.parent[b]
        return False

    @staticmethod
    def _forget(st, p, v, ends) -> Optional[tuple]:
        out = []
        for i, (labels, parity, closed) in enumerate(st):
            s, t = ends[i]
            want = 0 if s == t else int(v == s) + int(v == t)
            if (parity >> p & 1) != want % 2:
                return None
            lab = labels[p]
            rest = labels[:p] + labels[p + 1:]
            rpar = (parity & ((1 << p) - 1)) | ((parity >> (p + 1)) << p)
            if lab and lab not in rest:
                if closed or any(rest):
                    return None
                closed = True
            out.append((_canon(rest), rpar, closed))
        return tuple(out)

    # ---------------------------------------------------------- witness
    def edge_multisets(self, tables, top, state, gain_value, nw) -> List[Dict[Tuple, int]]:
        """Edge multiplicities of every walk for a final (state, gain) entry."""
        mult: List[Dict[Tuple, int]] = [defaultdict(int) for _ in range(nw)]
        todo = [(top, len(tables[top]) - 1, state, gain_value)]
        while todo:
            b, k, st, g = todo.pop()
            stages = tables[b]
            while True:
                back = stages[k].data[st][g][1]
                kind = back[0]
                if kind == "leaf":
                    break
                if kind == "one":
                    c, cst, cg = back[1]
                    todo.append((c, len(tables[c]) - 1, cst, cg))
                    break
                if kind == "two":
                    for c, cst, cg in (back[1], back[2]):
                        todo.append((c, len(tables[c]) - 1, cst, cg))
                    break
                if kind == "edge":
                    _, st, g, u, v, i, m = back
                    if m:
                        mult[i][(u, v)] += m
                else:
                    st, g = back[1], back[2]
                k -= 1
        return mult


def euler_walk(mult: Dict[Tuple, int], s, t) -> List:
    """Vertex sequence of an Euler trail from s to t over the edge multiset."""
    if not any(mult.values()):
        return [s] if s == t else None  # type: ignore[return-value]
    mg = nx.MultiGraph()
    for (u, v), k in mult.items():
        for _ in range(k):
            mg.add_edge(u, v)
    if s == t:
        edges = list(nx.eulerian_circuit(mg, source=s))
    else:
        edges = list(nx.eulerian_path(mg, source=s))
    seq = [s] + [b for _, b in edges]
    if seq[-1] != t:  # pragma: no cover - parity guarantees the end
        raise TwInfeasible("edge multiset does not end at the target")
    return seq


def count_gain(v, walks: int) -> int:
    return 1 if walks else 0


@dataclass
class TwSolver:
    """Exact solver for one weighted graph and decomposition; walks live on the shortest-path metric."""

    graph: nx.Graph
    td: Optional[TreeDecomposition] = None
    problem: TwProblem = field(init=False)
    metric: MetricInstance = field(init=False)

    def __post_init__(self):
        if self.graph.number_of_nodes() == 0:
            raise DecompositionInvalid("empty graph")
        order = tuple(sorted(self.graph.nodes, key=repr))
        if self.td is None:
            self.td = heuristic_tree_decomposition(self.graph)
        self.problem = TwProblem(self.graph, self.td, order)
        self.td = self.problem.td
        self.metric = build_metric(graph=self.graph, node_ids=order)

    @property
    def width(self) -> int:
        return self.td.width

    def _raw(self, cost: int) -> Fraction:
        return Fraction(cost, self.problem.scale)

    def _walks(self, tables, top, state, g, pairs) -> List[List[Hashable]]:
        mult = self.problem.edge_multisets(tables, top, state, g, len(pairs))
        return [euler_walk(mu, s, t) for mu, (s, t) in zip(mult, pairs)]

    def _to_walk(self, seq: Sequence[Hashable]) -> Walk:
        return Walk(self.metric, tuple(self.metric.index(v) for v in seq))

    def table(self, top: int, pairs, gain=count_gain):
        return self.problem.run(top, pairs, gain)

    def multipath(self, key: TwStrollKey) -> Tuple[Optional[Fraction], Optional[List[List[Hashable]]]]:
        """Minimum total raw length of walks for ``key.pairs`` under ``key.bag`` picking >= k tokens."""
        if key.bag not in self.td.bags:
            raise TwInfeasible(f"unknown bag {key.bag!r}")
        inside = self.problem.subtree_vertices(key.bag)
        for s, t in key.pairs:
            if s not in inside or t not in inside:
                raise TwInfeasible(f"pair ({s!r}, {t!r}) is outside the subtree of bag {key.bag!r}")
        root, tables = self.table(key.bag, list(key.pairs))
        best = None
        for st, g, cost in root.items():
            if g >= key.k and (best is None or (cost, g) < best[:2]):
                best = (cost, g, st)
        if best is None:
            return None, None
        cost, g, st = best
        return self._raw(cost), self._walks(tables, key.bag, st, g, list(key.pairs))

    def kstroll(self, s: Hashable, t: Hashable, k: int) -> StrollResult:
        n = self.graph.number_of_nodes()
        if k > n:
            raise InfeasibleError(f"k={k} exceeds n={n}")
        length, walks = self.multipath(TwStrollKey(self.td.root, k, ((s, t),)))
        if walks is None:
            return StrollResult(None, None, 0, True, {"width": self.width})
        w = self._to_walk(walks[0])
        return StrollResult(w, w.length, w.distinct_count, True,
                            {"width": self.width, "raw_length": str(length)})

    def p2p(self, s: Hashable, t: Hashable, budget: Fraction, exclude_endpoints: bool = False) -> StrollResult:
        """``budget`` is in normalized metric units, like every solver length."""
        m = self.metric
        budget = Fraction(budget)
        if m.d(m.index(s), m.index(t)) > budget:
            raise InfeasibleError("budget is below the distance between the endpoints")
        cap = m.to_raw(budget) * self.problem.scale
        root, tables = self.table(self.td.root, [(s, t)])
        best = None
        for st, g, cost in root.items():
            if cost <= cap and (best is None or (-g, cost) < best[:2]):
                best = (-g, cost, st)
        assert best is not None
        g, cost, st = -best[0], best[1], best[2]
        w = self._to_walk(self._walks(tables, self.td.root, st, g, [(s, t)])[0])
        prize = w.distinct_count - (len({s, t}) if exclude_endpoints else 0)
        return StrollResult(w, w.length, prize, True, {"width": self.width, "raw_length": str(self._raw(cost))})

    def leg_table(self, legs: Sequence[Tuple[Hashable, Hashable]],
                  eligible: Sequence[FrozenSet[int]]):
        """Credited metric-index mask -> (min total scaled cost, root state) for walks along ``legs``.

        A vertex is credited when some leg touching it has it in its eligible set.
        """
        idx = {v: self.metric.index(v) for v in self.graph.nodes}

        def gain(v, walks):
            i = idx[v]
            j = 0
            while walks:
                if walks & 1 and i in eligible[j]:
                    return 1 << i
                walks >>= 1
                j += 1
            return 0

        root, tables = self.table(self.td.root, list(legs), gain)
        out: Dict[int, Tuple[int, tuple]] = {}
        for st, g, cost in root.items():
            if g not in out or cost < out[g][0]:
                out[g] = (cost, st)
        return out, tables


def solve_multipath_kstroll_tw(graph: nx.Graph, td: TreeDecomposition, key: TwStrollKey):
    return TwSolver(graph, td).multipath(key)


def solve_kstroll_tw(graph: nx.Graph, td: Optional[TreeDecomposition], s, t, k: int) -> StrollResult:
    return TwSolver(graph, td).kstroll(s, t, k)


def solve_p2p_tw(graph: nx.Graph, td: Optional[TreeDecomposition], s, t, budget: Fraction,
                 exclude_endpoints: bool = False) -> StrollResult:
    return TwSolver(graph, td).p2p(s, t, budget, exclude_endpoints)
