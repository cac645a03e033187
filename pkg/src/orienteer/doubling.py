"""Split-tree dynamic program for multi-path k-stroll and point-to-point orienteering.

Every cluster of the gamma-split-tree gets a table ``T[mask, a, b]``: the
shortest a->b path inside the cluster that visits exactly the local vertex
set ``mask`` and respects the tree below the cluster.  A split combines the
child tables: a path is a sequence of child segments joined by crossing
edges between different parts.  The subset DP over ``mask`` enumerates every
crossing-edge set, its assignment to paths and its order at once, so the
table equals the minimum over explicit crossing-edge guesses.  The sparse
regime allows any bridge edge with at most ``sparse_cap`` crossings per
split; the dense regime allows only portal edges.  Leaves are solved
exhaustively.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .decomposition import (GammaSplitTree, SplitNode, TreeParams, VSet, build_gamma_split_tree,
                            default_kappa_prime)
from .metric import MetricInstance, doubling_dimension_estimate
from .paths import Walk, jump_size_for

INF64 = 1 << 60


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    eps: Fraction = Fraction(1, 2)
    mu: Optional[int] = None
    gamma: Optional[int] = None
    leaf_size: int = 3
    kappa: Optional[float] = None
    kappa_prime: Optional[Fraction] = None
    sparse_cap: Optional[int] = None
    max_crossings: Optional[int] = None
    seed: int = 0
    exhaustive_small: bool = True
    exclude_endpoints: bool = False

    def jump_size(self) -> int:
        return self.mu if self.mu is not None else jump_size_for(self.eps, "ceil")

    def resolved(self, m: MetricInstance) -> "SolverConfig":
        kappa = self.kappa if self.kappa is not None else doubling_dimension_estimate(m)
        kp = self.kappa_prime if self.kappa_prime is not None else default_kappa_prime(kappa)
        logn = max(1, math.ceil(math.log2(max(m.n, 2))))
        gamma = self.gamma if self.gamma is not None else 3 * logn
        cap = self.sparse_cap
        if cap is None:
            cap = math.ceil(2 * float(kp) * logn / float(self.eps))
        return replace(self, kappa=kappa, kappa_prime=Fraction(kp), gamma=gamma, sparse_cap=cap,
                       mu=self.jump_size())

    def density_threshold(self, m: MetricInstance) -> float:
        return math.log2(max(m.n, 2)) / float(self.eps)


def tree_params(m: MetricInstance, cfg: SolverConfig) -> TreeParams:
    c = cfg if cfg.sparse_cap is not None else cfg.resolved(m)
    return TreeParams(c.gamma, c.leaf_size, Fraction(c.eps), float(c.kappa), Fraction(c.kappa_prime),
                      m.scale_levels, c.seed)


def _popcount_table(c: int) -> np.ndarray:
    return np.array([bin(x).count("1") for x in range(1 << c)], dtype=np.int64)


_LAYERS: Dict[int, List[np.ndarray]] = {}


def _layers(c: int) -> List[np.ndarray]:
    if c not in _LAYERS:
        pc = _popcount_table(c)
        _LAYERS[c] = [np.nonzero(pc == k)[0] for k in range(c + 1)]
    return _LAYERS[c]


def subset_path_table(dloc: np.ndarray, inf) -> np.ndarray:
    """T[mask, a, b]: shortest a->b path visiting exactly ``mask`` (Held-Karp, all starts)."""
    c = dloc.shape[0]
    obj = dloc.dtype == object
    T = np.full((1 << c, c, c), inf, dtype=object if obj else np.int64)
    for a in range(c):
        T[1 << a, a, a] = 0
    bits = [1 << i for i in range(c)]
    for mask in range(1, 1 << c):
        cur = T[mask]
        if obj:
            if all(x >= inf for x in cur.ravel()):
                continue
        elif cur.min() >= inf:
            continue
        cand = (cur[:, :, None] + dloc[None, :, :]).min(axis=1)
        for nxt in range(c):
            if mask & bits[nxt]:
                continue
            tgt = mask | bits[nxt]
            T[tgt, :, nxt] = np.minimum(T[tgt, :, nxt], cand[:, nxt])
    # a path that starts and ends at the same vertex is only the trivial one
    for a in range(c):
        col = T[:, a, a].copy()
        T[:, a, a] = inf
        T[1 << a, a, a] = col[1 << a]
    return np.minimum(T, inf)


@dataclass
class ClusterTable:
    verts: Tuple[int, ...]
    pos: Dict[int, int]
    T: np.ndarray
    choice: Optional[np.ndarray] = None  # split*2 + regime attaining T, -1 where unreachable


@dataclass
class StrollResult:
    walk: Optional[Walk]
    length: Optional[Fraction]
    prize: int
    certified: bool
    info: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.walk is not None


class PathTables:
    """Lazily computed split-tree tables for every cluster of a tree."""

    def __init__(self, tree: GammaSplitTree, sparse_cap: int, max_crossings: Optional[int] = None):
        self.tree = tree
        self.metric = tree.metric
        arr, scale = self.metric.scaled
        self.D = arr
        self.scale = scale
        self.obj = arr.dtype == object
        if self.obj:
            self.inf = int(sum(int(x) for x in arr.ravel())) * 4 + 1
        else:
            self.inf = INF64
        self.sparse_cap = sparse_cap
        self.max_crossings = max_crossings
        self.capped = False
        self.tables: Dict[VSet, ClusterTable] = {}

    # ------------------------------------------------------------------ tables
    def table(self, cluster: VSet) -> ClusterTable:
        if cluster in self.tables:
            return self.tables[cluster]
        # children first, iteratively, to avoid deep recursion
        order: List[VSet] = []
        stack = [cluster]
        seen = set()
        while stack:
            c = stack.pop()
            if c in seen or c in self.tables:
                continue
            seen.add(c)
            order.append(c)
            for s in self.tree.splits.get(c, ()):
                stack.extend(p for p in s.parts if p not in self.tables)
        for c in sorted(order, key=len):
            if c not in self.tables:
                self.tables[c] = self._compute(c)
        return self.tables[cluster]

    def _local_d(self, verts: Sequence[int]) -> np.ndarray:
        idx = np.array(verts)
        return self.D[np.ix_(idx, idx)]

    def _compute(self, cluster: VSet) -> ClusterTable:
        verts = tuple(sorted(cluster))
        pos = {v: i for i, v in enumerate(verts)}
        if self.tree.is_leaf(cluster):
            return ClusterTable(verts, pos, subset_path_table(self._local_d(verts), self.inf))
        best = None
        choice = None
        for j, split in enumerate(self.tree.splits[cluster]):
            for regime in self._regimes(split, len(verts)):
                G = self._split_table(cluster, verts, pos, split, regime)
                if best is None:
                    best = G.copy()
                    choice = np.where(G < self.inf, 2 * j + regime, -1).astype(np.int16)
                else:
                    better = G < best
                    best = np.where(better, G, best)
                    choice = np.where(better, 2 * j + regime, choice).astype(np.int16)
        return ClusterTable(verts, pos, best, choice)

    def _cap_for(self, c: int) -> int:
        cap = self.sparse_cap
        if self.max_crossings is not None and self.max_crossings < min(cap, c - 1):
            self.capped = True
            cap = self.max_crossings
        return cap

    def _regimes(self, split: SplitNode, c: int) -> List[int]:
        # the uncapped sparse regime already admits every crossing pattern
        if self._cap_for(c) >= c - 1:
            return [0]
        return [0, 1]

    def _split_table(self, cluster: VSet, verts, pos, split: SplitNode, regime: int) -> np.ndarray:
        G = self._combine(verts, pos, split, regime)
        return G.min(axis=0) if G.shape[0] > 1 else G[0]

    def _part_info(self, pos, split: SplitNode):
        info = []
        for part in split.parts:
            child = self.table(part)
            cols = np.array([pos[v] for v in child.verts])
            p = len(cols)
            pm = np.zeros(1 << p, dtype=np.int64)
            for sl in range(1, 1 << p):
                m = 0
                for i in range(p):
                    if sl >> i & 1:
                        m |= 1 << int(cols[i])
                pm[sl] = m
            info.append((child, cols, pm))
        return info

    def _crossing_matrix(self, verts, pos, split: SplitNode, regime: int) -> np.ndarray:
        c = len(verts)
        where = split.part_of
        dl = self._local_d(verts).copy()
        for i, u in enumerate(verts):
            for j, v in enumerate(verts):
                if where[u] == where[v]:
                    dl[i, j] = self.inf
        if regime == 1:
            portals = set()
            for ps in split.portals or ():
                portals.update(ps)
            for i, u in enumerate(verts):
                for j, v in enumerate(verts):
                    if u not in portals or v not in portals:
                        dl[i, j] = self.inf
        return dl

    def _combine(self, verts, pos, split: SplitNode, regime: int) -> np.ndarray:
        c = len(verts)
        inf = self.inf
        cap = self._cap_for(c)
        counted = regime == 0 and cap < c - 1
        depth = cap + 1 if counted else 1
        dtype = object if self.obj else np.int64
        G = np.full((depth, 1 << c, c, c), inf, dtype=dtype)
        parts = self._part_info(pos, split)
        cross = self._crossing_matrix(verts, pos, split, regime)
        for child, cols, pm in parts:
            for sl in range(1, len(pm)):
                G[0, pm[sl]][np.ix_(cols, cols)] = child.T[sl]
        layers = _layers(c)
        allc = np.arange(c)
        for L in range(1, c):
            Ms = layers[L]
            for kk in range(depth):
                Gl = G[kk, Ms]
                if not self.obj and Gl.min() >= inf:
                    continue
                nk = kk + 1 if counted else kk
                if nk >= depth:
                    continue
                for child, cols, pm in parts:
                    notq = np.setdiff1d(allc, cols)
                    if len(notq) == 0:
                        continue
                    H = (Gl[:, :, notq][:, :, :, None] + cross[np.ix_(notq, cols)][None, None]).min(axis=2)
                    H = np.minimum(H, inf)
                    for sl in range(1, len(pm)):
                        ok = (Ms & pm[sl]) == 0
                        if not ok.any():
                            continue
                        Tb = child.T[sl]
                        vals = (H[ok][:, :, :, None] + Tb[None, None]).min(axis=2)
                        tgt = Ms[ok] | pm[sl]
                        ix = (nk, tgt[:, None, None], allc[None, :, None], cols[None, None, :])
                        G[ix] = np.minimum(G[ix], np.minimum(vals, inf))
        return G

    # ------------------------------------------------------------ witnesses
    def trace(self, cluster: VSet, mask: int, a: int, b: int) -> List[int]:
        """Global vertex sequence of the path stored at T[mask, a, b] (local indices)."""
        tab = self.table(cluster)
        val = tab.T[mask, a, b]
        if val >= self.inf:
            raise InfeasibleError("no path for this table entry")
        if tab.choice is None:
            return [tab.verts[i] for i in self._trace_leaf(tab, mask, a, b)]
        code = int(tab.choice[mask, a, b])
        j, regime = divmod(code, 2)
        split = self.tree.splits[cluster][j]
        G = self._combine(tab.verts, tab.pos, split, regime)
        parts = self._part_info(tab.pos, split)
        cross = self._crossing_matrix(tab.verts, tab.pos, split, regime)
        part_idx = {}
        for q, (child, cols, pm) in enumerate(parts):
            for col in cols:
                part_idx[int(col)] = q
        kk = next(k for k in range(G.shape[0]) if G[k, mask, a, b] == val)
        counted = G.shape[0] > 1
        segments = []
        y = b
        cur_mask = mask
        while True:
            q = part_idx[y]
            child, cols, pm = parts[q]
            local = {int(col): i for i, col in enumerate(cols)}
            # single first segment
            if kk == 0 and (cur_mask & ~int(pm[-1] if len(pm) > 1 else 0)) == 0 and a in local:
                sl = self._to_local(cur_mask, cols)
                if child.T[sl, local[a], local[y]] == G[0, cur_mask, a, y]:
                    segments.append(self.trace(frozenset(child.verts), sl, local[a], local[y]))
                    break
            target = G[kk, cur_mask, a, y]
            found = None
            pk = kk - 1 if counted else kk
            for sl in range(1, len(pm)):
                pmask = int(pm[sl])
                if not (sl >> local[y]) & 1 or (pmask & cur_mask) != pmask or pmask == cur_mask:
                    continue
                rest = cur_mask ^ pmask
                for xl in range(len(cols)):
                    if not (sl >> xl) & 1:
                        continue
                    tv = child.T[sl, xl, local[y]]
                    if tv >= self.inf:
                        continue
                    x = int(cols[xl])
                    for y0 in range(len(tab.verts)):
                        if not (rest >> y0) & 1 or part_idx[y0] == q or pk < 0:
                            continue
                        g = G[pk, rest, a, y0]
                        if g >= self.inf or cross[y0, x] >= self.inf:
                            continue
                        if g + cross[y0, x] + tv == target:
                            found = (sl, xl, rest, y0)
                            break
                    if found:
                        break
                if found:
                    break
            if found is None:  # pragma: no cover - tables are consistent
                raise InfeasibleError("failed to reconstruct a split path")
            sl, xl, rest, y0 = found
            segments.append(self.trace(frozenset(child.verts), sl, xl, local[y]))
            cur_mask, y, kk = rest, y0, pk
        out: List[int] = []
        for seg in reversed(segments):
            out.extend(seg)
        return out

    @staticmethod
    def _to_local(mask: int, cols) -> int:
        sl = 0
        for i, col in enumerate(cols):
            if mask >> int(col) & 1:
                sl |= 1 << i
        return sl

    def _trace_leaf(self, tab: ClusterTable, mask: int, a: int, b: int) -> List[int]:
        dl = self._local_d(tab.verts)
        seq = [b]
        while mask != (1 << a) or b != a:
            prev = mask & ~(1 << b)
            val = tab.T[mask, a, b]
            for p in range(len(tab.verts)):
                if prev >> p & 1 and tab.T[prev, a, p] < self.inf and tab.T[prev, a, p] + dl[p, b] == val:
                    mask, b = prev, p
                    break
            else:  # pragma: no cover
                raise InfeasibleError("broken leaf table")
            seq.append(b)
        return seq[::-1]


# ---------------------------------------------------------------- queries

def _stroll_costs(tables: PathTables, s: int, t: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per root mask: cost of the best s->t path (closing back to s when s == t) and its last vertex."""
    root = tables.tree.root
    tab = tables.table(root)
    a, b = tab.pos[s], tab.pos[t]
    if s != t:
        costs = tab.T[:, a, b].copy()
        last = np.full(costs.shape, b)
    else:
        back = tables._local_d(tab.verts)[:, a]
        closed = np.minimum(tab.T[:, a, :] + back[None, :], tables.inf)
        last = closed.argmin(axis=1)
        costs = closed.min(axis=1)
        costs[1 << a] = 0
        last[1 << a] = a
    return costs, last


def _root_walk(tables: PathTables, mask: int, s: int, t: int, last: int) -> List[int]:
    tab = tables.table(tables.tree.root)
    a = tab.pos[s]
    if s == t:
        if mask == 1 << a:
            return [s]
        return tables.trace(tables.tree.root, mask, a, last) + [s]
    return tables.trace(tables.tree.root, mask, a, tab.pos[t])


def kstroll_profile(tables: PathTables, s: int, t: int) -> List[Tuple[object, int, int]]:
    """For every k: (best cost, mask, last) over root masks with at least k vertices."""
    costs, last = _stroll_costs(tables, s, t)
    tab = tables.table(tables.tree.root)
    pc = _popcount_table(len(tab.verts))
    c = len(tab.verts)
    out = []
    for k in range(c + 1):
        sel = np.nonzero((pc >= k) & (costs < tables.inf))[0]
        if len(sel) == 0:
            out.append((None, -1, -1))
            continue
        sub = costs[sel]
        i = int(np.argmin(sub)) if not tables.obj else min(range(len(sel)), key=lambda r: (sub[r], sel[r]))
        out.append((sub[i], int(sel[i]), int(last[sel[i]])))
    return out


def _exact_small(m: MetricInstance, s: int, t: int, max_vertices: int, inf):
    """Exhaustive search over paths with fewer than ``max_vertices`` distinct vertices."""
    arr, _ = m.scaled
    T = subset_path_table(arr, inf)
    pc = _popcount_table(m.n)
    res = {}
    for mask in np.nonzero(pc < max_vertices)[0]:
        mask = int(mask)
        if not mask >> s & 1:
            continue
        if s != t:
            if not mask >> t & 1 or T[mask, s, t] >= inf:
                continue
            cost, last = T[mask, s, t], t
        else:
            if mask == 1 << s:
                cost, last = 0, s
            else:
                row = np.minimum(T[mask, s, :] + arr[:, s], inf)
                last = int(np.argmin(row))
                cost = row[last]
                if cost >= inf:
                    continue
        size = int(pc[mask])
        if size not in res or cost < res[size][0]:
            res[size] = (cost, mask, last, T)
    return res


def _trace_plain(m: MetricInstance, T, mask: int, s: int, t: int, last: int) -> List[int]:
    arr, _ = m.scaled
    b = last
    seq = [b]
    while mask != (1 << s) or b != s:
        prev = mask & ~(1 << b)
        val = T[mask, s, b]
        for p in range(m.n):
            if prev >> p & 1 and T[prev, s, p] + arr[p, b] == val:
                mask, b = prev, p
                break
        seq.append(b)
    seq = seq[::-1]
    if s == t and seq[-1] != t:
        seq.append(t)
    return seq


@dataclass
class DoublingSolver:
    """Holds one tree and its tables so repeated queries share work."""

    metric: MetricInstance
    cfg: SolverConfig
    tree: GammaSplitTree = field(init=False)
    tables: PathTables = field(init=False)

    def __post_init__(self):
        self.cfg = self.cfg.resolved(self.metric)
        self.tree = build_gamma_split_tree(self.metric, tree_params(self.metric, self.cfg))
        self.tables = PathTables(self.tree, self.cfg.sparse_cap, self.cfg.max_crossings)

    @property
    def certified(self) -> bool:
        return not self.tables.capped

    def info(self) -> dict:
        return {"seed": self.cfg.seed, "tree_stats": self.tree.stats(), "mu": self.cfg.mu,
                "gamma": self.cfg.gamma, "sparse_cap": self.cfg.sparse_cap}

    def multipath(self, cluster: VSet, k: int, pairs: Sequence[Tuple[int, int]]):
        """Min total length of paths for ``pairs`` inside ``cluster`` visiting >= k distinct vertices.

        Returns (length, [vertex lists]) or (None, None) when infeasible.
        """
        tab = self.tables.table(cluster)
        c = len(tab.verts)
        inf = self.tables.inf
        if k > c:
            return None, None
        for s, t in pairs:
            if s not in tab.pos or t not in tab.pos:
                return None, None
        # best[U] = min cost with union exactly U, back[i][U] = (prev U, mask of pair i)
        best = {0: 0}
        backs = []
        for s, t in pairs:
            a, b = tab.pos[s], tab.pos[t]
            col = tab.T[:, a, b]
            opts = [(int(mk), col[mk]) for mk in np.nonzero(col < inf)[0]]
            nxt: Dict[int, object] = {}
            back = {}
            for U, cu in best.items():
                for mk, cm in opts:
                    V = U | mk
                    val = cu + cm
                    if V not in nxt or val < nxt[V]:
                        nxt[V] = val
                        back[V] = (U, mk)
            best = nxt
            backs.append(back)
        cands = [(v, U) for U, v in best.items() if bin(U).count("1") >= k]
        if not cands:
            return None, None
        val, U = min(cands)
        masks = []
        for back in reversed(backs):
            U, mk = back[U]
            masks.append(mk)
        masks.reverse()
        paths = [self.tables.trace(cluster, mk, tab.pos[s], tab.pos[t]) for mk, (s, t) in zip(masks, pairs)]
        return Fraction(int(val), self.tables.scale), paths

    def kstroll(self, s: int, t: int, k: int) -> StrollResult:
        m = self.metric
        if k > m.n:
            raise InfeasibleError(f"k={k} exceeds n={m.n}")
        prof = kstroll_profile(self.tables, s, t)
        cost, mask, last = prof[max(k, 0)]
        if cost is None:
            return StrollResult(None, None, 0, self.certified, self.info())
        w = Walk(m, _root_walk(self.tables, mask, s, t, last))
        return StrollResult(w, w.length, w.distinct_count, self.certified, self.info())

    def p2p(self, s: int, t: int, budget: Fraction) -> StrollResult:
        m = self.metric
        budget = Fraction(budget)
        if m.d(s, t) > budget:
            raise InfeasibleError("budget is below the distance between the endpoints")
        cap = budget * self.tables.scale
        prof = kstroll_profile(self.tables, s, t)
        best_k, pick = -1, None
        for k, (cost, mask, last) in enumerate(prof):
            if cost is not None and cost <= cap:
                best_k, pick = k, ("tree", mask, last)
        mu = self.cfg.mu
        info = self.info()
        if self.cfg.exhaustive_small and best_k < mu * mu:
            small = _exact_small(m, s, t, mu * mu, INF64 if not self.tables.obj else self.tables.inf)
            for size, (cost, mask, last, T) in small.items():
                if cost <= cap and size > best_k:
                    best_k, pick = size, ("exhaustive", mask, last, T)
            info["exhaustive"] = pick is not None and pick[0] == "exhaustive"
        assert pick is not None
        if pick[0] == "tree":
            seq = _root_walk(self.tables, pick[1], s, t, pick[2])
        else:
            seq = _trace_plain(m, pick[3], pick[1], s, t, pick[2])
        w = Walk(m, seq)
        if w.length > budget:  # pragma: no cover - guarded by construction
            raise AssertionError("orienteering walk exceeds its budget")
        prize = w.distinct_count - (len({s, t}) if self.cfg.exclude_endpoints else 0)
        return StrollResult(w, w.length, prize, self.certified, info)


def solve_kstroll_dbl(m: MetricInstance, s: int, t: int, k: int,
                      cfg: SolverConfig = SolverConfig()) -> StrollResult:
    return DoublingSolver(m, cfg).kstroll(s, t, k)


def solve_p2p_dbl(m: MetricInstance, s: int, t: int, budget: Fraction,
                  cfg: SolverConfig = SolverConfig()) -> StrollResult:
    return DoublingSolver(m, cfg).p2p(s, t, budget)


def solve_multipath_kstroll_dbl(solver: DoublingSolver, cluster: VSet, k: int,
                                pairs: Sequence[Tuple[int, int]]):
    return solver.multipath(cluster, k, pairs)
