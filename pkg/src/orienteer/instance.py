"""Instance files: JSON with exact numbers written as ints or "p/q" strings."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Hashable, List, Optional

import networkx as nx

from .metric import MetricError, MetricInstance, build_metric, to_fraction
from .treewidth import TreeDecomposition


def num_out(x) -> Any:
    x = Fraction(x)
    return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def num_in(x) -> Fraction:
    try:
        return to_fraction(x)
    except (ValueError, ZeroDivisionError) as exc:
        raise MetricError(f"bad number {x!r}") from exc


@dataclass
class Instance:
    id: str
    nodes: List[Hashable]
    matrix: Optional[List[List[Fraction]]] = None
    coords: Optional[List[List[Fraction]]] = None
    edges: Optional[List[tuple]] = None
    bags: Optional[Dict[int, List[Hashable]]] = None
    bag_tree: Optional[List[List[int]]] = None
    root: int = 0
    start: Optional[Hashable] = None
    end: Optional[Hashable] = None
    deadlines: Optional[Dict[Hashable, Fraction]] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        if self.edges is not None:
            return "graph"
        if self.coords is not None:
            return "coords"
        return "matrix"

    def graph(self) -> nx.Graph:
        if self.edges is None:
            raise MetricError("instance has no edge list")
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        for u, v, w in self.edges:
            g.add_edge(u, v, weight=w)
        return g

    def tree_decomposition(self) -> Optional[TreeDecomposition]:
        if self.bags is None:
            return None
        return TreeDecomposition({int(k): frozenset(v) for k, v in self.bags.items()},
                                 [tuple(e) for e in (self.bag_tree or [])], self.root)

    def metric(self, with_deadlines: bool = True) -> MetricInstance:
        dl = self.deadlines if with_deadlines else None
        kw = dict(node_ids=self.nodes, start=self.start, end=self.end, deadlines=dl)
        if self.kind == "graph":
            return build_metric(graph=self.graph(), **kw)
        if self.kind == "coords":
            return build_metric(coords=self.coords, **kw)
        return build_metric(matrix=self.matrix, **kw)

    def to_json(self) -> dict:
        out: Dict[str, Any] = {"id": self.id, "nodes": list(self.nodes)}
        if self.matrix is not None:
            out["matrix"] = [[num_out(x) for x in row] for row in self.matrix]
        if self.coords is not None:
            out["coords"] = [[num_out(x) for x in p] for p in self.coords]
        if self.edges is not None:
            out["edges"] = [[u, v, num_out(w)] for u, v, w in self.edges]
        if self.bags is not None:
            out["bags"] = {str(k): list(v) for k, v in sorted(self.bags.items())}
            out["bag_tree"] = [list(e) for e in (self.bag_tree or [])]
            out["root"] = self.root
        if self.start is not None:
            out["start"] = self.start
        if self.end is not None:
            out["end"] = self.end
        if self.deadlines is not None:
            out["deadlines"] = {str(k): num_out(v) for k, v in self.deadlines.items()}
        if self.meta:
            out["meta"] = self.meta
        return out

    def dumps(self) -> str:
        return dumps(self.to_json())


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _node_key(nodes: List[Hashable], key: str) -> Hashable:
    """Deadline keys are strings in JSON; map them back to node ids."""
    for v in nodes:
        if str(v) == key:
            return v
    raise MetricError(f"deadline for unknown node {key!r}")


def from_json(data: dict) -> Instance:
    if "nodes" not in data:
        raise MetricError("instance needs a 'nodes' list")
    nodes = list(data["nodes"])
    given = [k for k in ("matrix", "coords", "edges") if k in data]
    if len(given) != 1:
        raise MetricError("instance needs exactly one of 'matrix', 'coords', 'edges'")
    inst = Instance(id=str(data.get("id", "instance")), nodes=nodes, meta=dict(data.get("meta", {})))
    if "matrix" in data:
        inst.matrix = [[num_in(x) for x in row] for row in data["matrix"]]
    if "coords" in data:
        inst.coords = [[num_in(x) for x in p] for p in data["coords"]]
    if "edges" in data:
        inst.edges = []
        for e in data["edges"]:
            if len(e) not in (2, 3):
                raise MetricError(f"bad edge {e!r}")
            inst.edges.append((e[0], e[1], num_in(e[2]) if len(e) == 3 else Fraction(1)))
    if "bags" in data:
        inst.bags = {int(k): list(v) for k, v in data["bags"].items()}
        inst.bag_tree = [list(e) for e in data.get("bag_tree", [])]
        inst.root = int(data.get("root", min(inst.bags)))
    inst.start = data.get("start")
    inst.end = data.get("end")
    if "deadlines" in data and data["deadlines"] is not None:
        inst.deadlines = {_node_key(nodes, str(k)): num_in(v) for k, v in data["deadlines"].items()}
    return inst


def load(path) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MetricError(f"{path}: not valid JSON ({exc})") from exc
    return from_json(data)
