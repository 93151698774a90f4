"""Exact ground truth for tiny graphs.

Two independent linear-arboricity routines (class backtracking and a subset
closure over edge bitmasks), a list-respecting exhaustive search, and an
isomorphism-free enumeration of small connected graphs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx
import numpy as np

from .graph import Graph

MAX_EXACT_EDGES = 24
MAX_LIST_EDGES = 16
MAX_SUBSET_EDGES = 20


class SizeLimitError(ValueError):
    pass


class _Classes:
    """Per-class degree counts and union-find with rollback."""

    def __init__(self, n: int, k: int):
        self.degree = [[0] * n for _ in range(k)]
        self.parent = [list(range(n)) for _ in range(k)]
        self.size = [[1] * n for _ in range(k)]
        self.history: list[tuple[int, int, int, int, int] | None] = []

    def _find(self, c: int, x: int) -> int:
        parent = self.parent[c]
        while parent[x] != x:
            x = parent[x]
        return x

    def can_add(self, c: int, u: int, v: int) -> bool:
        deg = self.degree[c]
        return deg[u] < 2 and deg[v] < 2 and self._find(c, u) != self._find(c, v)

    def add(self, c: int, u: int, v: int) -> None:
        ru, rv = self._find(c, u), self._find(c, v)
        size = self.size[c]
        if size[ru] < size[rv]:
            ru, rv = rv, ru
        self.parent[c][rv] = ru
        size[ru] += size[rv]
        self.degree[c][u] += 1
        self.degree[c][v] += 1
        self.history.append((c, u, v, ru, rv))

    def undo(self) -> None:
        c, u, v, ru, rv = self.history.pop()
        self.parent[c][rv] = rv
        self.size[c][ru] -= self.size[c][rv]
        self.degree[c][u] -= 1
        self.degree[c][v] -= 1


def _edge_order(g: Graph) -> list[int]:
    """BFS order over edges so that constraints bite early."""
    order: list[int] = []
    seen: set[int] = set()
    for start in sorted(range(g.vertex_count), key=lambda x: -len(g.adjacency[x])):
        frontier = [start]
        visited = {start}
        while frontier:
            nxt = []
            for x in frontier:
                for e in g.adjacency[x]:
                    if e not in seen:
                        seen.add(e)
                        order.append(e)
                    y = g.other(e, x)
                    if y not in visited:
                        visited.add(y)
                        nxt.append(y)
            frontier = nxt
    return order


def partition_into_linear_forests(g: Graph, k: int) -> list[int] | None:
    """A class index per edge using at most ``k`` linear forests, or None."""
    order = _edge_order(g)
    state = _Classes(g.vertex_count, max(k, 1))
    assign = [-1] * g.num_edges

    def place(j: int, used: int) -> bool:
        if j == len(order):
            return True
        e = order[j]
        u, v = g.edges[e]
        # a fresh class is interchangeable with any other fresh class
        for c in range(min(used + 1, k)):
            if state.can_add(c, u, v):
                state.add(c, u, v)
                assign[e] = c
                if place(j + 1, max(used, c + 1)):
                    return True
                state.undo()
        return False

    return assign if place(0, 0) else None


def linear_arboricity_lower_bound(g: Graph) -> int:
    if g.num_edges == 0:
        return 0
    # each linear forest has max degree 2 and at most n - 1 edges
    return max(1, math.ceil(g.max_degree / 2), math.ceil(g.num_edges / (g.vertex_count - 1)))


def _backtrack_la(g: Graph) -> int:
    k = linear_arboricity_lower_bound(g)
    while g.num_edges and partition_into_linear_forests(g, k) is None:
        k += 1
    return k


def exact_linear_arboricity(g: Graph) -> int:
    """Fewest linear forests partitioning the edges (exhaustive, at most 24 edges)."""
    if g.num_edges > MAX_EXACT_EDGES:
        raise SizeLimitError(f"{g.num_edges} edges exceeds the exhaustive limit of {MAX_EXACT_EDGES}")
    return _backtrack_la(g)


def _is_linear_forest_mask(g: Graph, mask: int) -> bool:
    parent = list(range(g.vertex_count))
    degree = [0] * g.vertex_count

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    e = 0
    while mask:
        if mask & 1:
            u, v = g.edges[e]
            degree[u] += 1
            degree[v] += 1
            if degree[u] > 2 or degree[v] > 2:
                return False
            ru, rv = find(u), find(v)
            if ru == rv:
                return False
            parent[ru] = rv
        mask >>= 1
        e += 1
    return True


def subset_linear_arboricity(g: Graph) -> int:
    """Second route: close the family of linear-forest edge sets under union.

    Linear forests are closed under taking subsets, so covering the edge set
    with ``k`` of them is the same as partitioning it.
    """
    m = g.num_edges
    if m > MAX_SUBSET_EDGES:
        raise SizeLimitError(f"{m} edges exceeds the subset limit of {MAX_SUBSET_EDGES}")
    if m == 0:
        return 0
    full = (1 << m) - 1
    forest = np.zeros(1 << m, dtype=bool)
    for mask in range(1 << m):
        forest[mask] = _is_linear_forest_mask(g, mask)
    maximal = [
        mask for mask in np.flatnonzero(forest).tolist()
        if not any(forest[mask | (1 << e)] for e in range(m) if not mask >> e & 1)
    ]
    reach = forest.copy()
    k = 1
    while not reach[full]:
        idx = np.flatnonzero(reach)
        nxt = reach.copy()
        for b in maximal:
            nxt[idx | b] = True
        reach = nxt
        k += 1
    return k


def brute_force_list_2colouring(g: Graph, base_lists: Mapping[int, Iterable[int]]) -> dict[int, set[int]] | None:
    """Assignment from the lists whose classes are linear forests, or None if none exists."""
    if g.num_edges > MAX_LIST_EDGES:
        raise SizeLimitError(f"{g.num_edges} edges exceeds the list-search limit of {MAX_LIST_EDGES}")
    palette = sorted({c for e in range(g.num_edges) for c in base_lists[e]})
    slot = {c: j for j, c in enumerate(palette)}
    order = _edge_order(g)
    state = _Classes(g.vertex_count, max(len(palette), 1))
    assign: dict[int, int] = {}

    def place(j: int) -> bool:
        if j == len(order):
            return True
        e = order[j]
        u, v = g.edges[e]
        for c in sorted(base_lists[e]):
            s = slot[c]
            if state.can_add(s, u, v):
                state.add(s, u, v)
                assign[e] = c
                if place(j + 1):
                    return True
                state.undo()
                del assign[e]
        return False

    if not place(0):
        return None
    out: dict[int, set[int]] = {}
    for e, c in assign.items():
        out.setdefault(c, set()).add(e)
    return out


def graph_from_nx(h: nx.Graph) -> Graph:
    relabel = {x: j for j, x in enumerate(sorted(h.nodes))}
    return Graph.from_edges(len(relabel), [(relabel[a], relabel[b]) for a, b in h.edges])


def connected_graphs(max_n: int) -> list[Graph]:
    """One representative per isomorphism class of connected graphs on 1..max_n vertices.

    Graphs on ``n`` vertices are grown from those on ``n - 1`` by adding a
    vertex joined to a non-empty subset; every connected graph arises this way
    (delete a non-cut vertex).  Duplicates are removed with a
    Weisfeiler-Lehman hash bucket plus an exact isomorphism test.
    """
    if max_n < 1:
        return []
    layer = [nx.empty_graph(1)]
    out = [graph_from_nx(layer[0])]
    for n in range(2, max_n + 1):
        buckets: dict[str, list[nx.Graph]] = {}
        new_layer = []
        for h in layer:
            for r in range(1, n):
                for nbrs in itertools.combinations(range(n - 1), r):
                    cand = h.copy()
                    cand.add_node(n - 1)
                    cand.add_edges_from((n - 1, x) for x in nbrs)
                    key = nx.weisfeiler_lehman_graph_hash(cand, iterations=3)
                    bucket = buckets.setdefault(key, [])
                    if any(nx.is_isomorphic(cand, other) for other in bucket):
                        continue
                    bucket.append(cand)
                    new_layer.append(cand)
        layer = new_layer
        out.extend(graph_from_nx(h) for h in layer)
    return out


@dataclass
class ScanReport:
    max_n: int
    graphs: int = 0
    counterexamples: list[dict] = field(default_factory=list)
    boundary_cases: list[dict] = field(default_factory=list)
    distribution: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.counterexamples

    def to_json(self) -> dict:
        return {
            "max_n": self.max_n,
            "graphs": self.graphs,
            "passed": self.passed,
            "counterexamples": self.counterexamples,
            "boundary_cases": len(self.boundary_cases),
            "boundary_examples": self.boundary_cases[:10],
            "distribution": dict(sorted(self.distribution.items())),
        }


def conjecture_scan(max_n: int) -> ScanReport:
    """Check ``la(G) <= ceil((Delta + 1) / 2)`` on every connected graph up to ``max_n`` vertices.

    Graphs with ``la(G) > ceil(Delta / 2)`` are recorded as boundary cases,
    not failures.
    """
    if max_n > 8:
        raise SizeLimitError("conjecture_scan supports at most 8 vertices")
    rep = ScanReport(max_n)
    for g in connected_graphs(max_n):
        la = _backtrack_la(g)
        delta = g.max_degree
        rep.graphs += 1
        key = f"delta={delta},la={la}"
        rep.distribution[key] = rep.distribution.get(key, 0) + 1
        entry = {"n": g.vertex_count, "edges": [list(e) for e in g.edges], "delta": delta, "la": la}
        if la > math.ceil((delta + 1) / 2):
            rep.counterexamples.append(entry)
        elif la > math.ceil(delta / 2):
            rep.boundary_cases.append(entry)
    return rep
