"""Graphs, twin colours, list assignments and the linear-forest verifier.

Edges are identified by their index into ``Graph.edges`` (sorted ``(u, v)``
pairs with ``u < v``).  All colouring state lives outside the graph.
"""

from __future__ import annotations

import json
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple


class GraphFormatError(ValueError):
    """Malformed edge-list or list document."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GraphValidationError(ValueError):
    """Document parsed but does not describe a simple graph."""


class TwinColour(NamedTuple):
    base: int
    copy: int

    @property
    def twin(self) -> "TwinColour":
        return TwinColour(self.base, 3 - self.copy)


@dataclass(frozen=True)
class Graph:
    vertex_count: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...]
    max_degree: int
    edge_index: dict[tuple[int, int], int] = field(compare=False, repr=False)

    @classmethod
    def from_edges(cls, vertex_count: int, pairs: Iterable[tuple[int, int]]) -> "Graph":
        if vertex_count < 0:
            raise GraphValidationError("negative vertex count")
        seen: set[tuple[int, int]] = set()
        for u, v in pairs:
            if not (0 <= u < vertex_count and 0 <= v < vertex_count):
                raise GraphValidationError(f"vertex index out of range in edge {u} {v}")
            if u == v:
                raise GraphValidationError(f"loop at vertex {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphValidationError(f"duplicate edge {key[0]} {key[1]}")
            seen.add(key)
        edges = tuple(sorted(seen))
        incident: list[list[int]] = [[] for _ in range(vertex_count)]
        for eid, (u, v) in enumerate(edges):
            incident[u].append(eid)
            incident[v].append(eid)
        adjacency = tuple(tuple(a) for a in incident)
        max_degree = max((len(a) for a in adjacency), default=0)
        index = {e: i for i, e in enumerate(edges)}
        return cls(vertex_count, edges, adjacency, max_degree, index)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_id(self, u: int, v: int) -> int:
        return self.edge_index[(u, v) if u < v else (v, u)]

    def has_edge(self, u: int, v: int) -> bool:
        return ((u, v) if u < v else (v, u)) in self.edge_index

    def other(self, eid: int, x: int) -> int:
        u, v = self.edges[eid]
        return v if x == u else u

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def to_text(self) -> str:
        lines = [f"{self.vertex_count} {self.num_edges}"]
        lines += [f"{u} {v}" for u, v in self.edges]
        return "\n".join(lines) + "\n"


# A list assignment maps edge ids to colour sets (base ints or TwinColours).
ListAssignment = Mapping[int, frozenset]
PartialColouring = Mapping[int, TwinColour]
Decomposition = Mapping[int, Iterable[int]]


def load_graph(text: str) -> Graph:
    """Parse the ``n m`` / ``u v`` edge-list format ('#' lines are comments)."""
    header: tuple[int, int] | None = None
    pairs: list[tuple[int, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"expected two integers, got {line!r}", lineno)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"expected two integers, got {line!r}", lineno) from None
        if header is None:
            if a < 0 or b < 0:
                raise GraphFormatError("negative header value", lineno)
            header = (a, b)
            continue
        if len(pairs) >= header[1]:
            raise GraphFormatError(f"more than {header[1]} edge lines", lineno)
        if not (0 <= a < header[0] and 0 <= b < header[0]):
            raise GraphValidationError(f"line {lineno}: vertex index out of range")
        pairs.append((a, b))
    if header is None:
        raise GraphFormatError("missing 'n m' header")
    if len(pairs) != header[1]:
        raise GraphFormatError(f"header declares {header[1]} edges, found {len(pairs)}")
    return Graph.from_edges(header[0], pairs)


def edge_key(g: Graph, eid: int) -> str:
    u, v = g.edges[eid]
    return f"{u}-{v}"


def _parse_edge_key(g: Graph, key: str) -> int:
    try:
        a, b = (int(x) for x in key.split("-"))
    except ValueError:
        raise GraphFormatError(f"bad edge key {key!r}") from None
    if a >= b or not g.has_edge(a, b):
        raise GraphValidationError(f"list given for unknown edge {key!r}")
    return g.edge_id(a, b)


def load_base_lists(text: str, g: Graph) -> dict[int, frozenset[int]]:
    """Parse ``{"u-v": [c, ...]}``; every edge must be covered."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(raw, dict):
        raise GraphFormatError("list document must be a JSON object")
    lists: dict[int, frozenset[int]] = {}
    for key, colours in raw.items():
        eid = _parse_edge_key(g, key)
        if not isinstance(colours, list) or not all(
            isinstance(c, int) and not isinstance(c, bool) and c >= 0 for c in colours
        ):
            raise GraphFormatError(f"list for {key!r} must be an array of non-negative integers")
        if len(set(colours)) != len(colours):
            raise GraphValidationError(f"duplicate colour in list for {key!r}")
        lists[eid] = frozenset(colours)
    missing = [edge_key(g, e) for e in range(g.num_edges) if e not in lists]
    if missing:
        raise GraphValidationError(f"no list for edges {', '.join(missing[:5])}")
    return lists


def uniform_lists(g: Graph, k: int) -> dict[int, frozenset[int]]:
    colours = frozenset(range(k))
    return {e: colours for e in range(g.num_edges)}


def product_lists(base: Mapping[int, Iterable[int]]) -> dict[int, frozenset[TwinColour]]:
    return {
        e: frozenset(TwinColour(c, k) for c in cs for k in (1, 2))
        for e, cs in base.items()
    }


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        """Merge the sets of ``a`` and ``b``; False if already joined."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


@dataclass(frozen=True)
class ColouringViolation:
    vertex: int
    colour: TwinColour
    edges: tuple[int, ...]


def verify_one_edge_colouring(g: Graph, gamma: PartialColouring) -> list[ColouringViolation]:
    """Every vertex incident to two edges of the same twin colour."""
    seen: dict[tuple[int, TwinColour], list[int]] = defaultdict(list)
    for eid in sorted(gamma):
        colour = gamma[eid]
        for x in g.edges[eid]:
            seen[(x, colour)].append(eid)
    return [
        ColouringViolation(x, colour, tuple(es))
        for (x, colour), es in sorted(seen.items())
        if len(es) > 1
    ]


@dataclass(frozen=True)
class MonochromaticCycle:
    colour: int
    vertices: tuple[int, ...]


def _forest_path(adj: dict[int, list[int]], src: int, dst: int) -> list[int]:
    prev = {src: src}
    queue = deque([src])
    while queue:
        x = queue.popleft()
        if x == dst:
            break
        for y in adj[x]:
            if y not in prev:
                prev[y] = x
                queue.append(y)
    path = [dst]
    while path[-1] != src:
        path.append(prev[path[-1]])
    return path[::-1]


def _class_cycle(g: Graph, edge_ids: Iterable[int]) -> tuple[int, ...] | None:
    uf: dict[int, int] = {}

    def find(x: int) -> int:
        uf.setdefault(x, x)
        while uf[x] != x:
            uf[x] = uf[uf[x]]
            x = uf[x]
        return x

    adj: dict[int, list[int]] = defaultdict(list)
    for eid in sorted(edge_ids):
        u, v = g.edges[eid]
        ru, rv = find(u), find(v)
        if ru == rv:
            return tuple(_forest_path(adj, u, v))
        uf[ru] = rv
        adj[u].append(v)
        adj[v].append(u)
    return None


def find_monochromatic_cycle(g: Graph, classes: Decomposition) -> MonochromaticCycle | None:
    """Witness cycle inside one colour class, scanning colours in order."""
    for colour in sorted(classes):
        cycle = _class_cycle(g, classes[colour])
        if cycle is not None:
            return MonochromaticCycle(colour, cycle)
    return None


def classes_from_colouring(colouring: Mapping[int, int | TwinColour]) -> dict[int, set[int]]:
    """Group edges by base colour (twin colours collapse onto their base)."""
    classes: dict[int, set[int]] = defaultdict(set)
    for eid, colour in colouring.items():
        base = colour.base if isinstance(colour, TwinColour) else colour
        classes[base].add(eid)
    return dict(classes)


@dataclass
class DecompositionReport:
    flags: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flags

    def kinds(self) -> set[str]:
        return {f["flag"] for f in self.flags}

    def to_json(self) -> dict:
        return {"passed": self.passed, "flags": self.flags}


def verify_decomposition(
    g: Graph,
    d: Decomposition,
    lists: Mapping[int, Iterable[int]] | None = None,
) -> DecompositionReport:
    report = DecompositionReport()
    owner: dict[int, int] = {}
    for colour in sorted(d):
        for eid in sorted(d[colour]):
            if not 0 <= eid < g.num_edges:
                report.flags.append({"flag": "unknown_edge", "colour": colour, "edge": eid})
                continue
            if eid in owner:
                report.flags.append({
                    "flag": "overlap",
                    "edge": list(g.edges[eid]),
                    "colours": [owner[eid], colour],
                })
                continue
            owner[eid] = colour
            if lists is not None and colour not in lists[eid]:
                report.flags.append({"flag": "list_violation", "edge": list(g.edges[eid]), "colour": colour})
    uncovered = [list(g.edges[e]) for e in range(g.num_edges) if e not in owner]
    if uncovered:
        report.flags.append({"flag": "uncovered", "edges": uncovered})
    for colour in sorted(d):
        members = [e for e in d[colour] if 0 <= e < g.num_edges]
        degree: dict[int, int] = defaultdict(int)
        for eid in members:
            for x in g.edges[eid]:
                degree[x] += 1
        for x in sorted(degree):
            if degree[x] > 2:
                report.flags.append({"flag": "degree", "colour": colour, "vertex": x, "degree": degree[x]})
        cycle = _class_cycle(g, set(members))
        if cycle is not None:
            report.flags.append({"flag": "monochromatic_cycle", "colour": colour, "cycle": list(cycle)})
    return report


def decomposition_to_json(g: Graph, d: Decomposition, **extra) -> dict:
    classes = {
        str(colour): [list(g.edges[e]) for e in sorted(d[colour])]
        for colour in sorted(d)
        if d[colour]
    }
    out = {"classes": classes, "num_classes": len(classes)}
    out.update(extra)
    return out


def decomposition_from_json(g: Graph, payload: dict) -> dict[int, set[int]]:
    """Inverse of :func:`decomposition_to_json`; unknown pairs map to id -1."""
    if not isinstance(payload, dict) or not isinstance(payload.get("classes"), dict):
        raise GraphFormatError("decomposition must be an object with a 'classes' object")
    out: dict[int, set[int]] = {}
    for key, pairs in payload["classes"].items():
        try:
            colour = int(key)
        except ValueError:
            raise GraphFormatError(f"class key {key!r} is not an integer") from None
        members: set[int] = set()
        for pair in pairs:
            if not (isinstance(pair, list) and len(pair) == 2):
                raise GraphFormatError(f"bad edge {pair!r} in class {key}")
            u, v = pair
            members.add(g.edge_id(u, v) if g.has_edge(u, v) else -1)
        out[colour] = members
    return out
