"""Suspicious and dangerous alternating paths for twin colours.

A path is written as its vertex sequence.  Position ``i`` (1-based) of a path
rooted for colour ``c`` must carry the twin ``c'`` when ``i`` is odd and ``c``
itself when ``i`` is even; coloured edges must match exactly, uncoloured ones
must still have the required colour in their list.  Only uncoloured edges count
toward the uncoloured length.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import AbstractSet, Mapping, NamedTuple

from .graph import Graph, TwinColour


class SuspiciousPath(NamedTuple):
    vertices: tuple[int, ...]
    uncoloured_length: int


@dataclass
class ColouringView:
    """Read-only snapshot of a partial 1-edge-colouring plus edge lists."""

    graph: Graph
    gamma: Mapping[int, TwinColour]
    lists: Mapping[int, AbstractSet[TwinColour]]

    @cached_property
    def coloured_at(self) -> list[dict[TwinColour, int]]:
        index: list[dict[TwinColour, int]] = [{} for _ in range(self.graph.vertex_count)]
        for eid, colour in self.gamma.items():
            for x in self.graph.edges[eid]:
                index[x][colour] = eid
        return index

    def is_uncoloured(self, eid: int) -> bool:
        return eid not in self.gamma


def required_colour(c: TwinColour, position: int) -> TwinColour:
    return c.twin if position % 2 == 1 else c


def colour_neighbours(view: ColouringView, v: int, c: TwinColour) -> frozenset[int]:
    return frozenset(
        f for f in view.graph.adjacency[v]
        if f not in view.gamma and c in view.lists.get(f, ())
    )


def _extend(view: ColouringView, x: int, position: int, c: TwinColour):
    """Edges that may occupy ``position`` when leaving ``x``: (edge, uncoloured?)."""
    req = required_colour(c, position)
    coloured = view.coloured_at[x].get(req)
    if coloured is not None:
        yield coloured, False
    g = view.graph
    for f in g.adjacency[x]:
        if f not in view.gamma and req in view.lists.get(f, ()):
            yield f, True


def _open_paths(
    view: ColouringView,
    u: int,
    c: TwinColour,
    k: int,
    *,
    forbid_interior: int | None = None,
    skip_edge: int | None = None,
) -> list[tuple[tuple[int, ...], int]]:
    """Suspicious paths from ``u`` with exactly ``k`` uncoloured edges, last one uncoloured.

    Returns ``(vertices, position_of_next_edge)``.  ``forbid_interior`` may only
    appear as the final vertex; ``skip_edge`` is never used.
    """
    g = view.graph
    out: list[tuple[tuple[int, ...], int]] = []
    path = [u]
    on_path = {u}

    def walk(x: int, count: int) -> None:
        position = len(path)
        for f, uncoloured in _extend(view, x, position, c):
            if f == skip_edge:
                continue
            y = g.other(f, x)
            if y in on_path:
                continue
            cnt = count + uncoloured
            if uncoloured and cnt == k:
                out.append((tuple(path) + (y,), position + 1))
                continue
            if y == forbid_interior:
                continue
            path.append(y)
            on_path.add(y)
            walk(y, cnt)
            path.pop()
            on_path.discard(y)

    if k >= 1:
        walk(u, 0)
    return out


def enumerate_suspicious_open(view: ColouringView, u: int, c: TwinColour, k: int) -> set[SuspiciousPath]:
    return {SuspiciousPath(p, k) for p, _ in _open_paths(view, u, c, k)}


def enumerate_suspicious(
    view: ColouringView, u: int, v: int, c: TwinColour, k: int
) -> set[SuspiciousPath]:
    return {
        SuspiciousPath(p, k)
        for p, _ in _open_paths(view, u, c, k, forbid_interior=v)
        if p[-1] == v
    }


def _coloured_tail(view: ColouringView, path: tuple[int, ...], position: int, c: TwinColour, target: int):
    """Follow the forced coloured continuation of ``path`` until it hits ``target``."""
    x = path[-1]
    seen = set(path)
    tail: list[int] = []
    while True:
        f = view.coloured_at[x].get(required_colour(c, position))
        if f is None:
            return None
        y = view.graph.other(f, x)
        if y in seen:
            return None
        tail.append(y)
        if y == target:
            return path + tuple(tail)
        seen.add(y)
        x = y
        position += 1


def danger_set(view: ColouringView, u: int, v: int, c: TwinColour, ell: int) -> set[SuspiciousPath]:
    """Candidate paths whose full assignment would make ``uv`` coloured ``c`` close a cycle.

    Closed part: suspicious ``u``-paths with fewer than ``ell`` uncoloured
    edges that end at ``v``, either directly or after the forced coloured
    continuation.  Open part: suspicious paths with exactly ``ell`` uncoloured
    edges rooted at ``u`` (resp. ``v``) that do not pass through ``v`` (resp.
    ``u``).  The edge ``uv`` itself never takes part.
    """
    g = view.graph
    skip = g.edge_id(u, v) if g.has_edge(u, v) else None
    result: set[SuspiciousPath] = set()
    for k in range(1, ell):
        for p, position in _open_paths(view, u, c, k, forbid_interior=v, skip_edge=skip):
            full = p if p[-1] == v else _coloured_tail(view, p, position, c, v)
            if full is not None:
                result.add(SuspiciousPath(full, k))
    for root, other in ((u, v), (v, u)):
        for p, _ in _open_paths(view, root, c, ell, forbid_interior=other, skip_edge=skip):
            result.add(SuspiciousPath(p, ell))
    return result


def is_dangerous(
    g: Graph,
    p: SuspiciousPath | tuple[int, ...],
    colouring: Mapping[int, TwinColour],
    u: int,
    v: int,
    c: TwinColour,
) -> bool:
    """Whether ``p`` is fully coloured in the alternating pattern under ``colouring``.

    A path joining ``u`` and ``v`` must also end with ``c'``.  A path rooted at
    one end that stops elsewhere (the open segments of :func:`danger_set`)
    counts as dangerous as soon as it is fully coloured in pattern.
    """
    vertices = p.vertices if isinstance(p, SuspiciousPath) else tuple(p)
    if len(vertices) < 2 or vertices[0] not in (u, v):
        return False
    target = v if vertices[0] == u else u
    for position in range(1, len(vertices)):
        a, b = vertices[position - 1], vertices[position]
        if not g.has_edge(a, b):
            return False
        if colouring.get(g.edge_id(a, b)) != required_colour(c, position):
            return False
    if vertices[-1] == target:
        return (len(vertices) - 1) % 2 == 1
    return True


def has_dangerous_path(view: ColouringView, eid: int, c: TwinColour) -> bool:
    """Walk the unique maximal ``c'``/``c`` coloured path from one end of ``eid``."""
    u, v = view.graph.edges[eid]
    return dangerous_walk(view, u, v, c) is not None


def dangerous_walk(view: ColouringView, u: int, v: int, c: TwinColour) -> tuple[int, ...] | None:
    g = view.graph
    x, position = u, 1
    path = [u]
    seen = {u}
    while True:
        f = view.coloured_at[x].get(required_colour(c, position))
        if f is None:
            return None
        y = g.other(f, x)
        if y == v:
            return tuple(path + [y]) if position % 2 == 1 else None
        if y in seen:
            return None
        path.append(y)
        seen.add(y)
        x = y
        position += 1


class AssignmentIndex:
    """Edges grouped by vertex and colour under gamma plus fresh assignments.

    Assignments need not be proper, so a vertex may carry several edges of one
    colour.
    """

    def __init__(self, g: Graph, gamma: Mapping[int, TwinColour], assigned: Mapping[int, TwinColour]):
        self.graph = g
        self.gamma = gamma
        self.assigned = assigned
        at: list[dict[TwinColour, list[int]]] = [defaultdict(list) for _ in range(g.vertex_count)]
        for source in (gamma, assigned):
            for eid in sorted(source):
                colour = source[eid]
                for x in g.edges[eid]:
                    at[x][colour].append(eid)
        self.at = at

    def colour(self, eid: int) -> TwinColour | None:
        got = self.gamma.get(eid)
        return got if got is not None else self.assigned.get(eid)


def find_dangerous_assignment(
    index: AssignmentIndex,
    u: int,
    v: int,
    c: TwinColour,
    ell: int,
) -> tuple[int, ...] | None:
    """A member of ``danger_set(u, v, c)`` that is dangerous once assignments are applied.

    Searches alternating paths over gamma plus the step-II assignments
    directly instead of materialising the candidate set.
    """
    g = index.graph
    skip = g.edge_id(u, v) if g.has_edge(u, v) else None
    twin = c.twin
    for root, target, closed in ((u, v, True), (v, u, False)):
        if not index.at[root].get(twin):
            continue
        hit = _search(index, root, target, c, ell, skip, closed)
        if hit is not None:
            return hit
    return None


def _search(index, root, target, c, ell, skip, closed):
    g = index.graph
    gamma = index.gamma
    at = index.at
    path = [root]
    on_path = {root}

    def walk(x: int, position: int, count: int):
        req = required_colour(c, position)
        for f in at[x].get(req, ()):
            if f == skip:
                continue
            y = g.other(f, x)
            if y in on_path:
                continue
            uncoloured = f not in gamma
            cnt = count + uncoloured
            if y == target:
                if closed and position % 2 == 1 and cnt >= 1:
                    return tuple(path) + (y,)
                continue
            if uncoloured and cnt == ell:
                return tuple(path) + (y,)
            path.append(y)
            on_path.add(y)
            found = walk(y, position + 1, cnt)
            path.pop()
            on_path.discard(y)
            if found is not None:
                return found
        return None

    return walk(root, 1, 0)
