"""Finishing phase: colour the edges the nibble left over.

The reserved twin colours are collapsed to base colours and the residual
edges are coloured by conflict resampling.  Two fallbacks keep the pipeline
total: a greedy pass over the original lists that keeps every class a linear
forest, and, for uniform lists, a proper edge colouring into ``Delta + 1``
matchings.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .graph import (
    DecompositionReport,
    Graph,
    TwinColour,
    UnionFind,
    classes_from_colouring,
    verify_decomposition,
)


def transpose_reserve(res_e: Mapping[int, Iterable[TwinColour]]) -> dict[int, frozenset[int]]:
    return {e: frozenset(c.base for c in cs) for e, cs in res_e.items()}


@dataclass(frozen=True)
class PreconditionReport:
    L: int
    N: int
    passed: bool

    def to_json(self) -> dict:
        return {"L": self.L, "N": self.N, "passed": self.passed}


def check_finisher_precondition(g: Graph, uncoloured: Iterable[int], lists: Mapping[int, frozenset[int]]) -> PreconditionReport:
    """``L`` = smallest residual list, ``N`` = most residual neighbours sharing a colour; passes iff ``L >= 8N``."""
    residual = sorted(set(uncoloured))
    if not residual:
        return PreconditionReport(0, 0, True)
    inside = set(residual)
    L = min(len(lists[e]) for e in residual)
    N = 0
    for e in residual:
        near = [f for x in g.edges[e] for f in g.adjacency[x] if f != e and f in inside]
        for c in lists[e]:
            N = max(N, sum(1 for f in near if c in lists[f]))
    return PreconditionReport(L, N, L >= 8 * N)


@dataclass
class CompletionResult:
    colours: dict[int, int]
    residual: list[int]
    budget_used: int
    phase: str = "resample"

    @property
    def complete(self) -> bool:
        return not self.residual

    def failure_report(self) -> dict:
        return {"phase": self.phase, "budget_used": self.budget_used, "residual_edges": self.residual}


def _violations(g: Graph, fixed: Mapping[int, int], colours: Mapping[int, int]) -> set[int]:
    """Completed edges taking part in a base-colour clash or a bad merged class."""
    bad: set[int] = set()
    at: dict[tuple[int, int], list[int]] = defaultdict(list)
    for e in sorted(colours):
        for x in g.edges[e]:
            at[(x, colours[e])].append(e)
    for es in at.values():
        if len(es) > 1:
            bad.update(es)
    classes: dict[int, list[int]] = defaultdict(list)
    for e in sorted(fixed):
        classes[fixed[e]].append(e)
    fixed_count = {c: len(es) for c, es in classes.items()}
    for e in sorted(colours):
        classes[colours[e]].append(e)
    for c, es in classes.items():
        degree: dict[int, int] = defaultdict(int)
        for e in es:
            for x in g.edges[e]:
                degree[x] += 1
        uf: dict[int, int] = {}

        def find(x: int) -> int:
            uf.setdefault(x, x)
            while uf[x] != x:
                uf[x] = uf[uf[x]]
                x = uf[x]
            return x

        # nibble edges first so that a closing edge is always a completed one
        for k, e in enumerate(es):
            u, v = g.edges[e]
            ru, rv = find(u), find(v)
            completed = k >= fixed_count.get(c, 0)
            if ru == rv:
                if completed:
                    bad.add(e)
                continue
            uf[ru] = rv
            if completed and (degree[u] > 2 or degree[v] > 2):
                bad.add(e)
    return bad


def complete_colouring(
    g: Graph,
    uncoloured: Iterable[int],
    lists: Mapping[int, frozenset[int]],
    rng: np.random.Generator,
    budget: int = 10_000,
    fixed: Mapping[int, int] | None = None,
) -> CompletionResult:
    """Random assignment from the lists, then resample every edge in a violated constraint.

    Constraints: completed edges form a proper edge colouring per base colour,
    and adding them to the ``fixed`` base colouring keeps every class a linear
    forest.  ``budget`` caps the total number of single-edge resamples.
    """
    fixed = dict(fixed or {})
    residual = sorted(set(uncoloured))
    options = {e: sorted(lists[e]) for e in residual}
    empty = [e for e in residual if not options[e]]
    active = [e for e in residual if options[e]]
    colours: dict[int, int] = {}

    def draw(es: list[int]) -> None:
        picks = rng.random(len(es))
        for e, r in zip(es, picks):
            cs = options[e]
            colours[e] = cs[min(int(r * len(cs)), len(cs) - 1)]

    draw(active)
    used = 0
    while True:
        bad = sorted(_violations(g, fixed, colours))
        if not bad:
            return CompletionResult(colours, empty, used)
        if used + len(bad) > budget:
            for e in bad:
                colours.pop(e)
            return CompletionResult(colours, sorted(empty + bad), used)
        used += len(bad)
        draw(bad)


def greedy_linear_completion(
    g: Graph,
    residual: Iterable[int],
    fixed: Mapping[int, int],
    base_lists: Mapping[int, Iterable[int]],
) -> CompletionResult:
    """First colour from each original list that keeps the class a linear forest."""
    degree: dict[tuple[int, int], int] = defaultdict(int)
    forests: dict[int, UnionFind] = {}

    def forest(c: int) -> UnionFind:
        if c not in forests:
            forests[c] = UnionFind(g.vertex_count)
        return forests[c]

    for e in sorted(fixed):
        c = fixed[e]
        u, v = g.edges[e]
        degree[(u, c)] += 1
        degree[(v, c)] += 1
        forest(c).union(u, v)
    colours: dict[int, int] = {}
    left: list[int] = []
    for e in sorted(set(residual)):
        u, v = g.edges[e]
        for c in sorted(base_lists[e]):
            if degree[(u, c)] < 2 and degree[(v, c)] < 2 and forest(c).find(u) != forest(c).find(v):
                forest(c).union(u, v)
                degree[(u, c)] += 1
                degree[(v, c)] += 1
                colours[e] = c
                break
        else:
            left.append(e)
    return CompletionResult(colours, left, 0, phase="greedy")


def misra_gries(g: Graph) -> dict[int, int]:
    """Proper edge colouring with at most ``Delta + 1`` colours."""
    k = g.max_degree + 1
    # colour_at[x][c] = neighbour joined to x by an edge of colour c
    colour_at: list[dict[int, int]] = [dict() for _ in range(g.vertex_count)]
    colour: dict[int, int] = {}

    def free(x: int) -> int:
        used = colour_at[x]
        return next(c for c in range(k) if c not in used)

    def is_free(x: int, c: int) -> bool:
        return c not in colour_at[x]

    def set_colour(x: int, y: int, c: int) -> None:
        colour[g.edge_id(x, y)] = c
        colour_at[x][c] = y
        colour_at[y][c] = x

    def clear(x: int, y: int) -> None:
        c = colour.pop(g.edge_id(x, y))
        del colour_at[x][c]
        del colour_at[y][c]

    for e, (u, v) in enumerate(g.edges):
        # maximal fan of u starting at v
        fan = [v]
        in_fan = {v}
        while True:
            last = fan[-1]
            nxt = None
            for c, w in sorted(colour_at[u].items()):
                if w not in in_fan and is_free(last, c):
                    nxt = w
                    break
            if nxt is None:
                break
            fan.append(nxt)
            in_fan.add(nxt)
        c = free(u)
        d = free(fan[-1])
        # invert the cd-path from u
        if not is_free(u, d):
            path = [u]
            x, want = u, d
            while want in colour_at[x]:
                y = colour_at[x][want]
                path.append(y)
                x = y
                want = c if want == d else d
            edges = [(path[j], path[j + 1], colour[g.edge_id(path[j], path[j + 1])]) for j in range(len(path) - 1)]
            for a, b, _ in edges:
                clear(a, b)
            for a, b, old in edges:
                set_colour(a, b, c if old == d else d)
        # first fan vertex with d free whose prefix is still a fan
        def fan_prefix(j: int) -> bool:
            return all(colour[g.edge_id(u, fan[t + 1])] not in colour_at[fan[t]] for t in range(j))

        w_idx = next(j for j, w in enumerate(fan) if is_free(w, d) and fan_prefix(j))
        for j in range(w_idx):
            nxt_colour = colour[g.edge_id(u, fan[j + 1])]
            clear(u, fan[j + 1])
            set_colour(u, fan[j], nxt_colour)
        set_colour(u, fan[w_idx], d)
    return colour


@dataclass
class MergeResult:
    decomposition: dict[int, set[int]]
    report: DecompositionReport
    phases: list[str] = field(default_factory=list)


def merge_and_verify(
    gamma_nibble: Mapping[int, TwinColour],
    completion: Mapping[int, int],
    g: Graph,
    original_lists: Mapping[int, Iterable[int]] | None,
) -> MergeResult:
    overlap = set(gamma_nibble) & set(completion)
    if overlap:
        raise ValueError(f"edges coloured twice: {sorted(overlap)[:5]}")
    merged: dict[int, int] = {e: c.base for e, c in gamma_nibble.items()}
    merged.update(completion)
    d = classes_from_colouring(merged)
    return MergeResult(d, verify_decomposition(g, d, original_lists))
