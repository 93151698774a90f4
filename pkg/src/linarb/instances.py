"""Seeded random graphs for tests, benchmarks and the CLI."""

from __future__ import annotations

import numpy as np

from .graph import Graph, TwinColour


def near_regular(n: int, d: int, rng: np.random.Generator) -> Graph:
    """Configuration-model pairing with loops and repeated pairs dropped; max degree at most ``d``."""
    if n * d % 2:
        raise ValueError("n * d must be even")
    stubs = np.repeat(np.arange(n), d)
    rng.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    edges = {(int(min(a, b)), int(max(a, b))) for a, b in pairs if a != b}
    return Graph.from_edges(n, sorted(edges))


def gnp(n: int, p: float, rng: np.random.Generator) -> Graph:
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    return Graph.from_edges(n, list(zip(iu[keep].tolist(), ju[keep].tolist())))


def random_lists(g: Graph, palette: int, size: int, rng: np.random.Generator) -> dict[int, frozenset[int]]:
    """Independent uniform ``size``-subsets of ``range(palette)`` per edge."""
    size = min(size, palette)
    return {e: frozenset(int(c) for c in rng.choice(palette, size=size, replace=False)) for e in range(g.num_edges)}


def reachable_state(
    g: Graph,
    product: dict[int, frozenset[TwinColour]],
    fraction: float,
    rng: np.random.Generator,
    drop: float = 0.1,
) -> tuple[dict[int, TwinColour], dict[int, frozenset[TwinColour]]]:
    """A partial colouring with maintained lists, as the colouring steps leave them.

    Edges are coloured one at a time in random order from their current
    list; each choice is removed from the lists of the uncoloured edges
    sharing an endpoint, and every remaining list colour is dropped with
    probability ``drop``.  So an uncoloured edge never lists a colour already
    present at one of its endpoints.
    """
    lists = {e: set(product[e]) for e in range(g.num_edges)}
    gamma: dict[int, TwinColour] = {}
    for e in rng.permutation(g.num_edges).tolist()[: round(fraction * g.num_edges)]:
        if not lists[e]:
            continue
        cols = sorted(lists[e])
        c = cols[int(rng.integers(len(cols)))]
        gamma[e] = c
        lists[e] = set()
        for x in g.edges[e]:
            for f in g.adjacency[x]:
                lists[f].discard(c)
    out = {}
    for e in range(g.num_edges):
        cols = sorted(lists[e])
        keep = rng.random(len(cols)) >= drop
        out[e] = frozenset(c for c, k in zip(cols, keep) if k) if e not in gamma else frozenset()
    return gamma, out
