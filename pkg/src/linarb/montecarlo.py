"""Monte Carlo checks of the one-iteration probabilities and expectations.

Every suite runs ``run_iteration`` on a frozen state.  Trial ``t`` draws from
its own substream ``(seed, suite, t)``, per-trial statistics are stored by
trial index and reduced in index order, so reports are bit-identical for any
number of workers.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import Graph, GraphFormatError, TwinColour
from .nibble import NibbleState, Reservation, StepParams, build_reservation, prepare_iteration, run_iteration
from .paths import is_dangerous

SUITES = ("retention", "listkeep", "nstar", "danger")
_SUITE_TAG = {name: 10 + j for j, name in enumerate(SUITES)}


@dataclass
class McReport:
    quantity: str
    trials: int
    estimate: float
    target: float
    sigma: float
    kind: str = "equal"  # equal | upper | lower
    k: float = 4.0
    passed: bool = field(init=False)

    def __post_init__(self):
        slack = self.k * self.sigma + 1e-12
        if self.kind == "equal":
            self.passed = abs(self.estimate - self.target) <= slack
        elif self.kind == "upper":
            self.passed = self.estimate <= self.target + slack
        elif self.kind == "lower":
            self.passed = self.estimate >= self.target - slack
        else:
            raise ValueError(f"unknown target kind {self.kind!r}")

    def to_json(self) -> dict:
        out = asdict(self)
        out["pass"] = out.pop("passed")
        return out


def summarize(quantity: str, values: np.ndarray, target: float, kind: str, k: float = 4.0) -> McReport:
    """Mean of ``values`` with its standard error as sigma."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        return McReport(quantity, 0, float("nan"), target, float("inf"), kind, k)
    sigma = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return McReport(quantity, n, float(values.mean()), float(target), sigma, kind, k)


# ---------------------------------------------------------------- instances


@dataclass
class FrozenInstance:
    """A one-iteration state plus the edge, vertex, colour (and path) under study."""

    name: str
    graph: Graph
    gamma: dict[int, TwinColour]
    lists: dict[int, frozenset[TwinColour]]
    res_v: dict[int, frozenset[TwinColour]]
    p: float
    ell: int
    edge: int
    vertex: int
    colour: TwinColour
    delta: float
    L: float | None = None
    N: float | None = None
    R: float | None = None
    path: tuple[int, ...] | None = None
    reserve_colour: TwinColour | None = None

    @property
    def rc(self) -> TwinColour:
        return self.reserve_colour if self.reserve_colour is not None else self.colour

    def state(self) -> NibbleState:
        g = self.graph
        U = [e for e in range(g.num_edges) if e not in self.gamma]
        L = self.L if self.L is not None else min((len(self.lists[e]) for e in U if self.lists[e]), default=1)
        N = self.N
        if N is None:
            counts: dict = {}
            for e in U:
                for x in g.edges[e]:
                    for c in self.lists[e]:
                        counts[(x, c)] = counts.get((x, c), 0) + 1
            N = max(counts.values(), default=1)
        R = self.R
        if R is None:
            counts = {}
            for e in U:
                u, v = g.edges[e]
                for a, b in ((u, v), (v, u)):
                    for c in self.res_v.get(a, ()):
                        counts[(b, c)] = counts.get((b, c), 0) + 1
            R = max(counts.values(), default=0)
        product = {e: self.lists[e] | _reserved_at(self.res_v, g.edges[e]) for e in range(g.num_edges)}
        reservation: Reservation = build_reservation(g, product, self.res_v)
        step = StepParams(L, N, R, self.p, self.ell, 1.0, math.log(self.delta))
        return NibbleState(g, reservation, dict(self.gamma), dict(self.lists), step)


def _reserved_at(res_v, pair) -> frozenset[TwinColour]:
    return frozenset(res_v.get(pair[0], frozenset()) | res_v.get(pair[1], frozenset()))


def _colour(obj) -> TwinColour:
    if not (isinstance(obj, list) and len(obj) == 2 and obj[1] in (1, 2)):
        raise GraphFormatError(f"colour must be [base, 1|2], got {obj!r}")
    return TwinColour(int(obj[0]), int(obj[1]))


def _edge_of(g: Graph, key) -> int:
    if isinstance(key, str):
        u, v = (int(x) for x in key.split("-"))
    else:
        u, v = key
    if not g.has_edge(u, v):
        raise GraphFormatError(f"unknown edge {u}-{v}")
    return g.edge_id(u, v)


def instance_from_json(payload: dict) -> FrozenInstance:
    try:
        g = Graph.from_edges(int(payload["n"]), [tuple(e) for e in payload["edges"]])
        gamma = {_edge_of(g, k): _colour(c) for k, c in payload.get("gamma", {}).items()}
        lists = {e: frozenset() for e in range(g.num_edges)}
        for k, cs in payload.get("lists", {}).items():
            e = _edge_of(g, k)
            if e not in gamma:
                lists[e] = frozenset(_colour(c) for c in cs)
        res_v = {int(v): frozenset(_colour(c) for c in cs) for v, cs in payload.get("reserve", {}).items()}
        focus = payload["focus"]
        path = payload.get("path")
        return FrozenInstance(
            name=payload.get("name", "instance"),
            graph=g,
            gamma=gamma,
            lists=lists,
            res_v=res_v,
            p=float(payload.get("p", 0.25)),
            ell=int(payload.get("ell", 2)),
            edge=_edge_of(g, focus["edge"]),
            vertex=int(focus["vertex"]),
            colour=_colour(focus["colour"]),
            delta=float(payload.get("delta", max(g.max_degree, 2))),
            L=payload.get("L"),
            N=payload.get("N"),
            R=payload.get("R"),
            path=tuple(path) if path is not None else None,
            reserve_colour=_colour(focus["reserve_colour"]) if "reserve_colour" in focus else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, GraphFormatError):
            raise
        raise GraphFormatError(f"bad instance: {exc}") from exc


def instance_to_json(inst: FrozenInstance) -> dict:
    g = inst.graph
    key = lambda e: f"{g.edges[e][0]}-{g.edges[e][1]}"  # noqa: E731
    out = {
        "name": inst.name,
        "n": g.vertex_count,
        "edges": [list(e) for e in g.edges],
        "gamma": {key(e): list(c) for e, c in sorted(inst.gamma.items())},
        "lists": {key(e): [list(c) for c in sorted(cs)] for e, cs in sorted(inst.lists.items()) if e not in inst.gamma},
        "reserve": {str(v): [list(c) for c in sorted(cs)] for v, cs in sorted(inst.res_v.items()) if cs},
        "p": inst.p,
        "ell": inst.ell,
        "delta": inst.delta,
        "focus": {"edge": list(g.edges[inst.edge]), "vertex": inst.vertex, "colour": list(inst.colour)},
    }
    if inst.reserve_colour is not None:
        out["focus"]["reserve_colour"] = list(inst.reserve_colour)
    for name in ("L", "N", "R"):
        if getattr(inst, name) is not None:
            out[name] = getattr(inst, name)
    if inst.path is not None:
        out["path"] = list(inst.path)
    return out


def _palette(k: int) -> frozenset[TwinColour]:
    return frozenset(TwinColour(b, c) for b in range(k) for c in (1, 2))


def danger_path_instance(p: float, L: int, k: int) -> FrozenInstance:
    """A bare path of ``k`` uncoloured edges whose lists hold the alternating colours plus fillers."""
    c = TwinColour(0, 1)
    g = Graph.from_edges(k + 2, [(j, j + 1) for j in range(k)] + [(0, k + 1)])
    lists = {}
    for j in range(k):
        need = c.twin if j % 2 == 0 else c
        fillers = [TwinColour(b, 1) for b in range(1, L)]
        lists[g.edge_id(j, j + 1)] = frozenset([need, *fillers[: L - 1]])
    edge = g.edge_id(0, k + 1)
    lists[edge] = frozenset([c, *[TwinColour(b, 2) for b in range(1, L)]])
    return FrozenInstance(
        name=f"path_p{p}_L{L}_k{k}", graph=g, gamma={}, lists=lists, res_v={}, p=p, ell=k,
        edge=edge, vertex=0, colour=c, delta=max(g.max_degree, 2), L=L, path=tuple(range(k + 1)),
    )


def builtin_instances() -> dict[str, FrozenInstance]:
    """Frozen states used by the test suite and available on the command line."""
    out: dict[str, FrozenInstance] = {}

    g = Graph.from_edges(2, [(0, 1)])
    c = TwinColour(0, 1)
    out["isolated_edge"] = FrozenInstance(
        "isolated_edge", g, {}, {0: frozenset([c])}, {}, p=0.999, ell=2, edge=0, vertex=0, colour=c, delta=2,
    )

    # star K_{1,4} with the full palette of 3 base colours on every leaf edge
    g = Graph.from_edges(5, [(0, j) for j in range(1, 5)])
    lists = {e: _palette(3) for e in range(g.num_edges)}
    res = {j: frozenset([TwinColour(5, 1)]) for j in range(1, 5)}
    out["star"] = FrozenInstance(
        "star", g, {}, lists, res, p=0.25, ell=2, edge=0, vertex=0, colour=TwinColour(1, 1), delta=4,
        reserve_colour=TwinColour(5, 1),
    )

    # two interleaved triangles of hubs with three precoloured edges; lists are
    # the palette minus the colours already used at an endpoint, so sizes differ
    edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 6), (2, 6), (4, 6), (1, 7), (3, 7), (5, 7)]
    g = Graph.from_edges(8, edges)
    gamma = {
        g.edge_id(1, 2): TwinColour(0, 2),
        g.edge_id(3, 4): TwinColour(1, 1),
        g.edge_id(0, 6): TwinColour(2, 2),
    }
    lists = {}
    for e in range(g.num_edges):
        blocked = {gamma[f] for x in g.edges[e] for f in g.adjacency[x] if f in gamma}
        lists[e] = frozenset() if e in gamma else _palette(4) - blocked
    reserve = TwinColour(7, 1)
    res = {1: frozenset([reserve]), 3: frozenset([reserve]), 5: frozenset([reserve]), 6: frozenset([reserve])}
    out["generic"] = FrozenInstance(
        "generic", g, gamma, lists, res, p=0.25, ell=3, edge=g.edge_id(3, 7), vertex=7,
        colour=TwinColour(0, 1), delta=4, reserve_colour=reserve,
    )

    # a 4-cycle where vertex 3 reserves c; the path 0-1-2-3 can turn c'/c/c' and
    # make c dangerous for the closing edge 0-3, so Z(0, c) is actually exercised
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    c = TwinColour(0, 1)
    filler = TwinColour(1, 1)
    lists = {
        g.edge_id(0, 1): frozenset([c.twin, filler]),
        g.edge_id(1, 2): frozenset([c, filler.twin]),
        g.edge_id(2, 3): frozenset([c.twin, filler]),
        g.edge_id(0, 3): frozenset([filler, filler.twin]),
    }
    out["reserve_square"] = FrozenInstance(
        "reserve_square", g, {}, lists, {3: frozenset([c])}, p=0.5, ell=3, edge=g.edge_id(0, 3), vertex=0,
        colour=filler, delta=2, reserve_colour=c,
    )

    for p, L, k in ((0.25, 2, 1), (0.25, 4, 2), (0.5, 3, 2)):
        inst = danger_path_instance(p, L, k)
        out[inst.name] = inst
    return out


# ---------------------------------------------------------------- trials


def _trial_rng(seed: int, suite: str, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _SUITE_TAG[suite], t]))


def _stats_for(suite: str, inst: FrozenInstance, state: NibbleState, plan, out) -> list[float]:
    g = inst.graph
    e, v, c = inst.edge, inst.vertex, inst.colour
    if suite == "retention":
        assigned = e in out.assigned
        # R'(v, c) for the reserved colour: uncoloured uv after step IV with c in Res(u)
        r_prime = sum(
            1 for f in g.adjacency[v]
            if f not in state.gamma and f not in out.retained and inst.rc in inst.res_v.get(g.other(f, v), ())
            and state.lists[f]
        )
        return [float(e in out.retained), float(assigned), float(assigned and e in out.retained), float(r_prime)]
    if suite == "listkeep":
        key = (v, c)
        kept = key not in out.retained_by and key not in out.vq_fired
        return [float(kept), float(len(out.lists_after_update.get(e, ())))]
    if suite == "nstar":
        members = plan.nb.get((v, c), [])
        nstar = set()
        for f in members:
            u = g.other(f, v)
            if f in out.retained:
                continue
            if (u, c) in out.retained_by or (u, c) in out.vq_fired:
                continue
            nstar.add(f)
        nprime = {
            f for f in members
            if f not in out.retained and c in out.lists_after_update.get(f, ())
        }
        return [float(len(nstar)), float(not nprime <= nstar)]
    if suite == "danger":
        x = len(out.tallies.X.get(e, ()))
        y = len(out.tallies.Y.get((v, c), ()))
        z = len(out.tallies.Z.get((v, inst.rc), ()))
        hit = 0.0
        if inst.path is not None:
            colouring = dict(state.gamma)
            colouring.update(out.assigned)
            u0 = inst.path[0]
            other = g.other(e, u0)
            hit = float(is_dangerous(g, inst.path, colouring, u0, other, inst.colour))
        return [float(x), float(y), float(z), hit]
    raise ValueError(f"unknown suite {suite!r}")


def _run_chunk(suite: str, inst: FrozenInstance, seed: int, start: int, stop: int) -> np.ndarray:
    state = inst.state()
    plan = prepare_iteration(state)
    rows = []
    for t in range(start, stop):
        out = run_iteration(state, _trial_rng(seed, suite, t), plan, with_z=(suite == "danger"), with_stats=False)
        rows.append(_stats_for(suite, inst, state, plan, out))
    return np.array(rows, dtype=float).reshape(stop - start, -1)


CHUNK = 5000


def run_trials(suite: str, inst: FrozenInstance, trials: int, seed: int, workers: int = 1) -> np.ndarray:
    bounds = [(s, min(s + CHUNK, trials)) for s in range(0, trials, CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chunk, *zip(*[(suite, inst, seed, a, b) for a, b in bounds])))
    else:
        parts = [_run_chunk(suite, inst, seed, a, b) for a, b in bounds]
    return np.concatenate(parts) if parts else np.zeros((0, 4))


def mc_retention(inst: FrozenInstance, trials: int, seed: int, workers: int = 1, k: float = 4.0) -> list[McReport]:
    state = inst.state()
    step = state.step
    data = run_trials("retention", inst, trials, seed, workers)
    r2 = step.retain**2
    conditional = data[data[:, 1] == 1, 2]
    return [
        summarize("retention", data[:, 0], inst.p * r2, "equal", k),
        summarize("conditional_retention", conditional, r2, "equal", k),
        summarize("reserve_prime", data[:, 3], step.R * step.keep, "upper", k),
    ]


def mc_list_keep(inst: FrozenInstance, trials: int, seed: int, workers: int = 1, k: float = 4.0) -> list[McReport]:
    step = inst.state().step
    data = run_trials("listkeep", inst, trials, seed, workers)
    return [
        summarize("endpoint_keep", data[:, 0], step.keep, "equal", k),
        summarize("list_prime", data[:, 1], step.L * step.keep**2, "lower", k),
    ]


def mc_nstar(inst: FrozenInstance, trials: int, seed: int, workers: int = 1, k: float = 4.0) -> list[McReport]:
    step = inst.state().step
    data = run_trials("nstar", inst, trials, seed, workers)
    bound = step.N * step.keep * (1 - step.p * step.retain**2) + 1
    subset = McReport("nstar_subset_violations", len(data), float(data[:, 1].sum()), 0.0, 0.0, "equal", k)
    return [summarize("nstar", data[:, 0], bound, "upper", k), subset]


def mc_danger(inst: FrozenInstance, trials: int, seed: int, workers: int = 1, k: float = 4.0) -> list[McReport]:
    data = run_trials("danger", inst, trials, seed, workers)
    p = inst.p
    reports = [
        summarize("X", data[:, 0], 4 * p, "upper", k),
        summarize("Y", data[:, 1], 4 * p, "upper", k),
        summarize("Z", data[:, 2], 4 * p * math.log(inst.delta), "upper", k),
    ]
    if inst.path is not None:
        lengths = [len(inst.lists[inst.graph.edge_id(a, b)]) for a, b in zip(inst.path, inst.path[1:])]
        target = math.prod(p / L for L in lengths)
        reports.append(summarize("path_danger", data[:, 3], target, "equal", k))
    return reports


SUITE_FUNCTIONS = {
    "retention": mc_retention,
    "listkeep": mc_list_keep,
    "nstar": mc_nstar,
    "danger": mc_danger,
}


def load_instance(spec: str) -> FrozenInstance:
    """``builtin:<name>`` or a path to an instance JSON file."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        table = builtin_instances()
        if name not in table:
            raise GraphFormatError(f"unknown builtin instance {name!r}; choose from {sorted(table)}")
        return table[name]
    with open(spec, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"instance is not valid JSON: {exc.msg}", exc.lineno) from exc
    return instance_from_json(payload)
