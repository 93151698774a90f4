"""Reservation phase and the iterated random colouring procedure.

One iteration runs five steps on the uncoloured edges: activation, uniform
colour assignment, conflict resolution with an equalising uncolour coin,
list updates with an equalising removal coin, and removal of colours that
would close a twin-alternating cycle.  An iteration is accepted only when all
per-edge/per-vertex bounds hold; otherwise it is redrawn from a fresh
substream.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .graph import Graph, TwinColour, verify_one_edge_colouring
from .paths import AssignmentIndex, ColouringView, find_dangerous_assignment, has_dangerous_path
from .schedule import (
    Schedule,
    ScheduleError,
    ScheduleParams,
    build_schedule,
    default_ell,
    retain_keep,
)

log = logging.getLogger(__name__)

# substream tags
_RESERVE, _INIT_TRIM, _ITERATION = 1, 2, 3


def substream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


class NibbleError(RuntimeError):
    """Raised when a phase cannot meet its bounds within its budget."""

    def __init__(self, message: str, iteration: int | None = None, worst: dict | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.worst = worst


class ProbabilityDomainError(ValueError):
    pass


# ---------------------------------------------------------------- reservation


@dataclass(frozen=True)
class ReserveThresholds:
    a_max: float
    b_min: float
    c_max: float

    @classmethod
    def strict(cls, delta: float) -> "ReserveThresholds":
        lg = math.log(delta)
        return cls(3 * math.sqrt(delta) * lg**4, lg**8 / 2, 2 * math.sqrt(delta) * lg**4)


def strict_reserve_probability(delta: float) -> float:
    lg = math.log(delta)
    return min(1.0, lg**4 / math.sqrt(delta))


@dataclass(frozen=True)
class Reservation:
    res_v: dict[int, frozenset[TwinColour]]
    res_e: dict[int, frozenset[TwinColour]]
    l0: dict[int, frozenset[TwinColour]]
    attempts: int = 1


def build_reservation(g: Graph, product: Mapping[int, frozenset[TwinColour]], res_v, attempts: int = 1) -> Reservation:
    res_e, l0 = {}, {}
    for eid, (u, v) in enumerate(g.edges):
        ru, rv = res_v.get(u, frozenset()), res_v.get(v, frozenset())
        res_e[eid] = product[eid] & ru & rv
        l0[eid] = product[eid] - (ru | rv)
    return Reservation(dict(res_v), res_e, l0, attempts)


def reservation_counts(g: Graph, product, res_v) -> tuple[int, int, int]:
    """Worst values of the three reservation quantities: (max a, min b, max c).

    The third counts neighbours ``u`` of ``v`` with ``c`` in ``Res(u)`` for
    every colour ``c``, which is exactly the initial size of ``R(v, c)``.
    """
    a_max, b_min = 0, None
    c_count: dict[tuple[int, TwinColour], int] = defaultdict(int)
    for eid, (u, v) in enumerate(g.edges):
        ru, rv = res_v.get(u, frozenset()), res_v.get(v, frozenset())
        lst = product[eid]
        a_max = max(a_max, len(lst & (ru | rv)))
        b = len(lst & ru & rv)
        b_min = b if b_min is None else min(b_min, b)
        for c in ru:
            c_count[(v, c)] += 1
        for c in rv:
            c_count[(u, c)] += 1
    return a_max, (b_min or 0), max(c_count.values(), default=0)


def reserve_colours(
    g: Graph,
    product: Mapping[int, frozenset[TwinColour]],
    rng: np.random.Generator,
    max_attempts: int,
    q: float,
    thresholds: ReserveThresholds,
) -> Reservation:
    """Sample ``Res(v)`` colour by colour with probability ``q`` until all three bounds hold."""
    palette: list[list[TwinColour]] = [[] for _ in range(g.vertex_count)]
    for v in range(g.vertex_count):
        colours: set[TwinColour] = set()
        for eid in g.adjacency[v]:
            colours |= product[eid]
        palette[v] = sorted(colours)
    worst = None
    for attempt in range(1, max_attempts + 1):
        res_v = {}
        for v in range(g.vertex_count):
            pick = rng.random(len(palette[v])) < q
            res_v[v] = frozenset(c for c, keep in zip(palette[v], pick) if keep)
        a, b, c = reservation_counts(g, product, res_v)
        if g.num_edges == 0 or (a <= thresholds.a_max and b >= thresholds.b_min and c <= thresholds.c_max):
            return build_reservation(g, product, res_v, attempt)
        worst = {"a": a, "b": b, "c": c}
    raise NibbleError(f"reservation failed after {max_attempts} attempts", worst=worst)


def reserved_tracker(g: Graph, gamma: Mapping[int, TwinColour], reservation: Reservation) -> dict[tuple[int, TwinColour], set[int]]:
    """``R(v, c)``: uncoloured edges ``uv`` with ``c`` reserved at ``u``."""
    out: dict[tuple[int, TwinColour], set[int]] = defaultdict(set)
    for eid, (u, v) in enumerate(g.edges):
        if eid in gamma:
            continue
        for c in reservation.res_v.get(u, ()):
            out[(v, c)].add(eid)
        for c in reservation.res_v.get(v, ()):
            out[(u, c)].add(eid)
    return dict(out)


# ---------------------------------------------------------------- state


@dataclass(frozen=True)
class StepParams:
    """Parameters one iteration runs with.

    ``L`` is the (common, or minimum) list size, ``N`` and ``R`` bound the
    colour and reserve neighbourhoods, ``error`` multiplies every square-root
    deviation term.
    """

    L: float
    N: float
    R: float
    p: float
    ell: int
    error: float
    log_delta: float
    i: int = 0

    @property
    def retain(self) -> float:
        return retain_keep(self.L, self.N, self.p)[0]

    @property
    def keep(self) -> float:
        return retain_keep(self.L, self.N, self.p)[1]


@dataclass
class NibbleState:
    graph: Graph
    reservation: Reservation
    gamma: dict[int, TwinColour]
    lists: dict[int, frozenset[TwinColour]]
    step: StepParams
    i: int = 0

    def view(self) -> ColouringView:
        return ColouringView(self.graph, self.gamma, self.lists)

    def uncoloured(self) -> list[int]:
        return [e for e in range(self.graph.num_edges) if e not in self.gamma]


def colour_degrees(g: Graph, gamma, lists) -> dict[tuple[int, TwinColour], list[int]]:
    """``N(v, c)`` for every vertex/colour pair that is non-empty, members sorted."""
    nb: dict[tuple[int, TwinColour], list[int]] = defaultdict(list)
    for eid in range(g.num_edges):
        if eid in gamma:
            continue
        u, v = g.edges[eid]
        for c in lists[eid]:
            nb[(u, c)].append(eid)
            nb[(v, c)].append(eid)
    return nb


def _eq_value(step: StepParams, neighbour_survival: float) -> float:
    value = 1 - step.retain**2 / neighbour_survival
    return _probability(value, "Eq")


def _vq_value(step: StepParams, retain_mass: float) -> float:
    value = 1 - step.keep / (1 - retain_mass * step.retain**2)
    return _probability(value, "Vq")


def _probability(value: float, name: str) -> float:
    if -1e-12 < value < 0:
        return 0.0
    if 1 < value < 1 + 1e-12:
        return 1.0
    if not 0 <= value <= 1:
        raise ProbabilityDomainError(f"{name} = {value} outside [0, 1]")
    return value


def compute_eq(state: NibbleState, eid: int, c: TwinColour) -> float:
    """Equalising uncolour probability for ``eid`` assigned ``c``.

    With every list of size ``L`` this is
    ``1 - retain^2 / (1 - p/L)^(|N(u,c)| + |N(v,c)| - 2)``; unequal lists
    replace the power by the product of ``1 - p/|L(f)|`` over the other edges.
    """
    g = state.graph
    survival = 1.0
    for x in g.edges[eid]:
        for f in g.adjacency[x]:
            if f != eid and f not in state.gamma and c in state.lists[f]:
                survival *= 1 - state.step.p / len(state.lists[f])
    return _eq_value(state.step, survival)


def compute_vq(state: NibbleState, v: int, c: TwinColour) -> float:
    g = state.graph
    mass = sum(
        state.step.p / len(state.lists[f])
        for f in g.adjacency[v]
        if f not in state.gamma and c in state.lists[f]
    )
    return _vq_value(state.step, mass)


# ---------------------------------------------------------------- one iteration


@dataclass
class DangerTally:
    X: dict[int, set[TwinColour]] = field(default_factory=dict)
    Y: dict[tuple[int, TwinColour], set[int]] = field(default_factory=dict)
    Z: dict[tuple[int, TwinColour], set[int]] = field(default_factory=dict)


@dataclass
class IterationPlan:
    """Everything about an iteration that does not depend on the random draws."""

    uncoloured: list[int]
    sorted_lists: dict[int, tuple[TwinColour, ...]]
    nb: dict[tuple[int, TwinColour], list[int]]
    nb_keys: list[tuple[int, TwinColour]]
    eq: dict[tuple[int, TwinColour], float]
    vq: list[float]
    coloured_at: list[dict[TwinColour, int]]


def prepare_iteration(state: NibbleState) -> IterationPlan:
    g = state.graph
    step = state.step
    U = state.uncoloured()
    sorted_lists = {e: tuple(sorted(state.lists[e])) for e in U}
    nb = colour_degrees(g, state.gamma, state.lists)
    keys = sorted(nb)
    inv = {e: step.p / len(sorted_lists[e]) for e in U if sorted_lists[e]}
    mass = {key: sum(inv[f] for f in nb[key]) for key in keys}
    survival_at: dict[tuple[int, TwinColour], float] = {}
    for key in keys:
        prod = 1.0
        for f in nb[key]:
            prod *= 1 - inv[f]
        survival_at[key] = prod
    eq = {}
    for e in U:
        u, v = g.edges[e]
        own = 1 - inv[e] if e in inv else 1.0
        for c in sorted_lists[e]:
            # product over N(u,c) and N(v,c), each of which contains e itself
            survival = survival_at[(u, c)] * survival_at[(v, c)] / (own * own)
            eq[(e, c)] = _eq_value(step, survival)
    vq = [_vq_value(step, mass[key]) for key in keys]
    return IterationPlan(U, sorted_lists, dict(nb), keys, eq, vq, state.view().coloured_at)


@dataclass
class IterationOutcome:
    gamma_next: dict[int, TwinColour]
    lists_next: dict[int, frozenset[TwinColour]]
    tallies: DangerTally
    stats: dict[str, float]
    step: StepParams
    # instrumentation of the intermediate steps
    activated: list[int]
    assigned: dict[int, TwinColour]
    retained: dict[int, TwinColour]
    retained_by: dict[tuple[int, TwinColour], int]
    vq_fired: set[tuple[int, TwinColour]]
    lists_after_update: dict[int, frozenset[TwinColour]]
    nb_before: dict[tuple[int, TwinColour], list[int]]
    accepted: bool = False
    violations: list[dict] = field(default_factory=list)


def run_iteration(
    state: NibbleState,
    rng: np.random.Generator,
    plan: IterationPlan | None = None,
    *,
    with_z: bool = True,
    with_stats: bool = True,
) -> IterationOutcome:
    """Steps I to V on ``state``; the state itself is not modified.

    Random numbers are drawn as whole arrays indexed by sorted edge id (and by
    sorted ``(v, c)`` key for the list coin), so the outcome depends only on
    the generator state.
    """
    g = state.graph
    step = state.step
    plan = plan or prepare_iteration(state)
    U = plan.uncoloured
    gamma = state.gamma
    draws = rng.random((3, len(U)))

    # I + II
    activated: list[int] = []
    assigned: dict[int, TwinColour] = {}
    for j, e in enumerate(U):
        if draws[0, j] < step.p:
            activated.append(e)
            cols = plan.sorted_lists[e]
            if cols:
                assigned[e] = cols[min(int(draws[1, j] * len(cols)), len(cols) - 1)]

    # III
    count: dict[tuple[int, TwinColour], int] = defaultdict(int)
    for e, c in assigned.items():
        u, v = g.edges[e]
        count[(u, c)] += 1
        count[(v, c)] += 1
    retained: dict[int, TwinColour] = {}
    coloured_at = plan.coloured_at
    for j, e in enumerate(U):
        c = assigned.get(e)
        if c is None:
            continue
        u, v = g.edges[e]
        if count[(u, c)] > 1 or count[(v, c)] > 1 or c in coloured_at[u] or c in coloured_at[v]:
            continue
        if draws[2, j] < plan.eq[(e, c)]:
            continue
        retained[e] = c

    # IV
    vq_draws = rng.random(len(plan.nb_keys))
    new_lists = {e: set(plan.sorted_lists[e]) for e in U}
    retained_by: dict[tuple[int, TwinColour], int] = {}
    vq_fired: set[tuple[int, TwinColour]] = set()
    for idx, key in enumerate(plan.nb_keys):
        c = key[1]
        members = plan.nb[key]
        keeper = next((f for f in members if retained.get(f) == c), None)
        if keeper is not None:
            retained_by[key] = keeper
            for f in members:
                if f != keeper:
                    new_lists[f].discard(c)
        elif vq_draws[idx] < plan.vq[idx]:
            vq_fired.add(key)
            for f in members:
                new_lists[f].discard(c)
    lists_after_update = {e: frozenset(s) for e, s in new_lists.items()}

    # V
    index = AssignmentIndex(g, gamma, assigned)
    hits: dict[tuple[int, TwinColour], bool] = {}

    twins: dict[TwinColour, TwinColour] = {}
    at = index.at

    def hit(e: int, c: TwinColour) -> bool:
        key = (e, c)
        if key not in hits:
            u, v = g.edges[e]
            tw = twins.get(c)
            if tw is None:
                tw = twins[c] = c.twin
            # every candidate path leaves u or v through an edge of the twin colour
            if not (at[u].get(tw) or at[v].get(tw)):
                hits[key] = False
            else:
                hits[key] = find_dangerous_assignment(index, u, v, c, step.ell) is not None
        return hits[key]

    tallies = DangerTally()
    gamma_next = dict(gamma)
    gamma_next.update(retained)
    for e in U:
        for c in plan.sorted_lists[e]:
            if hit(e, c):
                tallies.X.setdefault(e, set()).add(c)
                new_lists[e].discard(c)
                if assigned.get(e) == c:
                    gamma_next.pop(e, None)
    for key in plan.nb_keys:
        c = key[1]
        ys = {f for f in plan.nb[key] if c in tallies.X.get(f, ())}
        if ys:
            tallies.Y[key] = ys
    if with_z:
        res_v = state.reservation.res_v
        for e in U:
            u, v = g.edges[e]
            for a, b in ((u, v), (v, u)):
                for c in res_v.get(b, ()):
                    if hit(e, c):
                        tallies.Z.setdefault((a, c), set()).add(e)

    lists_next = dict(state.lists)
    lists_next.update({e: frozenset(s) for e, s in new_lists.items()})
    outcome = IterationOutcome(
        gamma_next=gamma_next,
        lists_next=lists_next,
        tallies=tallies,
        stats={},
        step=step,
        activated=activated,
        assigned=assigned,
        retained=retained,
        retained_by=retained_by,
        vq_fired=vq_fired,
        lists_after_update=lists_after_update,
        nb_before=plan.nb,
    )
    if with_stats:
        outcome.stats = outcome_stats(state, outcome)
    return outcome


def _neighbourhood_sizes(g: Graph, gamma, lists, edges) -> dict[tuple[int, TwinColour], int]:
    sizes: dict[tuple[int, TwinColour], int] = defaultdict(int)
    for e in edges:
        if e in gamma:
            continue
        u, v = g.edges[e]
        for c in lists[e]:
            sizes[(u, c)] += 1
            sizes[(v, c)] += 1
    return sizes


def _reserve_sizes(g: Graph, gamma, res_v, edges) -> dict[tuple[int, TwinColour], int]:
    sizes: dict[tuple[int, TwinColour], int] = defaultdict(int)
    for e in edges:
        if e in gamma:
            continue
        u, v = g.edges[e]
        for c in res_v.get(u, ()):
            sizes[(v, c)] += 1
        for c in res_v.get(v, ()):
            sizes[(u, c)] += 1
    return sizes


def outcome_stats(state: NibbleState, out: IterationOutcome) -> dict[str, float]:
    g = state.graph
    U = [e for e in range(g.num_edges) if e not in state.gamma]
    live = [e for e in U if state.lists[e]]
    gamma_mid = dict(state.gamma)
    gamma_mid.update(out.retained)
    after = [e for e in U if e not in out.gamma_next]
    mid = [e for e in U if e not in gamma_mid]
    live_after = [e for e in live if e not in out.gamma_next]
    res_v = state.reservation.res_v
    n_mid = _neighbourhood_sizes(g, gamma_mid, out.lists_after_update, mid)
    n_next = _neighbourhood_sizes(g, out.gamma_next, out.lists_next, after)
    # edges retired before this iteration no longer take part in the reserve count
    r_mid = _reserve_sizes(g, gamma_mid, res_v, [e for e in live if e not in gamma_mid])
    r_next = _reserve_sizes(g, out.gamma_next, res_v, [e for e in live if out.lists_next[e] and e not in out.gamma_next])
    return {
        "min_list_mid": min((len(out.lists_after_update[e]) for e in live_after), default=0),
        "min_list": min((len(out.lists_next[e]) for e in live_after), default=0),
        "max_colour_nbhd_mid": max(n_mid.values(), default=0),
        "max_colour_nbhd": max(n_next.values(), default=0),
        "max_reserved_mid": max(r_mid.values(), default=0),
        "max_reserved": max(r_next.values(), default=0),
        "max_X": max((len(s) for s in out.tallies.X.values()), default=0),
        "max_Y": max((len(s) for s in out.tallies.Y.values()), default=0),
        "max_Z": max((len(s) for s in out.tallies.Z.values()), default=0),
        "uncoloured": len(after),
        "live": len(live_after),
    }


# ---------------------------------------------------------------- acceptance


@dataclass(frozen=True)
class NextTargets:
    """Bounds the state must satisfy after the iteration (next row of the schedule)."""

    L: float
    N: float
    R: float


def claim_bounds(step: StepParams) -> dict[str, float]:
    half = 0.5 * step.error
    shrink = 1 - step.p * step.retain**2
    return {
        "L_prime_min": step.L * step.keep**2 - half * math.sqrt(step.L),
        "N_prime_max": step.N * step.keep * shrink + half * math.sqrt(step.N),
        "R_prime_max": step.R * step.keep + half * math.sqrt(step.R),
        "X_max": half * math.sqrt(step.L),
        "Y_max": half * math.sqrt(step.N),
        "Z_max": half * math.sqrt(step.R),
    }


def check_claims(outcome: IterationOutcome, next_row: NextTargets | None = None) -> list[dict]:
    """Every edge/vertex/colour that breaks a per-iteration bound."""
    s = outcome.stats
    b = claim_bounds(outcome.step)
    out: list[dict] = []

    def flag(quantity, value, bound):
        out.append({"quantity": quantity, "value": value, "bound": bound})

    if s["min_list_mid"] < b["L_prime_min"] and s["live"]:
        flag("L_prime", s["min_list_mid"], b["L_prime_min"])
    if s["max_colour_nbhd_mid"] > b["N_prime_max"]:
        flag("N_prime", s["max_colour_nbhd_mid"], b["N_prime_max"])
    if s["max_reserved_mid"] > b["R_prime_max"]:
        flag("R_prime", s["max_reserved_mid"], b["R_prime_max"])
    if s["max_X"] > b["X_max"]:
        flag("X", s["max_X"], b["X_max"])
    if s["max_Y"] > b["Y_max"]:
        flag("Y", s["max_Y"], b["Y_max"])
    if s["max_Z"] > b["Z_max"]:
        flag("Z", s["max_Z"], b["Z_max"])
    if next_row is not None:
        if s["live"] and s["min_list"] < math.floor(next_row.L):
            flag("L_next", s["min_list"], math.floor(next_row.L))
        if s["max_colour_nbhd"] > next_row.N:
            flag("N_next", s["max_colour_nbhd"], next_row.N)
        if s["max_reserved"] > next_row.R:
            flag("R_next", s["max_reserved"], next_row.R)
    return out


def trim_lists(
    lists: Mapping[int, frozenset[TwinColour]],
    edges: list[int],
    target: float,
    rng: np.random.Generator,
) -> dict[int, frozenset[TwinColour]]:
    """Cut the lists of ``edges`` down to ``floor(target)`` colours, uniformly at random."""
    size = math.floor(target)
    out = dict(lists)
    for e in sorted(edges):
        cols = sorted(lists[e])
        if len(cols) < size:
            raise ValueError(f"list of edge {e} has {len(cols)} < {size} colours")
        if len(cols) > size:
            keep = rng.permutation(len(cols))[:size]
            out[e] = frozenset(cols[k] for k in sorted(keep))
    return out


# ---------------------------------------------------------------- driver


@dataclass
class EmpiricalTargets:
    """Desk-scale settings; the asymptotic constants are replaced by these."""

    reserve_prob: float = 0.05
    reserve_a_max: float | None = None
    reserve_b_min: float | None = None
    reserve_c_max: float | None = None
    slack: float = 4.0
    min_list: int = 2
    retire_fraction: float = 0.6
    stop_degree: int = 0
    max_iterations: int = 200

    @classmethod
    def from_json(cls, payload: dict) -> "EmpiricalTargets":
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown target keys: {sorted(unknown)}")
        return cls(**payload)


@dataclass
class NibbleConfig:
    mode: str = "empirical"
    p: float = 0.25
    ell: int | None = None
    max_restarts: int = 1000
    reserve_attempts: int = 100
    targets: EmpiricalTargets = field(default_factory=EmpiricalTargets)
    workers: int = 1
    check_danger: bool = False

    def __post_init__(self):
        if self.mode not in ("strict", "empirical"):
            raise ValueError("mode must be 'strict' or 'empirical'")
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be at least 1")


TRANSCRIPT_COLUMNS = ["i", "min_list", "max_colour_nbhd", "max_reserved", "max_X", "max_Y", "max_Z", "restarts"]


@dataclass
class NibbleResult:
    gamma: dict[int, TwinColour]
    reservation: Reservation
    transcript: list[dict]
    state: NibbleState
    stop_reason: str


def _empirical_thresholds(g: Graph, product, q: float, t: EmpiricalTargets) -> ReserveThresholds:
    m = max((len(s) for s in product.values()), default=0)
    mu_a = m * (1 - (1 - q) ** 2)
    mu_b = min((len(s) for s in product.values()), default=0) * q * q
    mu_c = g.max_degree * q
    return ReserveThresholds(
        t.reserve_a_max if t.reserve_a_max is not None else mu_a + 4 * math.sqrt(mu_a) + 1,
        t.reserve_b_min if t.reserve_b_min is not None else max(0.0, mu_b - 4 * math.sqrt(mu_b)),
        t.reserve_c_max if t.reserve_c_max is not None else mu_c + 4 * math.sqrt(mu_c) + 1,
    )


def _observed_step(state_graph: Graph, gamma, lists, res_v, p, ell, error, log_delta, i) -> StepParams | None:
    U = [e for e in range(state_graph.num_edges) if e not in gamma and lists[e]]
    if not U:
        return None
    L = min(len(lists[e]) for e in U)
    N = max(_neighbourhood_sizes(state_graph, gamma, lists, U).values(), default=0)
    R = max(_reserve_sizes(state_graph, gamma, res_v, U).values(), default=0)
    return StepParams(L, max(N, 1), max(R, 0), p, ell, error, log_delta, i)


def _attempt(state: NibbleState, seed: int, attempt: int, next_row: NextTargets | None):
    rng = substream(seed, _ITERATION, state.i, attempt)
    outcome = run_iteration(state, rng)
    outcome.violations = check_claims(outcome, next_row)
    outcome.accepted = not outcome.violations
    return outcome


def _run_attempts(state, seed, next_row, config: NibbleConfig, pool):
    worst = None
    j = 0
    while j < config.max_restarts:
        batch = list(range(j, min(j + max(config.workers, 1), config.max_restarts)))
        if pool is None:
            outcomes = [_attempt(state, seed, a, next_row) for a in batch]
        else:
            outcomes = list(pool.map(_attempt, [state] * len(batch), [seed] * len(batch), batch, [next_row] * len(batch)))
        for a, out in zip(batch, outcomes):
            if out.accepted:
                return a, out
            if worst is None or len(out.violations) > len(worst):
                worst = out.violations
        j = batch[-1] + 1
    raise NibbleError(
        f"iteration {state.i}: no acceptable outcome in {config.max_restarts} attempts",
        iteration=state.i,
        worst={"violations": worst[:10] if worst else []},
    )


def run_nibble(
    g: Graph,
    product: Mapping[int, frozenset[TwinColour]],
    config: NibbleConfig,
    seed: int,
) -> NibbleResult:
    """Reserve colours, then iterate accepted colouring steps.

    Strict mode follows the asymptotic schedule verbatim and stops at ``i0``;
    empirical mode measures ``L``, ``N`` and ``R`` from the current state and
    stops once the uncoloured degree reaches ``stop_degree`` or the lists run
    below ``min_list``.
    """
    t = config.targets
    delta = max(g.max_degree, 2)
    ell = config.ell or default_ell(delta)
    log_delta = math.log(delta)
    strict = config.mode == "strict"

    if strict:
        q = strict_reserve_probability(delta)
        thresholds = ReserveThresholds.strict(delta)
    else:
        q = t.reserve_prob
        thresholds = _empirical_thresholds(g, product, q, t)
    reservation = reserve_colours(g, product, substream(seed, _RESERVE), config.reserve_attempts, q, thresholds)
    gamma: dict[int, TwinColour] = {}
    lists = dict(reservation.l0)

    schedule: Schedule | None = None
    if strict:
        try:
            schedule = build_schedule(ScheduleParams(delta, config.p, ell))
        except ScheduleError as exc:
            raise NibbleError(f"strict schedule unavailable: {exc}") from exc
        row = schedule.rows[0]
        try:
            lists = trim_lists(lists, list(range(g.num_edges)), row.L, substream(seed, _INIT_TRIM))
        except ValueError as exc:
            raise NibbleError(f"strict mode needs lists of size {math.floor(row.L)}: {exc}") from exc
        step = StepParams(math.floor(row.L), row.N, row.R, config.p, ell, log_delta**2, log_delta, 0)
    else:
        lists = retire_short_lists(lists, gamma, t)
        step = _observed_step(g, gamma, lists, reservation.res_v, config.p, ell, t.slack, log_delta, 0)

    state = NibbleState(g, reservation, gamma, lists, step or StepParams(1, 1, 0, config.p, ell, t.slack, log_delta), 0)
    transcript: list[dict] = []
    stop_reason = "no_edges" if g.num_edges == 0 else ""
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        while not stop_reason:
            U = state.uncoloured()
            if not U:
                stop_reason = "all_coloured"
                break
            if strict:
                if state.i >= schedule.i0:
                    stop_reason = "i0"
                    break
                nxt = schedule.rows[state.i + 1]
                next_row = NextTargets(nxt.L, nxt.N, nxt.R)
            else:
                if step is None or not any(state.lists[e] for e in U):
                    stop_reason = "lists_exhausted"
                    break
                if _max_uncoloured_degree(g, state.gamma) <= t.stop_degree:
                    stop_reason = "degree_target"
                    break
                if state.i >= t.max_iterations:
                    stop_reason = "max_iterations"
                    break
                next_row = None
            attempt, outcome = _run_attempts(state, seed, next_row, config, pool)
            lists_next = outcome.lists_next
            remaining = [e for e in range(g.num_edges) if e not in outcome.gamma_next]
            if strict:
                lists_next = trim_lists(lists_next, remaining, next_row.L, substream(seed, _ITERATION, state.i, attempt, 1))
            else:
                lists_next = retire_short_lists(lists_next, outcome.gamma_next, t)
            _assert_extension(state, outcome.gamma_next, lists_next)
            transcript.append({
                "i": state.i,
                "min_list": outcome.stats["min_list"],
                "max_colour_nbhd": outcome.stats["max_colour_nbhd"],
                "max_reserved": outcome.stats["max_reserved"],
                "max_X": outcome.stats["max_X"],
                "max_Y": outcome.stats["max_Y"],
                "max_Z": outcome.stats["max_Z"],
                "restarts": attempt,
            })
            i = state.i + 1
            if strict:
                row = schedule.rows[i]
                step = StepParams(math.floor(row.L), row.N, row.R, config.p, ell, log_delta**2, log_delta, i)
            else:
                step = _observed_step(g, outcome.gamma_next, lists_next, reservation.res_v, config.p, ell, t.slack, log_delta, i)
            state = NibbleState(g, reservation, outcome.gamma_next, lists_next, step or state.step, i)
            if config.check_danger:
                bad = dangerous_pairs(state)
                if bad:
                    raise AssertionError(f"dangerous path survived iteration {i - 1}: {bad[:3]}")
            log.debug("iteration %d accepted after %d restarts: %s", i - 1, attempt, outcome.stats)
    finally:
        if pool is not None:
            pool.shutdown()
    return NibbleResult(state.gamma, reservation, transcript, state, stop_reason)


def retire_short_lists(lists, gamma, t: EmpiricalTargets) -> dict[int, frozenset[TwinColour]]:
    """Empty the lists that fell below ``max(min_list, retire_fraction * mean)``.

    Their edges drop out of the colouring steps and are left to the finisher;
    keeping them would drag the common list size, and with it every retention
    probability, down to the unluckiest edge.
    """
    live = [e for e, lst in lists.items() if e not in gamma and lst]
    if not live:
        return dict(lists)
    mean = sum(len(lists[e]) for e in live) / len(live)
    floor = max(t.min_list, t.retire_fraction * mean)
    out = dict(lists)
    for e in live:
        if len(lists[e]) < floor:
            out[e] = frozenset()
    return out


def _max_uncoloured_degree(g: Graph, gamma) -> int:
    deg = [0] * g.vertex_count
    for e, (u, v) in enumerate(g.edges):
        if e not in gamma:
            deg[u] += 1
            deg[v] += 1
    return max(deg, default=0)


def _assert_extension(state: NibbleState, gamma_next, lists_next) -> None:
    for e, c in state.gamma.items():
        assert gamma_next.get(e) == c, "colouring must extend the previous one"
    for e in range(state.graph.num_edges):
        if e not in gamma_next:
            assert lists_next[e] <= state.lists[e], "lists may only shrink"
    assert not verify_one_edge_colouring(state.graph, gamma_next), "colouring must stay proper"


def dangerous_pairs(state: NibbleState) -> list[tuple[int, TwinColour]]:
    """Exhaustive scan: uncoloured ``e`` and ``c`` in its list closing a twin-alternating cycle."""
    view = state.view()
    return [
        (e, c)
        for e in state.uncoloured()
        for c in sorted(state.lists[e])
        if has_dangerous_path(view, e, c)
    ]
