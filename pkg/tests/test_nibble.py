import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linarb.graph import Graph, TwinColour, product_lists, uniform_lists, verify_one_edge_colouring
from linarb.instances import gnp, near_regular
from linarb.nibble import (
    EmpiricalTargets,
    IterationOutcome,
    NibbleConfig,
    NibbleError,
    NibbleState,
    ProbabilityDomainError,
    ReserveThresholds,
    StepParams,
    build_reservation,
    check_claims,
    claim_bounds,
    compute_eq,
    compute_vq,
    dangerous_pairs,
    reservation_counts,
    reserve_colours,
    reserved_tracker,
    retire_short_lists,
    run_iteration,
    run_nibble,
    substream,
    trim_lists,
)

C = TwinColour(0, 1)


def palette(k: int) -> frozenset[TwinColour]:
    return frozenset(TwinColour(b, s) for b in range(k) for s in (1, 2))


def make_state(g: Graph, lists, step: StepParams, gamma=None, res_v=None) -> NibbleState:
    product = {e: lists[e] for e in range(g.num_edges)}
    reservation = build_reservation(g, product, res_v or {})
    return NibbleState(g, reservation, dict(gamma or {}), dict(lists), step)


def step(L, N, R=0, p=0.25, ell=3, error=1.0) -> StepParams:
    return StepParams(L, N, R, p, ell, error, math.log(16))


class TestReservation:
    def test_empty_graph(self):
        g = Graph.from_edges(3, [])
        res = reserve_colours(g, {}, substream(0, 1), 5, 0.5, ReserveThresholds(0, 0, 0))
        assert res.res_e == {} and res.attempts == 1

    def test_desk_instance_within_budget(self):
        g = near_regular(50, 10, np.random.default_rng(3))
        product = product_lists(uniform_lists(g, 20))
        cfg = NibbleConfig(targets=EmpiricalTargets(max_iterations=0))
        out = run_nibble(g, product, cfg, seed=5)
        assert 1 <= out.reservation.attempts <= 100

    def test_split_of_lists(self):
        g = Graph.from_edges(3, [(0, 1), (1, 2)])
        product = {e: palette(2) for e in range(2)}
        a, b = TwinColour(0, 1), TwinColour(1, 2)
        res = build_reservation(g, product, {0: frozenset([a]), 1: frozenset([a, b]), 2: frozenset()})
        assert res.res_e[0] == {a}
        assert res.l0[0] == palette(2) - {a, b}
        assert res.res_e[1] == frozenset() and res.l0[1] == palette(2) - {a, b}

    def test_counts_match_tracker(self):
        rng = np.random.default_rng(2)
        g = gnp(20, 0.3, rng)
        product = product_lists(uniform_lists(g, 4))
        res = reserve_colours(g, product, rng, 1, 0.3, ReserveThresholds(math.inf, 0, math.inf))
        _, _, c_max = reservation_counts(g, product, res.res_v)
        tracker = reserved_tracker(g, {}, res)
        assert c_max == max((len(s) for s in tracker.values()), default=0)

    def test_tracker_definition(self):
        g = Graph.from_edges(2, [(0, 1)])
        res = build_reservation(g, {0: palette(1)}, {0: frozenset([C])})
        assert reserved_tracker(g, {}, res) == {(1, C): {0}}
        assert reserved_tracker(g, {0: C}, res) == {}

    def test_strict_thresholds(self):
        delta = math.exp(20)
        t = ReserveThresholds.strict(delta)
        assert t.c_max == pytest.approx(2 * math.sqrt(delta) * 20**4)
        assert t.b_min == pytest.approx(20**8 / 2)

    def test_budget_exhausted(self):
        g = Graph.from_edges(2, [(0, 1)])
        with pytest.raises(NibbleError) as err:
            reserve_colours(g, {0: palette(2)}, substream(0, 1), 3, 0.5, ReserveThresholds(math.inf, 100, math.inf))
        assert err.value.worst is not None


class TestCoins:
    def test_eq_zero_at_full_degree(self):
        # every colour neighbourhood has exactly N members, so nothing to equalise
        g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        lists = {e: frozenset([C]) | palette(3) for e in range(3)}
        st_ = make_state(g, lists, step(6, 2))
        assert compute_eq(st_, g.edge_id(1, 2), C) == pytest.approx(0, abs=1e-12)

    def test_eq_example(self):
        g = Graph.from_edges(2, [(0, 1)])
        st_ = make_state(g, {0: palette(8)}, step(16, 2))
        assert compute_eq(st_, 0, C) == pytest.approx(1 - (1 - 1 / 64) ** 2, abs=1e-12)
        assert compute_eq(st_, 0, C) == pytest.approx(0.03101, abs=1e-5)

    def test_vq_full(self):
        g = Graph.from_edges(3, [(0, 1), (0, 2)])
        lists = {e: palette(2) for e in range(2)}
        assert compute_vq(make_state(g, lists, step(4, 2)), 0, C) == pytest.approx(0, abs=1e-12)

    def test_vq_empty(self):
        g = Graph.from_edges(2, [(0, 1)])
        st_ = make_state(g, {0: palette(2) - {C}}, step(4, 2))
        assert compute_vq(st_, 0, C) == pytest.approx(1 - st_.step.keep)

    def test_domain_error(self):
        # more colour neighbours than the step assumes drives Eq negative
        g = Graph.from_edges(5, [(0, j) for j in range(1, 5)])
        lists = {e: palette(1) for e in range(4)}
        with pytest.raises(ProbabilityDomainError):
            compute_eq(make_state(g, lists, step(2, 1)), 0, C)


class TestIteration:
    def test_p_zero_is_identity(self):
        g = gnp(10, 0.4, np.random.default_rng(1))
        lists = {e: palette(3) for e in range(g.num_edges)}
        st_ = make_state(g, lists, step(6, 6, p=0.0))
        out = run_iteration(st_, substream(1, 2))
        assert out.gamma_next == {} and not out.activated and not out.vq_fired
        assert out.lists_next == lists

    def test_retention_requires_no_conflict(self):
        for seed in range(30):
            g = gnp(12, 0.4, np.random.default_rng(seed))
            lists = {e: palette(2) for e in range(g.num_edges)}
            st_ = make_state(g, lists, step(4, g.max_degree, p=0.2))
            try:
                out = run_iteration(st_, substream(seed, 0))
            except ProbabilityDomainError:
                continue
            assert not verify_one_edge_colouring(g, out.gamma_next)
            assert set(out.retained) <= set(out.assigned) <= set(out.activated)

    def test_assignment_not_retention_drives_removal(self):
        """An assigned edge that loses its colour to a conflict still completes a dangerous path."""
        cp = C.twin
        g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 4)])
        uv, a, b, clash = g.edge_id(0, 3), g.edge_id(0, 1), g.edge_id(2, 3), g.edge_id(0, 4)
        gamma = {g.edge_id(1, 2): C}
        lists = {e: frozenset() for e in range(g.num_edges)}
        lists.update({uv: frozenset([C]), a: frozenset([cp]), b: frozenset([cp]), clash: frozenset([cp])})
        st_ = make_state(g, lists, StepParams(1, 2, 0, 0.999, 3, 1.0, 1.0), gamma)
        for seed in range(50):
            out = run_iteration(st_, substream(seed, 0))
            if {a, b, clash} <= set(out.assigned):
                break
        else:
            pytest.fail("no draw assigned all three edges")
        assert a not in out.retained
        assert C in out.tallies.X[uv]
        assert C not in out.lists_next[uv]

    def test_assigned_edge_on_danger_is_uncoloured(self):
        cp = C.twin
        g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
        uv = g.edge_id(0, 3)
        gamma = {g.edge_id(0, 1): cp, g.edge_id(1, 2): C}
        lists = {e: frozenset() for e in range(4)}
        lists.update({uv: frozenset([C]), g.edge_id(2, 3): frozenset([cp])})
        st_ = make_state(g, lists, StepParams(1, 1, 0, 0.999, 3, 1.0, 1.0), gamma)
        out = run_iteration(st_, substream(0, 0))
        assert set(out.assigned) == {uv, g.edge_id(2, 3)}
        assert uv not in out.gamma_next


class TestClaims:
    def test_bound_arithmetic(self):
        lg = 20.0
        s = StepParams(1e4, 1e4, 1e4, 0.25, 40, lg**2, lg)
        assert claim_bounds(s)["X_max"] == pytest.approx(2e4)

    def test_zero_tallies(self):
        stats = dict.fromkeys(
            ["min_list_mid", "min_list", "max_colour_nbhd_mid", "max_colour_nbhd", "max_reserved_mid",
             "max_reserved", "max_X", "max_Y", "max_Z", "uncoloured", "live"], 0)
        stats["min_list_mid"] = stats["min_list"] = 10
        out = IterationOutcome({}, {}, None, stats, step(10, 5), [], {}, {}, {}, set(), {}, {})
        assert check_claims(out) == []

    def test_violation_reported(self):
        stats = dict.fromkeys(
            ["min_list", "max_colour_nbhd_mid", "max_colour_nbhd", "max_reserved_mid", "max_reserved",
             "max_Y", "max_Z", "uncoloured"], 0)
        stats.update(min_list_mid=1, live=3, max_X=50)
        out = IterationOutcome({}, {}, None, stats, step(10, 5), [], {}, {}, {}, set(), {}, {})
        assert {v["quantity"] for v in check_claims(out)} == {"L_prime", "X"}


class TestTrim:
    def test_equal_size(self):
        lists = {0: palette(2)}
        assert trim_lists(lists, [0], 4, substream(0, 0)) == lists

    def test_underflow(self):
        with pytest.raises(ValueError):
            trim_lists({0: palette(1)}, [0], 3, substream(0, 0))

    def test_uniform_survival(self):
        cols = frozenset(TwinColour(b, 1) for b in range(10))
        trials = 20000
        hits = np.zeros(10)
        for t in range(trials):
            kept = trim_lists({0: cols}, [0], 7.9, substream(t, 9))[0]
            assert len(kept) == 7
            for c in kept:
                hits[c.base] += 1
        sigma = math.sqrt(0.7 * 0.3 / trials)
        assert np.all(np.abs(hits / trials - 0.7) <= 3 * sigma)


def test_retirement():
    t = EmpiricalTargets(min_list=2, retire_fraction=0.5)
    lists = {0: palette(5), 1: palette(1), 2: palette(4), 3: frozenset()}
    out = retire_short_lists(lists, {}, t)
    assert out[1] == frozenset() and out[0] == lists[0] and out[2] == lists[2]


class TestRunNibble:
    def test_empty_graph(self):
        out = run_nibble(Graph.from_edges(4, []), {}, NibbleConfig(), 0)
        assert out.gamma == {} and out.transcript == [] and out.stop_reason == "no_edges"

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NibbleConfig(mode="fast")
        with pytest.raises(ValueError):
            NibbleConfig(p=1.0)
        with pytest.raises(ValueError):
            EmpiricalTargets.from_json({"colours": 3})

    def test_strict_mode_needs_astronomical_lists(self):
        g = near_regular(30, 4, np.random.default_rng(0))
        with pytest.raises(NibbleError):
            run_nibble(g, product_lists(uniform_lists(g, 6)), NibbleConfig(mode="strict"), 0)

    @pytest.mark.parametrize("seed", range(3))
    def test_desk_run_colours_most_edges(self, seed):
        g = near_regular(200, 16, np.random.default_rng(100 + seed))
        out = run_nibble(g, product_lists(uniform_lists(g, 32)), NibbleConfig(), seed)
        assert len(out.gamma) >= 0.8 * g.num_edges
        assert not verify_one_edge_colouring(g, out.gamma)
        assert not dangerous_pairs(out.state)
        assert all(row["restarts"] < 1000 for row in out.transcript)

    def test_reproducible(self):
        g = near_regular(40, 6, np.random.default_rng(1))
        product = product_lists(uniform_lists(g, 10))
        a = run_nibble(g, product, NibbleConfig(), 11)
        b = run_nibble(g, product, NibbleConfig(), 11)
        assert a.gamma == b.gamma and a.transcript == b.transcript
        c = run_nibble(g, product, NibbleConfig(workers=2), 11)
        assert a.gamma == c.gamma and a.transcript == c.transcript

    def test_restart_budget(self):
        g = near_regular(40, 6, np.random.default_rng(1))
        cfg = NibbleConfig(max_restarts=1, targets=EmpiricalTargets(slack=-10))
        with pytest.raises(NibbleError) as err:
            run_nibble(g, product_lists(uniform_lists(g, 10)), cfg, 0)
        assert err.value.iteration == 0 and err.value.worst["violations"]


@settings(max_examples=25)
@given(st.integers(4, 14), st.floats(0.2, 0.8), st.integers(2, 6), st.integers(0, 10**6))
def test_invariants_on_random_graphs(n, density, k, seed):
    g = gnp(n, density, np.random.default_rng(seed))
    cfg = NibbleConfig(check_danger=True, targets=EmpiricalTargets(reserve_prob=0.1))
    try:
        out = run_nibble(g, product_lists(uniform_lists(g, k)), cfg, seed)
    except NibbleError:
        return
    assert not verify_one_edge_colouring(g, out.gamma)
    assert all(c in out.reservation.l0[e] for e, c in out.gamma.items())
