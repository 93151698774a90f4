import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from linarb.graph import Graph, verify_decomposition
from linarb.instances import gnp
from linarb.oracle import (
    SizeLimitError,
    brute_force_list_2colouring,
    connected_graphs,
    conjecture_scan,
    exact_linear_arboricity,
    linear_arboricity_lower_bound,
    partition_into_linear_forests,
    subset_linear_arboricity,
)

from conftest import complete, cycle, path


@pytest.mark.parametrize("g, la", [
    (path(5), 1),
    (cycle(5), 2),
    (complete(4), 2),
    (complete(6), 3),
    (Graph.from_edges(2, [(0, 1)]), 1),
    (cycle(4), 2),
    (Graph.from_edges(3, []), 0),
])
def test_known_values(g, la):
    assert exact_linear_arboricity(g) == la
    if g.num_edges <= 15:
        assert subset_linear_arboricity(g) == la


def test_partition_is_a_decomposition():
    g = complete(5)
    k = exact_linear_arboricity(g)
    assign = partition_into_linear_forests(g, k)
    d: dict[int, set[int]] = {}
    for e, c in enumerate(assign):
        d.setdefault(c, set()).add(e)
    assert len(d) == k and verify_decomposition(g, d).passed
    assert partition_into_linear_forests(g, k - 1) is None


def test_lower_bound():
    assert linear_arboricity_lower_bound(complete(6)) == 3
    assert linear_arboricity_lower_bound(path(4)) == 1


def test_size_limits():
    with pytest.raises(SizeLimitError):
        exact_linear_arboricity(complete(8))
    with pytest.raises(SizeLimitError):
        subset_linear_arboricity(complete(7))
    with pytest.raises(SizeLimitError):
        brute_force_list_2colouring(complete(7), {e: {0} for e in range(21)})
    with pytest.raises(SizeLimitError):
        conjecture_scan(9)


@pytest.mark.parametrize("n, count", [(1, 1), (2, 1), (3, 2), (4, 6), (5, 21), (6, 112)])
def test_enumeration_counts(n, count):
    # connected graphs on exactly n vertices: OEIS A001349
    assert sum(1 for g in connected_graphs(n) if g.vertex_count == n) == count


@settings(max_examples=40)
@given(st.integers(2, 7), st.floats(0.2, 0.9), st.integers(0, 10**6))
def test_two_routes_agree_on_random_graphs(n, density, seed):
    g = gnp(n, density, np.random.default_rng(seed))
    if g.num_edges > 14:
        return
    assert exact_linear_arboricity(g) == subset_linear_arboricity(g)


class TestListSearch:
    def test_triangle_single_colour(self):
        assert brute_force_list_2colouring(cycle(3), {e: {1} for e in range(3)}) is None

    def test_triangle_two_colours(self):
        found = brute_force_list_2colouring(cycle(3), {e: {1, 2} for e in range(3)})
        assert found is not None and verify_decomposition(cycle(3), found, {e: {1, 2} for e in range(3)}).passed

    def test_star_forces_three(self):
        g = Graph.from_edges(6, [(0, j) for j in range(1, 6)])
        assert brute_force_list_2colouring(g, {e: {1, 2} for e in range(5)}) is None
        assert brute_force_list_2colouring(g, {e: {1, 2, 3} for e in range(5)}) is not None


def test_scan_up_to_five():
    rep = conjecture_scan(5)
    assert rep.passed and rep.graphs == 1 + 1 + 2 + 6 + 21
    assert rep.to_json()["counterexamples"] == []
    # regular graphs sit above ceil(Delta / 2), e.g. the triangle
    assert any(case["edges"] == [[0, 1], [0, 2], [1, 2]] for case in rep.boundary_cases)
