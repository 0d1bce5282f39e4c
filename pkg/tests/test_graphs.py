import itertools

import pytest
from hypothesis import given, settings, strategies as st

from fairrobust.graphs import (Cpdag, Dag, GraphError, NoExtension, TooManyExtensions, dag_from_dot,
                               dag_to_cpdag, edge_diff, enumerate_dags, parse_dot, skeleton,
                               v_structures)


def brute_force_class(cpdag: Cpdag) -> set[frozenset]:
    """Every orientation of the undirected edges that is acyclic and keeps the colliders."""
    und = sorted(cpdag.undirected_edges)
    target = v_structures(cpdag)
    out = set()
    for flips in itertools.product((False, True), repeat=len(und)):
        edges = set(cpdag.directed_edges)
        for (a, b), f in zip(und, flips):
            edges.add((b, a) if f else (a, b))
        try:
            d = Dag(cpdag.nodes, frozenset(edges))
        except GraphError:
            continue
        if v_structures(d) == target:
            out.add(frozenset(edges))
    return out


def test_chain_class_has_three_members():
    g = Cpdag(("a", "b", "c"), frozenset(), frozenset({("a", "b"), ("b", "c")}))
    dags = enumerate_dags(g)
    assert len(dags) == 3
    assert {d.edges for d in dags} == brute_force_class(g)


def test_triangle_class_has_six_members():
    g = Cpdag(("a", "b", "c"), frozenset(), frozenset({("a", "b"), ("b", "c"), ("a", "c")}))
    dags = enumerate_dags(g)
    assert len(dags) == 6
    assert {d.edges for d in dags} == brute_force_class(g)


def test_collider_class_is_a_single_dag():
    d = Dag(("a", "b", "c"), frozenset({("a", "c"), ("b", "c")}))
    g = dag_to_cpdag(d)
    assert g.undirected_edges == frozenset()
    assert enumerate_dags(g) == [d]


def test_meek_rule_orients_downstream_of_collider():
    d = Dag(("a", "b", "c", "e"), frozenset({("a", "c"), ("b", "c"), ("c", "e")}))
    g = dag_to_cpdag(d)
    assert ("c", "e") in g.directed_edges


def test_cap_raises():
    nodes = tuple("abcd")
    und = frozenset(itertools.combinations(nodes, 2))
    with pytest.raises(TooManyExtensions):
        enumerate_dags(Cpdag(nodes, frozenset(), und), cap=5)
    assert len(enumerate_dags(Cpdag(nodes, frozenset(), und))) == 24


def test_chordless_four_cycle_has_no_extension():
    # any orientation of an unchorded 4-cycle creates a collider or a directed cycle
    g = Cpdag(tuple("abcd"), frozenset(), frozenset({("a", "b"), ("b", "c"), ("c", "d"), ("a", "d")}))
    assert brute_force_class(g) == set()
    with pytest.raises(NoExtension):
        enumerate_dags(g)


def test_cycle_rejected():
    with pytest.raises(GraphError):
        Dag(("a", "b"), frozenset({("a", "b"), ("b", "a")}))


def test_edge_diff_counts_reversals_and_removals():
    d1 = Dag(("a", "b", "c"), frozenset({("a", "b"), ("b", "c")}))
    d2 = Dag(("a", "b", "c"), frozenset({("b", "a"), ("a", "c")}))
    assert edge_diff(d1, d2) == 3
    assert edge_diff(d1, d1) == 0


def test_dot_round_trip():
    d = Dag(("x y", "b", "c"), frozenset({("x y", "b"), ("c", "b")}))
    assert dag_from_dot(d.to_dot()) == d
    g = dag_to_cpdag(Dag(("a", "b", "c"), frozenset({("a", "b"), ("b", "c")})))
    back = parse_dot(g.to_dot())
    assert back == g


@st.composite
def random_dags(draw, max_nodes=6):
    n = draw(st.integers(2, max_nodes))
    nodes = tuple(f"v{i}" for i in range(n))
    order = draw(st.permutations(range(n)))
    edges = set()
    for i, j in itertools.combinations(range(n), 2):
        if draw(st.booleans()):
            a, b = (i, j) if order.index(i) < order.index(j) else (j, i)
            edges.add((nodes[a], nodes[b]))
    return Dag(nodes, frozenset(edges))


@settings(max_examples=80, deadline=None)
@given(random_dags())
def test_enumeration_matches_brute_force(d):
    g = dag_to_cpdag(d)
    dags = enumerate_dags(g)
    edge_sets = [x.edges for x in dags]
    assert len(set(edge_sets)) == len(edge_sets)
    assert set(edge_sets) == brute_force_class(g)
    assert d.edges in set(edge_sets)
    for x in dags:
        assert skeleton(x) == skeleton(d)
        assert dag_to_cpdag(x) == g
