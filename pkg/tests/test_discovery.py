import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairrobust.discovery import (bic_score, correlation_matrix, discover, fisher_z_ci_test,
                                  ges_discover, partial_correlation, pc_discover)
from fairrobust.graphs import Dag, GraphError, dag_to_cpdag

NODES = ("0", "1", "2")


def all_dags(nodes=NODES):
    pairs = list(itertools.combinations(nodes, 2))
    out = []
    for choice in itertools.product((None, 0, 1), repeat=len(pairs)):
        edges = set()
        for (a, b), c in zip(pairs, choice):
            if c == 0:
                edges.add((a, b))
            elif c == 1:
                edges.add((b, a))
        try:
            out.append(Dag(nodes, frozenset(edges)))
        except GraphError:
            pass
    return out


def residual_partial_corr(values, i, j, cond):
    """Correlation of OLS residuals of i and j on cond (with intercept)."""
    A = np.column_stack([np.ones(len(values))] + [values[:, c] for c in cond])
    ri = values[:, i] - A @ np.linalg.lstsq(A, values[:, i], rcond=None)[0]
    rj = values[:, j] - A @ np.linalg.lstsq(A, values[:, j], rcond=None)[0]
    return float(np.corrcoef(ri, rj)[0, 1])


def ols_bic(values, dag):
    n = len(values)
    total = 0.0
    for v in dag.nodes:
        k = int(v)
        pa = [int(p) for p in dag.parents(v)]
        A = np.column_stack([np.ones(n)] + [values[:, p] for p in pa])
        r = values[:, k] - A @ np.linalg.lstsq(A, values[:, k], rcond=None)[0]
        total += -n * np.log(r @ r / n) - np.log(n) * (len(pa) + 1)
    return total


def chain(n, seed, w=(1.2, -1.5)):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = w[0] * x + rng.standard_normal(n)
    z = w[1] * y + rng.standard_normal(n)
    return np.column_stack([x, y, z])


def collider(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = rng.standard_normal(n)
    z = 1.1 * x - 1.3 * y + rng.standard_normal(n)
    return np.column_stack([x, y, z])


def test_exhaustive_dag_count():
    assert len(all_dags()) == 25


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([(0, 1, ()), (0, 2, (1,)), (1, 2, (0,)), (0, 1, (2,))]))
def test_partial_correlation_matches_residual_oracle(seed, case):
    i, j, cond = case
    v = chain(300, seed)
    r, singular = partial_correlation(correlation_matrix(v), i, j, list(cond))
    assert not singular
    assert r == pytest.approx(residual_partial_corr(v, i, j, cond), abs=1e-9)


def test_fisher_z_separates_chain_endpoints():
    v = chain(2000, 1)
    assert not fisher_z_ci_test(v, "0", "2").independent
    assert fisher_z_ci_test(v, "0", "2", ["1"]).p_value > 0.01


def test_fisher_z_rejects_bad_arguments():
    v = chain(50, 0)
    with pytest.raises(ValueError):
        fisher_z_ci_test(v, "0", "0")
    with pytest.raises(ValueError):
        fisher_z_ci_test(v, "0", "1", ["1"])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_bic_matches_ols_oracle_on_every_dag(seed):
    v = chain(500, seed)
    for d in all_dags():
        assert bic_score(v, d) == pytest.approx(ols_bic(v, d), rel=1e-9)


@pytest.mark.parametrize("gen,seed", [(chain, 3), (chain, 4), (collider, 5), (collider, 6)])
def test_ges_returns_class_of_exhaustive_bic_optimum(gen, seed):
    v = gen(3000, seed)
    scores = {d: ols_bic(v, d) for d in all_dags()}
    best = max(scores.values())
    winners = {dag_to_cpdag(d) for d, s in scores.items() if s > best - 1e-6}
    assert len(winners) == 1
    assert ges_discover(v) == winners.pop()


@pytest.mark.parametrize("alg", ["pc", "ges"])
def test_discover_chain_and_collider(alg):
    truth_chain = dag_to_cpdag(Dag(NODES, frozenset({("0", "1"), ("1", "2")})))
    truth_coll = dag_to_cpdag(Dag(NODES, frozenset({("0", "2"), ("1", "2")})))
    assert discover(chain(3000, 11), alg) == truth_chain
    assert discover(collider(3000, 12), alg) == truth_coll


def test_small_input_rejected():
    with pytest.raises(ValueError):
        pc_discover(chain(10, 0))
    with pytest.raises(ValueError):
        discover(chain(100, 0), "lingam")


def test_constant_column_is_isolated():
    v = chain(500, 0)
    v = np.column_stack([v, np.ones(500)])
    g = pc_discover(v)
    assert not any("3" in e for e in g.directed_edges | g.undirected_edges)
