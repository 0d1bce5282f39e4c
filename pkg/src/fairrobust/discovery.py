"""Constraint-based (PC) and score-based (GES) structure discovery.

All columns, including the label, are treated as real-valued: booleans as
0/1 and counts as reals.  The CI test is Fisher's z on partial correlations
and the score is the decomposable Gaussian BIC.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .data import Dataset
from .graphs import Cpdag, Dag, _Pdag, dag_to_cpdag, meek_closure, pdag_extension

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CiResult:
    statistic: float
    p_value: float
    independent: bool
    singular: bool = False


def _as_matrix(data) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(data, Dataset):
        return np.asarray(data.values, float), data.schema.columns
    arr = np.asarray(data, float)
    return arr, tuple(str(i) for i in range(arr.shape[1]))


def correlation_matrix(values: np.ndarray) -> np.ndarray:
    sd = values.std(axis=0)
    centered = values - values.mean(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    z = centered / safe
    corr = (z.T @ z) / len(values)
    # constant columns are uncorrelated with everything
    const = sd == 0
    corr[const, :] = 0.0
    corr[:, const] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr


def partial_correlation(corr: np.ndarray, i: int, j: int, cond: Sequence[int]) -> tuple[float, bool]:
    idx = [i, j, *cond]
    sub = corr[np.ix_(idx, idx)]
    singular = False
    try:
        if np.linalg.cond(sub) > 1e12:
            raise np.linalg.LinAlgError
        prec = np.linalg.inv(sub)
    except np.linalg.LinAlgError:
        prec = np.linalg.pinv(sub)
        singular = True
    denom = np.sqrt(abs(prec[0, 0] * prec[1, 1]))
    if denom == 0:
        return 0.0, True
    return float(-prec[0, 1] / denom), singular


def _fisher_z(corr: np.ndarray, n: int, i: int, j: int, cond: Sequence[int], alpha: float) -> CiResult:
    r, singular = partial_correlation(corr, i, j, cond)
    r = min(max(r, -1 + 1e-15), 1 - 1e-15)
    z = 0.5 * np.log((1 + r) / (1 - r)) * np.sqrt(n - len(cond) - 3)
    p = float(2 * stats.norm.sf(abs(z)))
    return CiResult(float(z), p, p > alpha, singular)


def fisher_z_ci_test(data, i: str, j: str, cond: Sequence[str] = (), alpha: float = 0.05) -> CiResult:
    """Fisher-z test of ``i _||_ j | cond`` on the columns of ``data``."""
    values, names = _as_matrix(data)
    n = len(values)
    if i == j or i in cond or j in cond:
        raise ValueError("i, j must differ and lie outside the conditioning set")
    if len(cond) > n - 4:
        raise ValueError(f"conditioning set of size {len(cond)} too large for n={n}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    pos = {name: k for k, name in enumerate(names)}
    corr = correlation_matrix(values)
    return _fisher_z(corr, n, pos[i], pos[j], [pos[c] for c in cond], alpha)


def pc_discover(data: Dataset, alpha: float = 0.05) -> Cpdag:
    """PC-stable skeleton search, collider orientation, then Meek closure."""
    values, names = _as_matrix(data)
    n, d = values.shape
    if n < 20:
        raise ValueError(f"PC needs at least 20 rows, got {n}")
    corr = correlation_matrix(values)
    adj = {v: set(range(d)) - {v} for v in range(d)}
    sepset: dict[frozenset, tuple[int, ...]] = {}
    level = 0
    while any(len(adj[v]) - 1 >= level for v in range(d)) and level <= n - 4:
        snapshot = {v: sorted(adj[v]) for v in range(d)}
        for i in range(d):
            for j in snapshot[i]:
                if j not in adj[i]:
                    continue
                others = [k for k in snapshot[i] if k != j]
                if len(others) < level:
                    continue
                for cond in itertools.combinations(others, level):
                    res = _fisher_z(corr, n, i, j, cond, alpha)
                    if res.independent:
                        adj[i].discard(j)
                        adj[j].discard(i)
                        sepset[frozenset((i, j))] = cond
                        break
        level += 1

    g = _Pdag(d, undirected=[(i, j) for i in range(d) for j in adj[i] if i < j])
    for k in range(d):
        for i, j in itertools.combinations(sorted(adj[k]), 2):
            if j in adj[i] or k in sepset.get(frozenset((i, j)), ()):
                continue
            for a in (i, j):
                if g.is_undirected(a, k):
                    trial = g.copy()
                    trial.orient(a, k)
                    if trial.directed_acyclic():
                        g = trial
    meek_closure(g)
    return Cpdag._from_pdag(names, g)


class _BicScorer:
    """Cached Gaussian BIC local scores from the sample covariance."""

    def __init__(self, values: np.ndarray):
        self.n = len(values)
        self.cov = np.cov(values, rowvar=False, bias=True).reshape(values.shape[1], values.shape[1])
        self.cache: dict[tuple[int, frozenset], float] = {}

    def local(self, node: int, parents) -> float:
        key = (node, frozenset(parents))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        pa = sorted(key[1])
        var = self.cov[node, node]
        if pa:
            s_pp = self.cov[np.ix_(pa, pa)]
            s_py = self.cov[pa, node]
            coef = np.linalg.lstsq(s_pp, s_py, rcond=None)[0]
            var = var - s_py @ coef
        var = max(float(var), 1e-300)
        score = -self.n * np.log(var) - np.log(self.n) * (len(pa) + 1)
        self.cache[key] = score
        return score

    def total(self, dag_edges: set[tuple[int, int]], d: int) -> float:
        return sum(self.local(v, [a for a, b in dag_edges if b == v]) for v in range(d))


def _is_clique(g: _Pdag, nodes) -> bool:
    return all(g.adjacent(a, b) for a, b in itertools.combinations(nodes, 2))


def _semi_directed_blocked(g: _Pdag, start: int, target: int, blocked: set[int]) -> bool:
    """True if every semi-directed path start ~> target passes through ``blocked``."""
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in g.children(u) + g.neighbors(u):
            if v == target:
                return False
            if v in seen or v in blocked:
                continue
            seen.add(v)
            stack.append(v)
    return True


def _subsets(items):
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def _complete(g: _Pdag, names) -> _Pdag:
    ext = pdag_extension(names, g)
    if ext is None:
        raise RuntimeError("GES produced a PDAG without a consistent extension")
    dag = Dag(tuple(names), frozenset((names[a], names[b]) for a, b in ext.directed))
    return dag_to_cpdag(dag)._pdag()


def _best_insert(g: _Pdag, sc: _BicScorer):
    best = (0.0, None)
    for x in range(g.n):
        for y in range(g.n):
            if x == y or g.adjacent(x, y):
                continue
            nbrs_y = g.neighbors(y)
            na = [t for t in nbrs_y if g.adjacent(t, x)]
            t0 = [t for t in nbrs_y if not g.adjacent(t, x)]
            pa_y = g.parents(y)
            for t in _subsets(t0):
                cond = set(na) | set(t)
                if not _is_clique(g, cond):
                    continue
                if not _semi_directed_blocked(g, y, x, cond):
                    continue
                base = cond | set(pa_y)
                delta = sc.local(y, base | {x}) - sc.local(y, base)
                if delta > best[0] + 1e-9:
                    best = (delta, (x, y, t))
    return best


def _best_delete(g: _Pdag, sc: _BicScorer):
    best = (0.0, None)
    for x in range(g.n):
        for y in range(g.n):
            if x == y or not (g.has_arrow(x, y) or g.is_undirected(x, y)):
                continue
            na = [t for t in g.neighbors(y) if g.adjacent(t, x)]
            pa_y = set(g.parents(y)) - {x}
            for h in _subsets(na):
                rest = set(na) - set(h)
                if not _is_clique(g, rest):
                    continue
                base = rest | pa_y
                delta = sc.local(y, base) - sc.local(y, base | {x})
                if delta > best[0] + 1e-9:
                    best = (delta, (x, y, h))
    return best


def ges_discover(data: Dataset, max_steps: int = 1000) -> Cpdag:
    """Greedy equivalence search: forward insertions then backward deletions."""
    values, names = _as_matrix(data)
    n, d = values.shape
    if n < 20:
        raise ValueError(f"GES needs at least 20 rows, got {n}")
    sc = _BicScorer(values)
    g = _Pdag(d)
    for _ in range(max_steps):
        delta, op = _best_insert(g, sc)
        if op is None:
            break
        x, y, t = op
        g.orient(x, y)
        for z in t:
            g.orient(z, y)
        g = _complete(g, names)
        log.debug("GES insert %s -> %s (T=%s) gain %.3f", names[x], names[y], t, delta)
    for _ in range(max_steps):
        delta, op = _best_delete(g, sc)
        if op is None:
            break
        x, y, h = op
        g.remove_edge(x, y)
        for z in h:
            if g.is_undirected(y, z):
                g.orient(y, z)
            if g.is_undirected(x, z):
                g.orient(x, z)
        g = _complete(g, names)
        log.debug("GES delete %s -> %s (H=%s) gain %.3f", names[x], names[y], h, delta)
    return Cpdag._from_pdag(names, g)


def bic_score(data: Dataset, dag: Dag) -> float:
    """Total Gaussian BIC of ``dag`` on ``data`` (higher is better)."""
    values, names = _as_matrix(data)
    pos = {v: i for i, v in enumerate(names)}
    sc = _BicScorer(values)
    return sc.total({(pos[a], pos[b]) for a, b in dag.edges}, len(names))


def discover(data: Dataset, algorithm: str, alpha: float = 0.05) -> Cpdag:
    algorithm = algorithm.lower()
    if algorithm == "pc":
        return pc_discover(data, alpha)
    if algorithm == "ges":
        return ges_discover(data)
    raise ValueError(f"unknown discovery algorithm {algorithm!r}")
