"""Mixed graphs (CPDAGs), DAGs and Markov-equivalence utilities.

Nodes are identified by name; every algorithm works on node indices in the
order the nodes were given, which is also the tie-break order everywhere.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Sequence


class GraphError(ValueError):
    pass


class TooManyExtensions(GraphError):
    pass


class NoExtension(GraphError):
    pass


class _Pdag:
    """Mutable index-based partially directed graph."""

    def __init__(self, n: int, directed=(), undirected=()):
        self.n = n
        self.directed: set[tuple[int, int]] = set(directed)
        self.undirected: set[tuple[int, int]] = {(min(a, b), max(a, b)) for a, b in undirected}

    def copy(self) -> "_Pdag":
        return _Pdag(self.n, self.directed, self.undirected)

    def is_undirected(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.undirected

    def has_arrow(self, a: int, b: int) -> bool:
        return (a, b) in self.directed

    def adjacent(self, a: int, b: int) -> bool:
        return self.has_arrow(a, b) or self.has_arrow(b, a) or self.is_undirected(a, b)

    def parents(self, b: int) -> list[int]:
        return sorted(a for a, c in self.directed if c == b)

    def children(self, a: int) -> list[int]:
        return sorted(c for b, c in self.directed if b == a)

    def neighbors(self, a: int) -> list[int]:
        """Undirected neighbours."""
        return sorted({b for e in self.undirected if a in e for b in e if b != a})

    def adjacents(self, a: int) -> list[int]:
        return sorted(set(self.parents(a)) | set(self.children(a)) | set(self.neighbors(a)))

    def orient(self, a: int, b: int) -> None:
        self.undirected.discard((min(a, b), max(a, b)))
        self.directed.discard((b, a))
        self.directed.add((a, b))

    def add_undirected(self, a: int, b: int) -> None:
        self.undirected.add((min(a, b), max(a, b)))

    def remove_edge(self, a: int, b: int) -> None:
        self.directed.discard((a, b))
        self.directed.discard((b, a))
        self.undirected.discard((min(a, b), max(a, b)))

    def v_structures(self) -> set[tuple[int, int, int]]:
        out = set()
        for c in range(self.n):
            pa = self.parents(c)
            for a, b in itertools.combinations(pa, 2):
                if not self.adjacent(a, b):
                    out.add((a, c, b))
        return out

    def skeleton(self) -> set[tuple[int, int]]:
        return {(min(a, b), max(a, b)) for a, b in self.directed} | set(self.undirected)

    def directed_acyclic(self) -> bool:
        return _topological(self.n, self.directed) is not None


def _topological(n: int, edges: Iterable[tuple[int, int]]) -> list[int] | None:
    """Kahn's algorithm taking the lowest available index first; None on a cycle."""
    indeg = [0] * n
    out: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        indeg[b] += 1
        out[a].append(b)
    ready = sorted(i for i in range(n) if indeg[i] == 0)
    order = []
    while ready:
        v = ready.pop(0)
        order.append(v)
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
                ready.sort()
    return order if len(order) == n else None


def meek_closure(g: _Pdag) -> _Pdag:
    """Apply Meek's orientation rules R1-R4 until nothing changes (in place)."""
    changed = True
    while changed:
        changed = False
        for a, b in sorted(g.undirected):
            for x, y in ((a, b), (b, a)):
                if not g.is_undirected(x, y):
                    break
                if _meek_orients(g, x, y):
                    g.orient(x, y)
                    changed = True
                    break
    return g


def _meek_orients(g: _Pdag, x: int, y: int) -> bool:
    # R1: z -> x - y, z and y non-adjacent
    for z in g.parents(x):
        if not g.adjacent(z, y):
            return True
    # R2: x -> z -> y
    for z in g.children(x):
        if g.has_arrow(z, y):
            return True
    nbrs_x = g.neighbors(x)
    # R3: x - z1 -> y, x - z2 -> y, z1 and z2 non-adjacent
    cands = [z for z in nbrs_x if g.has_arrow(z, y)]
    for z1, z2 in itertools.combinations(cands, 2):
        if not g.adjacent(z1, z2):
            return True
    # R4: x - z -> w -> y with w adjacent to x, z and y non-adjacent
    for z in nbrs_x:
        for w in g.children(z):
            if g.has_arrow(w, y) and g.adjacent(x, w) and not g.adjacent(z, y):
                return True
    return False


@dataclass(frozen=True)
class Cpdag:
    nodes: tuple[str, ...]
    directed_edges: frozenset[tuple[str, str]]
    undirected_edges: frozenset[tuple[str, str]]  # stored in node order

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node names")
        pos = {v: i for i, v in enumerate(nodes)}
        for a, b in set(self.directed_edges) | set(self.undirected_edges):
            if a not in pos or b not in pos:
                raise GraphError(f"edge {a}-{b} references an unknown node")
            if a == b:
                raise GraphError(f"self-loop on {a}")
        directed = frozenset((a, b) for a, b in self.directed_edges)
        und = frozenset(
            (a, b) if pos[a] < pos[b] else (b, a) for a, b in self.undirected_edges
        )
        for a, b in directed:
            if (b, a) in directed or (a, b) in und or (b, a) in und:
                raise GraphError(f"pair {a},{b} appears more than once")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "directed_edges", directed)
        object.__setattr__(self, "undirected_edges", und)
        if _topological(len(nodes), [(pos[a], pos[b]) for a, b in directed]) is None:
            raise GraphError("directed part of the CPDAG has a cycle")

    def _pdag(self) -> _Pdag:
        pos = {v: i for i, v in enumerate(self.nodes)}
        return _Pdag(
            len(self.nodes),
            [(pos[a], pos[b]) for a, b in self.directed_edges],
            [(pos[a], pos[b]) for a, b in self.undirected_edges],
        )

    @classmethod
    def _from_pdag(cls, nodes: Sequence[str], g: _Pdag) -> "Cpdag":
        return cls(
            tuple(nodes),
            frozenset((nodes[a], nodes[b]) for a, b in g.directed),
            frozenset((nodes[a], nodes[b]) for a, b in g.undirected),
        )

    def to_dot(self) -> str:
        return _to_dot(self.nodes, _sorted_pairs(self.nodes, self.directed_edges),
                       _sorted_pairs(self.nodes, self.undirected_edges))


@dataclass(frozen=True)
class Dag:
    nodes: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    topo_order: tuple[str, ...] = ()

    def __post_init__(self):
        nodes = tuple(self.nodes)
        pos = {v: i for i, v in enumerate(nodes)}
        edges = frozenset((a, b) for a, b in self.edges)
        for a, b in edges:
            if a not in pos or b not in pos:
                raise GraphError(f"edge {a}->{b} references an unknown node")
            if a == b:
                raise GraphError(f"self-loop on {a}")
        order = _topological(len(nodes), [(pos[a], pos[b]) for a, b in edges])
        if order is None:
            raise GraphError("graph has a directed cycle")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "topo_order", tuple(nodes[i] for i in order))

    def parents(self, node: str) -> tuple[str, ...]:
        """Parents in node order."""
        return tuple(v for v in self.nodes if (v, node) in self.edges)

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(v for v in self.nodes if (node, v) in self.edges)

    def sorted_edges(self) -> list[tuple[str, str]]:
        return _sorted_pairs(self.nodes, self.edges)

    def _pdag(self) -> _Pdag:
        pos = {v: i for i, v in enumerate(self.nodes)}
        return _Pdag(len(self.nodes), [(pos[a], pos[b]) for a, b in self.edges])

    def to_dot(self) -> str:
        return _to_dot(self.nodes, self.sorted_edges(), [])

    def __str__(self) -> str:
        return ", ".join(f"{a}->{b}" for a, b in self.sorted_edges()) or "(no edges)"


def _sorted_pairs(nodes, pairs) -> list[tuple[str, str]]:
    pos = {v: i for i, v in enumerate(nodes)}
    return sorted(pairs, key=lambda e: (pos[e[0]], pos[e[1]]))


def _quote(name: str) -> str:
    return '"' + name.replace('"', '\\"') + '"'


def _to_dot(nodes, directed, undirected) -> str:
    lines = ["digraph G {"]
    lines += [f"  {_quote(v)};" for v in nodes]
    lines += [f"  {_quote(a)} -> {_quote(b)};" for a, b in directed]
    lines += [f"  {_quote(a)} -- {_quote(b)};" for a, b in undirected]
    lines.append("}")
    return "\n".join(lines) + "\n"


_NAME = r'(?:"((?:[^"\\]|\\.)*)"|([A-Za-z0-9_.\-]+))'
_EDGE_RE = re.compile(rf"^\s*{_NAME}\s*(->|--)\s*{_NAME}\s*;?\s*$")
_NODE_RE = re.compile(rf"^\s*{_NAME}\s*;?\s*$")


def _unquote(quoted, bare) -> str:
    return quoted.replace('\\"', '"') if quoted is not None else bare


def parse_dot(text: str) -> Cpdag:
    """Parse the edge-list subset of DOT written by :meth:`Cpdag.to_dot`."""
    nodes: list[str] = []
    directed, undirected = [], []

    def add(v):
        if v not in nodes:
            nodes.append(v)

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith(("digraph", "graph", "}", "//", "#")):
            continue
        m = _EDGE_RE.match(line)
        if m:
            a, b = _unquote(m.group(1), m.group(2)), _unquote(m.group(4), m.group(5))
            add(a)
            add(b)
            (directed if m.group(3) == "->" else undirected).append((a, b))
            continue
        m = _NODE_RE.match(line)
        if m:
            add(_unquote(m.group(1), m.group(2)))
            continue
        raise GraphError(f"cannot parse DOT line: {raw!r}")
    return Cpdag(tuple(nodes), frozenset(directed), frozenset(undirected))


def dag_from_dot(text: str) -> Dag:
    g = parse_dot(text)
    if g.undirected_edges:
        raise GraphError("DAG file contains undirected edges")
    return Dag(g.nodes, g.directed_edges)


def skeleton(g: Cpdag | Dag) -> set[frozenset[str]]:
    if isinstance(g, Dag):
        return {frozenset(e) for e in g.edges}
    return {frozenset(e) for e in g.directed_edges | g.undirected_edges}


def v_structures(g: Cpdag | Dag) -> set[tuple[str, str, str]]:
    """Unshielded colliders ``(a, c, b)`` with ``a`` before ``b`` in node order."""
    p = g._pdag()
    return {(g.nodes[a], g.nodes[c], g.nodes[b]) for a, c, b in p.v_structures()}


def dag_to_cpdag(d: Dag) -> Cpdag:
    """CPDAG of the equivalence class containing ``d`` (skeleton + v-structures + Meek)."""
    p = d._pdag()
    keep = {(a, c) for a, c, b in p.v_structures()} | {(b, c) for a, c, b in p.v_structures()}
    g = _Pdag(p.n, keep, [e for e in p.skeleton()
                         if (e[0], e[1]) not in keep and (e[1], e[0]) not in keep])
    meek_closure(g)
    return Cpdag._from_pdag(d.nodes, g)


def pdag_extension(nodes: Sequence[str], g: _Pdag) -> _Pdag | None:
    """Consistent DAG extension of a PDAG (Dor & Tarsi), or None if none exists."""
    work = g.copy()
    result = g.copy()
    alive = set(range(g.n))
    while alive:
        chosen = None
        for x in sorted(alive):
            if work.children(x):
                continue
            nb = work.neighbors(x)
            adj = work.adjacents(x)
            if all(all(work.adjacent(y, z) for z in adj if z != y) for y in nb):
                chosen = x
                break
        if chosen is None:
            return None
        for y in work.neighbors(chosen):
            result.orient(y, chosen)
        for y in work.adjacents(chosen):
            work.remove_edge(y, chosen)
        alive.discard(chosen)
    return result


def _is_consistent(orig_vs: set, g: _Pdag) -> bool:
    """Directed part acyclic and no unshielded collider outside the original set."""
    if not g.directed_acyclic():
        return False
    return g.v_structures() <= orig_vs


def _extensions(g: _Pdag, orig_vs: set, cap: int, found: dict) -> None:
    if not g.undirected:
        key = tuple(sorted(g.directed))
        if key not in found and g.v_structures() == orig_vs and g.directed_acyclic():
            found[key] = None
            if len(found) > cap:
                raise TooManyExtensions(f"equivalence class has more than {cap} DAGs")
        return
    a, b = min(g.undirected)
    for x, y in ((a, b), (b, a)):
        h = g.copy()
        h.orient(x, y)
        meek_closure(h)
        if _is_consistent(orig_vs, h):
            _extensions(h, orig_vs, cap, found)


def enumerate_dags(g: Cpdag, cap: int = 256) -> list[Dag]:
    """All consistent extensions of ``g``, ordered lexicographically by edge indices."""
    p = g._pdag()
    orig_vs = p.v_structures()
    if not _is_consistent(orig_vs, p):
        raise NoExtension("CPDAG has a directed cycle or inconsistent colliders")
    found: dict = {}
    _extensions(p, orig_vs, cap, found)
    if not found:
        raise NoExtension("CPDAG admits no consistent DAG extension")
    return [
        Dag(g.nodes, frozenset((g.nodes[a], g.nodes[b]) for a, b in key))
        for key in sorted(found)
    ]


def edge_diff(d1: Dag, d2: Dag) -> int:
    """Number of node pairs whose edge differs: reversed, added or removed."""
    if set(d1.nodes) != set(d2.nodes):
        raise GraphError("DAGs are over different node sets")
    pairs = {frozenset(e) for e in d1.edges} | {frozenset(e) for e in d2.edges}
    diff = 0
    for pair in pairs:
        a, b = tuple(pair)
        e1 = (a, b) if (a, b) in d1.edges else (b, a) if (b, a) in d1.edges else None
        e2 = (a, b) if (a, b) in d2.edges else (b, a) if (b, a) in d2.edges else None
        diff += e1 != e2
    return diff


__all__ = [
    "GraphError", "TooManyExtensions", "NoExtension", "Cpdag", "Dag", "parse_dot",
    "dag_from_dot", "skeleton", "v_structures", "dag_to_cpdag", "pdag_extension",
    "enumerate_dags", "edge_diff", "meek_closure",
]
