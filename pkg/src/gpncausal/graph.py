"""Directed acyclic graphs over integer-indexed nodes.

Nodes are 0-based integers; labels are carried along as metadata only.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .errors import AcyclicityError, CapacityError, DomainError

MAX_ENUMERATION_NODES = 4


def node_set(nodes) -> tuple[int, ...]:
    """Canonical node set: sorted, duplicate-free tuple of ints."""
    return tuple(sorted({int(v) for v in nodes}))


@dataclass(frozen=True)
class Dag:
    n: int
    edges: frozenset = field(default_factory=frozenset)
    labels: tuple = ()

    def __post_init__(self):
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"X{i + 1}" for i in range(self.n)))
        else:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if len(self.labels) != self.n:
            raise DomainError(f"expected {self.n} labels, got {len(self.labels)}")
        for u, v in edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise DomainError(f"edge ({u}, {v}) references an unknown node")
            if u == v:
                raise AcyclicityError(f"self-loop on node {u}")
        topological_order(self)

    @classmethod
    def from_parent_sets(cls, parent_sets, labels=()):
        edges = [(u, v) for v, pa in enumerate(parent_sets) for u in pa]
        return cls(len(parent_sets), frozenset(edges), tuple(labels))

    def parent_sets(self) -> tuple[tuple[int, ...], ...]:
        return tuple(parents(self, v) for v in range(self.n))

    def sorted_edges(self):
        return sorted(self.edges)

    def key(self) -> tuple:
        """Hashable canonical identity (ignores labels)."""
        return (self.n, tuple(self.sorted_edges()))

    def to_dict(self):
        return {"n": self.n, "labels": list(self.labels), "edges": [list(e) for e in self.sorted_edges()]}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["n"]), frozenset(tuple(e) for e in d["edges"]), tuple(d.get("labels") or ()))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Dag":
        return cls.from_dict(json.loads(text))


def _check_node(dag: Dag, v):
    try:
        ok = 0 <= int(v) < dag.n
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise DomainError(f"unknown node {v!r} for a graph with {dag.n} nodes")


def parents(dag: Dag, node) -> tuple[int, ...]:
    return tuple(sorted(u for u, v in dag.edges if v == node))


def children(dag: Dag, node) -> tuple[int, ...]:
    return tuple(sorted(v for u, v in dag.edges if u == node))


def topological_order(dag: Dag) -> list[int]:
    """Kahn's algorithm, smallest available index first.

    Raises
    ------
    AcyclicityError
        If the graph has a directed cycle.
    """
    indeg = [0] * dag.n
    out = [[] for _ in range(dag.n)]
    for u, v in dag.edges:
        indeg[v] += 1
        out[u].append(v)
    ready = [v for v in range(dag.n) if indeg[v] == 0]
    order = []
    while ready:
        ready.sort()
        v = ready.pop(0)
        order.append(v)
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                ready.append(w)
    if len(order) != dag.n:
        raise AcyclicityError("graph contains a directed cycle")
    return order


def mutilate(dag: Dag, targets) -> Dag:
    """Delete every edge pointing into a node of ``targets``."""
    targets = node_set(targets)
    for t in targets:
        _check_node(dag, t)
    keep = frozenset((u, v) for u, v in dag.edges if v not in targets)
    return Dag(dag.n, keep, dag.labels)


def descendants(dag: Dag, sources) -> tuple[int, ...]:
    """Nodes reachable from any source by a directed path of length >= 1."""
    out = [[] for _ in range(dag.n)]
    for u, v in dag.edges:
        out[u].append(v)
    seen = set()
    stack = list(node_set(sources))
    for s in stack:
        _check_node(dag, s)
    while stack:
        u = stack.pop()
        for w in out[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return node_set(seen)


def has_directed_path(dag: Dag, source, target) -> bool:
    _check_node(dag, source)
    _check_node(dag, target)
    return int(target) in descendants(dag, [source])


def enumerate_dags(n: int, labels=()) -> list[Dag]:
    """All labelled DAGs on ``n`` nodes (n <= 4).

    Brute force over one parent subset per node, keeping the acyclic
    assignments; ordering is deterministic.
    """
    if n > MAX_ENUMERATION_NODES:
        raise CapacityError(f"exhaustive enumeration supports n <= {MAX_ENUMERATION_NODES}, got {n}")
    if n < 1:
        raise DomainError("need at least one node")
    choices = []
    for v in range(n):
        others = [u for u in range(n) if u != v]
        choices.append([c for r in range(len(others) + 1) for c in itertools.combinations(others, r)])
    out = []
    for combo in itertools.product(*choices):
        if _acyclic_parent_sets(combo):
            out.append(Dag.from_parent_sets(combo, labels))
    return out


def _acyclic_parent_sets(parent_sets) -> bool:
    remaining = set(range(len(parent_sets)))
    while remaining:
        free = [v for v in remaining if not (set(parent_sets[v]) & remaining)]
        if not free:
            return False
        remaining.difference_update(free)
    return True
