import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpncausal import graph
from gpncausal.errors import AcyclicityError, CapacityError, DomainError
from gpncausal.gpn import PRESET_DAGS
from gpncausal.graph import Dag


def random_dag(rng, n, p=0.4):
    perm = rng.permutation(n)
    edges = {(int(perm[i]), int(perm[j])) for i in range(n) for j in range(i + 1, n) if rng.random() < p}
    return Dag(n, frozenset(edges))


def closure(dag):
    """Reachability by Floyd-Warshall on the adjacency matrix."""
    R = np.zeros((dag.n, dag.n), dtype=bool)
    for u, v in dag.edges:
        R[u, v] = True
    for k in range(dag.n):
        R |= R[:, [k]] & R[[k], :]
    return R


def brute_force_count(n):
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    count = 0
    for mask in range(1 << len(pairs)):
        edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
        try:
            Dag(n, frozenset(edges))
        except AcyclicityError:
            continue
        count += 1
    return count


def test_chain_order():
    d = Dag(3, frozenset({(0, 1), (1, 2)}))
    assert graph.topological_order(d) == [0, 1, 2]


def test_order_ties_broken_by_index():
    d = Dag(4, frozenset({(3, 0)}))
    assert graph.topological_order(d) == [1, 2, 3, 0]


def test_cycle_rejected():
    with pytest.raises(AcyclicityError):
        Dag(3, frozenset({(0, 1), (1, 2), (2, 0)}))
    with pytest.raises(AcyclicityError):
        Dag(2, frozenset({(1, 1)}))


def test_five_node_preset_order_respects_edges():
    d = PRESET_DAGS["five_node"]
    pos = {v: i for i, v in enumerate(graph.topological_order(d))}
    assert all(pos[u] < pos[v] for u, v in d.edges)


def test_random_orders_valid():
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = random_dag(rng, int(rng.integers(1, 9)))
        pos = {v: i for i, v in enumerate(graph.topological_order(d))}
        assert sorted(pos) == list(range(d.n))
        assert all(pos[u] < pos[v] for u, v in d.edges)


def test_mutilate_examples():
    d = Dag(2, frozenset({(0, 1)}))
    assert graph.mutilate(d, {1}).edges == frozenset()
    assert graph.mutilate(d, []) == d
    f = PRESET_DAGS["five_node"]
    for k in range(f.n):
        h = graph.mutilate(f, {k})
        assert graph.parents(h, k) == ()
        for v in range(f.n):
            if v != k:
                assert graph.parents(h, v) == graph.parents(f, v)
    with pytest.raises(DomainError):
        graph.mutilate(d, {5})


def test_mutilate_idempotent_and_order_valid():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d = random_dag(rng, 6)
        T = set(rng.choice(6, size=2, replace=False).tolist())
        h = graph.mutilate(d, T)
        assert graph.mutilate(h, T) == h
        pos = {v: i for i, v in enumerate(graph.topological_order(h))}
        assert all(pos[u] < pos[v] for u, v in d.edges if v not in T)


def test_parents_examples():
    d = Dag(2, frozenset({(0, 1)}))
    assert graph.parents(d, 0) == ()
    assert graph.parents(d, 1) == (0,)
    f = PRESET_DAGS["five_node"]
    for v in range(f.n):
        assert graph.parents(f, v) == tuple(sorted(u for u, w in f.edges if w == v))


@pytest.mark.parametrize("n, expected", [(1, 1), (2, 3), (3, 25), (4, 543)])
def test_enumeration_counts(n, expected):
    dags = graph.enumerate_dags(n)
    assert len(dags) == expected
    assert len({d.key() for d in dags}) == expected


@pytest.mark.parametrize("n", [1, 2, 3])
def test_enumeration_matches_brute_force(n):
    assert len(graph.enumerate_dags(n)) == brute_force_count(n)


def test_enumeration_guard():
    with pytest.raises(CapacityError):
        graph.enumerate_dags(5)


def test_directed_paths():
    d = Dag(3, frozenset({(0, 1), (1, 2)}))
    assert graph.has_directed_path(d, 0, 2)
    assert not graph.has_directed_path(d, 2, 0)
    rng = np.random.default_rng(2)
    for _ in range(100):
        d = random_dag(rng, 7)
        R = closure(d)
        for u, v in itertools.permutations(range(7), 2):
            assert graph.has_directed_path(d, u, v) == R[u, v]


def test_json_round_trip():
    d = Dag(3, frozenset({(0, 2), (1, 2)}), ("a", "b", "c"))
    assert Dag.from_json(d.to_json()) == d
    assert d.to_dict() == {"n": 3, "labels": ["a", "b", "c"], "edges": [[0, 2], [1, 2]]}


def test_node_set_canonical():
    assert graph.node_set([3, 1, 3, 2]) == (1, 2, 3)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 7))
def test_topological_order_property(seed, n):
    d = random_dag(np.random.default_rng(seed), n)
    order = graph.topological_order(d)
    pos = {v: i for i, v in enumerate(order)}
    assert all(pos[u] < pos[v] for u, v in d.edges)
    assert graph.topological_order(d) == order
